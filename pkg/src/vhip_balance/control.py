"""Balance controllers: capture-input feedback plus two baseline laws.

The main controller commands the capture-input pair plus a gain feedback on
its error to the target pair, plus a nonlinear ZMP compensation that cancels
the cross-coupling; the two gains are maximized per step by a pair of scalar
linear programs whose constraints are exactly the input bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _fast
from .indicators import DcmState, Ici, dcm_update, ici
from .model import ComState, ConstraintSet, ControlInput, PolicyFailure, phi


class LpInfeasible(ValueError):
    """Empty feasible interval in a scalar linear program."""


class GainInfeasible(PolicyFailure):
    """Gain selection failed; carries the stage that became infeasible."""

    reason = "gain-infeasible"

    def __init__(self, stage: str):
        super().__init__(f"gain selection infeasible at stage {stage!r}")
        self.stage = stage


@dataclass(frozen=True)
class GainConfig:
    """Bounds and knobs of the per-step gain selection."""

    epsilon: float = 1e-3
    m_max: float = 10.0
    gamma: float = 0.1
    weight_c: float = 1.0  # weight of the superseded joint objective; unused

    def __post_init__(self):
        if not 0.0 < self.epsilon < self.m_max:
            raise ValueError("need 0 < epsilon < m_max")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")


@dataclass(frozen=True)
class BalanceTarget:
    """Desired CoM rest position together with its input-space image."""

    c_d: np.ndarray
    xi_d: Ici

    @classmethod
    def for_position(cls, c_d, cs: ConstraintSet) -> "BalanceTarget":
        c_d = np.asarray(c_d, dtype=float)
        xi = phi(c_d, cs.g)
        target = Ici(xi_p=float(xi[0]), xi_lambda=float(xi[1]))
        if not cs.contains(target.as_input()):
            raise ValueError(
                f"target position {c_d.tolist()} maps outside the input bounds"
            )
        return cls(c_d=c_d, xi_d=target)


@dataclass(frozen=True)
class ScalarLP:
    """Maximize k over {a*k <= b for all (a, b)} intersected with [lo, hi]."""

    constraints: tuple[tuple[float, float], ...]
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise ValueError("box must satisfy lo <= hi")


def lp_max_scalar(lp: ScalarLP) -> float:
    """Maximal feasible k, or LpInfeasible if the interval is empty."""
    lo, hi = lp.lo, lp.hi
    for a, b in lp.constraints:
        if a > 0.0:
            hi = min(hi, b / a)
        elif a < 0.0:
            lo = max(lo, b / a)
        elif b < 0.0:
            raise LpInfeasible(f"void constraint 0*k <= {b}")
    if lo > hi:
        raise LpInfeasible(f"empty interval [{lo}, {hi}]")
    return hi


def eta_p(x: ComState, xi: Ici, xi_lambda_d: float, k2: float, g: float) -> float:
    """Nonlinear ZMP compensation for a given stiffness gain."""
    dl = xi.xi_lambda - xi_lambda_d
    if xi.xi_lambda + k2 * dl <= 0.0:
        raise ValueError("non-positive commanded stiffness: gain infeasible")
    return _fast.eta_val(x.c_z, xi.xi_lambda, x.dc_x, xi_lambda_d, k2, g)


def _stage_lps(
    x: ComState, xi: Ici, target: BalanceTarget, cfg: GainConfig, cs: ConstraintSet
) -> tuple[ScalarLP, ScalarLP | None]:
    """The two scalar programs, for inspection and testing."""
    dl = xi.xi_lambda - target.xi_d.xi_lambda
    al = _fast.alpha_val(x.c_z, xi.xi_lambda, cs.g)
    gp = cfg.gamma * (cs.p_max - xi.xi_p)
    gm = cfg.gamma * (cs.p_min - xi.xi_p)
    lp2 = ScalarLP(
        constraints=(
            (dl, cs.lambda_max - xi.xi_lambda),
            (-dl, xi.xi_lambda - cs.lambda_min),
            (-dl * (al * x.dc_x + gp), gp * xi.xi_lambda),
            (dl * (al * x.dc_x + gm), -gm * xi.xi_lambda),
        ),
        lo=cfg.epsilon,
        hi=cfg.m_max,
    )
    try:
        k2 = lp_max_scalar(lp2)
    except LpInfeasible:
        return lp2, None
    eta = eta_p(x, xi, target.xi_d.xi_lambda, k2, cs.g)
    dp = xi.xi_p - target.xi_d.xi_p
    lp1 = ScalarLP(
        constraints=(
            (dp, cs.p_max - xi.xi_p - eta),
            (-dp, xi.xi_p + eta - cs.p_min),
        ),
        lo=cfg.epsilon,
        hi=cfg.m_max,
    )
    return lp2, lp1


def solve_gains(
    x: ComState, xi: Ici, target: BalanceTarget, cfg: GainConfig, cs: ConstraintSet
) -> tuple[float, float]:
    """Maximal feasible gains (k1, k2) at the configured gain floor."""
    k1, k2, _eta, code = _fast.gains_once(
        xi.xi_p,
        xi.xi_lambda,
        x.dc_x,
        x.c_z,
        target.xi_d.xi_p,
        target.xi_d.xi_lambda,
        cfg.epsilon,
        cfg.m_max,
        cfg.gamma,
        cs.p_min,
        cs.p_max,
        cs.lambda_min,
        cs.lambda_max,
        cs.g,
    )
    if code == 1:
        raise GainInfeasible("stiffness-gain")
    if code == 2:
        raise GainInfeasible("zmp-gain")
    return k1, k2


def ici_policy(
    x: ComState, target: BalanceTarget, cfg: GainConfig, cs: ConstraintSet
) -> ControlInput:
    """Capture-input feedback law; retries once at epsilon/10 before failing."""
    u, _diag = _ici_policy_diag(x, target, cfg, cs)
    return u


def _ici_policy_diag(
    x: ComState, target: BalanceTarget, cfg: GainConfig, cs: ConstraintSet
) -> tuple[ControlInput, tuple[float, float, float]]:
    xi_p, xi_lam = _fast.ici_vals(x.c_x, x.c_z, x.dc_x, x.dc_z, cs.g)
    k1, k2, eta, code = _fast.ici_gains(
        xi_p,
        xi_lam,
        x.dc_x,
        x.c_z,
        target.xi_d.xi_p,
        target.xi_d.xi_lambda,
        cfg.epsilon,
        cfg.m_max,
        cfg.gamma,
        cs.p_min,
        cs.p_max,
        cs.lambda_min,
        cs.lambda_max,
        cs.g,
    )
    if code == 1:
        raise GainInfeasible("stiffness-gain")
    if code == 2:
        raise GainInfeasible("zmp-gain")
    u = ControlInput(
        p=xi_p + k1 * (xi_p - target.xi_d.xi_p) + eta,
        lambda_=xi_lam + k2 * (xi_lam - target.xi_d.xi_lambda),
    )
    return u, (k1, k2, eta)


def icp_policy(
    x: ComState, target: BalanceTarget, k: float, cs: ConstraintSet
) -> ControlInput:
    """Capture-point feedback holding height; both channels clamped."""
    p, lam = _fast.icp_inputs(
        x.c_x,
        x.c_z,
        x.dc_x,
        float(target.c_d[0]),
        k,
        cs.p_min,
        cs.p_max,
        cs.lambda_min,
        cs.lambda_max,
        cs.g,
    )
    return ControlInput(p=p, lambda_=lam)


def dcm_policy(
    x: ComState, dcm: DcmState, target: BalanceTarget, k: float, cs: ConstraintSet
) -> ControlInput:
    """Divergent-component baseline law; both channels clamped."""
    p, lam = _fast.dcm_inputs(
        dcm.omega_dcm,
        x.c_x,
        x.c_z,
        x.dc_x,
        x.dc_z,
        float(target.c_d[0]),
        float(target.c_d[1]),
        k,
        cs.p_min,
        cs.p_max,
        cs.lambda_min,
        cs.lambda_max,
        cs.g,
    )
    return ControlInput(p=p, lambda_=lam)


class PureIciPolicy:
    """Feed the capture input straight back; stationary by construction."""

    def __init__(self, g: float):
        self.g = g

    def __call__(self, x: ComState) -> ControlInput:
        return ici(x, self.g).as_input()


class IciBalanceController:
    """Stateful wrapper around the capture-input feedback law.

    Records the gains and compensation of the latest evaluation so rollouts
    can log them.  ``zero_gains`` is a test hook that bypasses gain selection
    and reduces the law to the pure capture-input policy.
    """

    def __init__(
        self,
        target: BalanceTarget,
        cfg: GainConfig,
        cs: ConstraintSet,
        zero_gains: bool = False,
    ):
        self.target = target
        self.cfg = cfg
        self.cs = cs
        self.zero_gains = zero_gains
        self.last_k1 = math.nan
        self.last_k2 = math.nan
        self.last_eta_p = math.nan

    def __call__(self, x: ComState) -> ControlInput:
        if self.zero_gains:
            self.last_k1 = 0.0
            self.last_k2 = 0.0
            self.last_eta_p = 0.0
            return ici(x, self.cs.g).as_input()
        u, (k1, k2, eta) = _ici_policy_diag(x, self.target, self.cfg, self.cs)
        self.last_k1 = k1
        self.last_k2 = k2
        self.last_eta_p = eta
        return u


class IcpController:
    """Stateless capture-point baseline."""

    def __init__(self, target: BalanceTarget, gain: float, cs: ConstraintSet):
        self.target = target
        self.gain = gain
        self.cs = cs

    def __call__(self, x: ComState) -> ControlInput:
        return icp_policy(x, self.target, self.gain, self.cs)


class DcmController:
    """Divergent-component baseline owning its rate bookkeeping state."""

    def __init__(
        self,
        target: BalanceTarget,
        gain: float,
        cs: ConstraintSet,
        omega0: float,
    ):
        self.target = target
        self.gain = gain
        self.cs = cs
        self._omega0 = omega0
        self.dcm: DcmState | None = None

    def __call__(self, x: ComState) -> ControlInput:
        if self.dcm is None:
            self.dcm = DcmState.from_state(x, self._omega0)
        return dcm_policy(x, self.dcm, self.target, self.gain, self.cs)

    def after_step(self, x_new: ComState, u: ControlInput, dt: float) -> None:
        # The rate estimate is confined to the natural-frequency band of the
        # stiffness bounds, else the Riccati drift is absorbing.
        s = dcm_update(self.dcm, x_new, u, dt, self.cs.g)
        w = min(
            max(s.omega_dcm, math.sqrt(self.cs.lambda_min)),
            math.sqrt(self.cs.lambda_max),
        )
        self.dcm = DcmState.from_state(x_new, w)
