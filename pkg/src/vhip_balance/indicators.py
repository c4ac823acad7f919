"""Capture-input, capture-point and divergent-component indicators.

The central object is the instantaneous capture input: the unique input pair
that, applied as a state feedback, freezes itself and brings the pendulum to
rest.  Its stiffness component is the square of the positive root of
``c_z*w^2 + dc_z*w - g = 0``; its ZMP component is ``c_x + dc_x/w``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _fast
from .model import ComState, ConstraintSet, ControlInput, PolicyFailure


class DcmDivergence(PolicyFailure):
    """Divergence-rate bookkeeping variable left (0, inf)."""

    reason = "diverged"


@dataclass(frozen=True)
class Ici:
    """Instantaneous capture input: ZMP-like and stiffness-like components."""

    xi_p: float
    xi_lambda: float

    def __post_init__(self):
        if not (self.xi_lambda > 0.0):
            raise ValueError(f"xi_lambda must be positive, got {self.xi_lambda}")

    def as_input(self) -> ControlInput:
        return ControlInput(p=self.xi_p, lambda_=self.xi_lambda)

    def as_array(self) -> np.ndarray:
        return np.array([self.xi_p, self.xi_lambda])


@dataclass(frozen=True)
class TwoSided:
    """Bracketing pair for the ZMP component built from the stiffness bounds."""

    xi_p_plus: float
    xi_p_minus: float


@dataclass(frozen=True)
class DcmState:
    """Divergent component of motion with its own divergence rate."""

    omega_dcm: float
    xi_dcm: np.ndarray

    def __post_init__(self):
        if not (self.omega_dcm > 0.0 and math.isfinite(self.omega_dcm)):
            raise ValueError(f"divergence rate must be positive, got {self.omega_dcm}")
        object.__setattr__(self, "xi_dcm", np.asarray(self.xi_dcm, dtype=float))

    @classmethod
    def from_state(cls, x: ComState, omega_dcm: float) -> "DcmState":
        xi = x.position + x.velocity / omega_dcm
        return cls(omega_dcm, xi)


def omega(c_z: float, dc_z: float, g: float) -> float:
    """Positive root of the height quadratic; always > 0 for c_z > 0."""
    if not c_z > 0.0:
        raise ValueError(f"height must be positive, got {c_z}")
    return _fast.omega_pos(c_z, dc_z, g)


def ici(x: ComState, g: float) -> Ici:
    """Instantaneous capture input of a state."""
    xi_p, xi_lam = _fast.ici_vals(x.c_x, x.c_z, x.dc_x, x.dc_z, g)
    return Ici(xi_p, xi_lam)


def icp(c_x: float, dc_x: float, lambda_lip: float) -> float:
    """Instantaneous capture point of the fixed-height reduction."""
    if not lambda_lip > 0.0:
        raise ValueError(f"stiffness must be positive, got {lambda_lip}")
    return c_x + dc_x / math.sqrt(lambda_lip)


def two_sided(x: ComState, cs: ConstraintSet) -> TwoSided:
    """Evaluate both bracketing approximators at a state."""
    return TwoSided(
        xi_p_plus=x.c_x + x.dc_x / math.sqrt(cs.lambda_max),
        xi_p_minus=x.c_x + x.dc_x / math.sqrt(cs.lambda_min),
    )


def alpha(c_z: float, xi_lambda: float, g: float) -> float:
    """Coupling coefficient between the stiffness error and the ZMP rate."""
    return _fast.alpha_val(c_z, xi_lambda, g)


def beta(c_z: float, xi_lambda: float, g: float) -> float:
    """Positive rate coefficient of the stiffness component."""
    return _fast.beta_val(c_z, xi_lambda, g)


def ici_rate(x: ComState, u: ControlInput, g: float) -> np.ndarray:
    """Exact time derivative of the capture-input pair under input u."""
    d_p, d_lam = _fast.ici_rate_vals(
        x.c_x, x.c_z, x.dc_x, x.dc_z, u.p, u.lambda_, g
    )
    return np.array([d_p, d_lam])


def dcm_update(s: DcmState, x: ComState, u: ControlInput, dt: float, g: float) -> DcmState:
    """Advance the divergence rate by one RK4 step and refresh the component.

    The rate obeys ``dw/dt = w^2 - lambda`` with the applied stiffness held
    constant across the step; the component is recomputed from the post-step
    state so its defining relation holds exactly by construction.
    """
    w = _fast.dcm_omega_rk4(s.omega_dcm, u.lambda_, dt)
    if not (w > 0.0 and math.isfinite(w)):
        raise DcmDivergence(f"divergence rate left (0, inf): {w}")
    return DcmState.from_state(x, w)
