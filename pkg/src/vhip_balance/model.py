"""Variable-height inverted pendulum dynamics, constraints and integration.

The model is a point mass at the CoM connected to a ground contact point
(the ZMP) by a massless leg of adjustable stiffness.  State is the CoM
position and velocity in the sagittal plane; the input is the ZMP position
together with the leg stiffness.  Mass never appears on its own: it enters
only through the stiffness input.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _fast

INPUT_TOLERANCE = 1e-9  # slack when flagging applied inputs against the bounds


class StateConstraintViolation(RuntimeError):
    """CoM height reached the ground; the run must halt, not clamp."""


class PolicyFailure(RuntimeError):
    """Base class for errors raised by control policies during a rollout."""

    reason = "diverged"


@dataclass
class SimulationAborted(Exception):
    """A policy failed mid-run; carries the failure time and partial data."""

    time: float
    reason: str
    trajectory: "Trajectory"

    def __str__(self) -> str:
        return f"policy failed at t={self.time:.6g} s ({self.reason})"


@dataclass(frozen=True)
class ComState:
    """CoM position and velocity [m, m, m/s, m/s]."""

    c_x: float
    c_z: float
    dc_x: float
    dc_z: float

    def __post_init__(self):
        vals = (self.c_x, self.c_z, self.dc_x, self.dc_z)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite CoM state {vals}")
        if self.c_z <= 0.0:
            raise ValueError(f"CoM height must be positive, got {self.c_z}")

    @property
    def position(self) -> np.ndarray:
        return np.array([self.c_x, self.c_z])

    @property
    def velocity(self) -> np.ndarray:
        return np.array([self.dc_x, self.dc_z])

    def as_array(self) -> np.ndarray:
        return np.array([self.c_x, self.c_z, self.dc_x, self.dc_z])


@dataclass(frozen=True)
class ControlInput:
    """ZMP position [m] and leg stiffness [1/s^2]."""

    p: float
    lambda_: float

    def __post_init__(self):
        if not (self.lambda_ > 0.0):
            raise ValueError(f"stiffness must be positive, got {self.lambda_}")

    def as_array(self) -> np.ndarray:
        return np.array([self.p, self.lambda_])


@dataclass(frozen=True)
class ConstraintSet:
    """Input bounds (support interval and stiffness range) plus gravity."""

    p_min: float
    p_max: float
    lambda_min: float
    lambda_max: float
    g: float = 9.8

    def __post_init__(self):
        if not self.p_min < self.p_max:
            raise ValueError("support interval is empty")
        if not 0.0 < self.lambda_min < self.lambda_max:
            raise ValueError("stiffness bounds must satisfy 0 < min < max")
        if not self.g > 0.0:
            raise ValueError("gravity must be positive")

    @property
    def height_band(self) -> tuple[float, float]:
        """Heights whose rest stiffness g/c_z lies inside the bounds."""
        return self.g / self.lambda_max, self.g / self.lambda_min

    def contains(self, u: ControlInput, tol: float = 0.0) -> bool:
        return (
            self.p_min - tol <= u.p <= self.p_max + tol
            and self.lambda_min - tol <= u.lambda_ <= self.lambda_max + tol
        )

    def clamp(self, p: float, lambda_: float) -> ControlInput:
        return ControlInput(
            p=min(max(p, self.p_min), self.p_max),
            lambda_=min(max(lambda_, self.lambda_min), self.lambda_max),
        )


def phi(point, g: float) -> np.ndarray:
    """Map [a, b] to [a, g/b]; applying the map twice is the identity."""
    a, b = float(point[0]), float(point[1])
    if not b > 0.0:
        raise ValueError(f"second entry must be positive, got {b}")
    return np.array([a, g / b])


def vhip_derivative(x: ComState, u: ControlInput, g: float) -> np.ndarray:
    """State derivative [dc_x, dc_z, ddc_x, ddc_z]."""
    return np.array(_fast.deriv_vals(x.c_x, x.c_z, x.dc_x, x.dc_z, u.p, u.lambda_, g))


def step(x: ComState, u: ControlInput, dt: float, g: float) -> ComState:
    """One RK4 step with the input held constant across the substeps."""
    if dt == 0.0:
        return x
    c_x, c_z, dc_x, dc_z = _fast.rk4_step(
        x.c_x, x.c_z, x.dc_x, x.dc_z, u.p, u.lambda_, g, dt
    )
    if c_z <= 0.0:
        raise StateConstraintViolation(f"CoM height {c_z:.6g} <= 0 after step")
    return ComState(c_x, c_z, dc_x, dc_z)


def apply_push(x: ComState, dv) -> ComState:
    """Instantaneous velocity change from an impulse; positions unchanged."""
    return ComState(x.c_x, x.c_z, x.dc_x + float(dv[0]), x.dc_z + float(dv[1]))


def input_admissible(u: ControlInput, cs: ConstraintSet) -> bool:
    """Closed-inequality membership in the input constraint set."""
    return cs.contains(u, tol=0.0)


@dataclass(frozen=True)
class TrajectoryRow:
    t: float
    state: ComState
    u: ControlInput | None
    xi_p: float
    xi_lambda: float
    k1: float
    k2: float
    eta_p: float


@dataclass(frozen=True)
class Failure:
    reason: str  # "constraint" | "diverged"
    time: float


CSV_HEADER = "t,c_x,c_z,dc_x,dc_z,p,lambda,xi_p,xi_lambda,k1,k2,eta_p"


@dataclass
class Trajectory:
    """Uniformly sampled closed-loop record.

    ``data`` columns follow ``_fast`` layout: state (4), applied input (2),
    capture-input pair (2), gains and compensation (3).  Gain columns are NaN
    for policies that do not use gains.  The final row carries the policy
    evaluated at the final state; it is recorded but never applied.
    """

    dt: float
    data: np.ndarray
    failure: Failure | None = None
    input_violations: np.ndarray = field(
        default_factory=lambda: np.empty(0, dtype=int)
    )

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float).reshape(-1, _fast.N_COLS)

    @property
    def n_rows(self) -> int:
        return self.data.shape[0]

    @property
    def t(self) -> np.ndarray:
        return np.arange(self.n_rows) * self.dt

    def column(self, name: str) -> np.ndarray:
        idx = {
            "c_x": 0, "c_z": 1, "dc_x": 2, "dc_z": 3,
            "p": 4, "lambda": 5, "xi_p": 6, "xi_lambda": 7,
            "k1": 8, "k2": 9, "eta_p": 10,
        }[name]
        return self.data[:, idx]

    def row(self, i: int) -> TrajectoryRow:
        r = self.data[i]
        u = None
        if math.isfinite(r[5]) and r[5] > 0.0:
            u = ControlInput(p=r[4], lambda_=r[5])
        return TrajectoryRow(
            t=i * self.dt,
            state=ComState(r[0], r[1], r[2], r[3]),
            u=u,
            xi_p=r[6],
            xi_lambda=r[7],
            k1=r[8],
            k2=r[9],
            eta_p=r[10],
        )

    @property
    def final_state(self) -> ComState:
        r = self.data[-1]
        return ComState(r[0], r[1], r[2], r[3])

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(CSV_HEADER + "\n")
            for i in range(self.n_rows):
                cells = [repr(float(i * self.dt))]
                for v in self.data[i]:
                    cells.append("" if math.isnan(v) else repr(float(v)))
                fh.write(",".join(cells) + "\n")


def flag_input_violations(data: np.ndarray, cs: ConstraintSet) -> np.ndarray:
    """Row indices whose applied input leaves the bounds beyond tolerance."""
    p = data[:, 4]
    lam = data[:, 5]
    bad = (
        (p < cs.p_min - INPUT_TOLERANCE)
        | (p > cs.p_max + INPUT_TOLERANCE)
        | (lam < cs.lambda_min - INPUT_TOLERANCE)
        | (lam > cs.lambda_max + INPUT_TOLERANCE)
    )
    return np.flatnonzero(bad)


def n_steps_for(t_f: float, dt: float) -> int:
    """Number of integration steps; t_f must be an integer multiple of dt."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    if t_f < 0.0:
        raise ValueError("final time must be non-negative")
    n = int(round(t_f / dt))
    if abs(n * dt - t_f) > 1e-9 * max(1.0, t_f):
        raise ValueError(f"t_f={t_f} is not an integer multiple of dt={dt}")
    return n


def simulate(
    x0: ComState,
    policy: Callable[[ComState], ControlInput],
    t_f: float,
    dt: float,
    constraints: ConstraintSet,
) -> Trajectory:
    """Closed-loop rollout recording every step.

    The policy is evaluated once per step and held constant within the RK4
    substeps (and once more at the final state, for the record only).
    Stateful policies may expose ``after_step(x_new, u, dt)`` which is called
    after each state update, and ``last_k1``/``last_k2``/``last_eta_p``
    attributes which are copied into the record.

    A breached state constraint or a non-finite state halts the run and is
    flagged on the returned trajectory.  Policy failures propagate as
    :class:`SimulationAborted` carrying the failure time and partial record.
    """
    g = constraints.g
    n = n_steps_for(t_f, dt)
    data = np.full((n + 1, _fast.N_COLS), np.nan)
    c_x, c_z, dc_x, dc_z = x0.c_x, x0.c_z, x0.dc_x, x0.dc_z
    failure = None
    rows = n + 1
    after = getattr(policy, "after_step", None)
    i = 0
    while True:
        w = _fast.omega_pos(c_z, dc_z, g)
        data[i, 0:4] = (c_x, c_z, dc_x, dc_z)
        data[i, 6] = c_x + dc_x / w
        data[i, 7] = w * w
        try:
            u = policy(ComState(c_x, c_z, dc_x, dc_z))
        except PolicyFailure as exc:
            partial = Trajectory(dt, data[:i].copy())
            partial.input_violations = flag_input_violations(partial.data, constraints)
            raise SimulationAborted(i * dt, exc.reason, partial) from exc
        data[i, 4] = u.p
        data[i, 5] = u.lambda_
        data[i, 8] = getattr(policy, "last_k1", np.nan)
        data[i, 9] = getattr(policy, "last_k2", np.nan)
        data[i, 10] = getattr(policy, "last_eta_p", np.nan)
        if i == n:
            break
        c_x, c_z, dc_x, dc_z = _fast.rk4_step(
            c_x, c_z, dc_x, dc_z, u.p, u.lambda_, g, dt
        )
        i += 1
        if not all(map(math.isfinite, (c_x, c_z, dc_x, dc_z))):
            failure = Failure("diverged", i * dt)
            rows = i
            break
        if c_z <= 0.0:
            failure = Failure("constraint", i * dt)
            rows = i
            break
        if after is not None:
            try:
                after(ComState(c_x, c_z, dc_x, dc_z), u, dt)
            except PolicyFailure as exc:
                partial = Trajectory(dt, data[:i].copy())
                partial.input_violations = flag_input_violations(
                    partial.data, constraints
                )
                raise SimulationAborted(i * dt, exc.reason, partial) from exc
    traj = Trajectory(dt, data[:rows], failure)
    traj.input_violations = flag_input_violations(traj.data, constraints)
    return traj
