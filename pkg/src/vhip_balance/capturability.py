"""Analytical approximations of the set of balanceable states.

The inner region keeps the capture-input pair inside the input bounds; the
outer region relaxes the ZMP condition through the bracketing approximators
and keeps the stiffness band, which is necessary for any recovery.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Callable, Literal

import numpy as np

from . import _fast
from .indicators import ici, two_sided
from .model import ComState, ConstraintSet, phi

STATE_FIELDS = ("c_x", "c_z", "dc_x", "dc_z")

BISECTION_TOL = 1e-6  # m/s, velocity boundary search
BRACKET_GROWTH = 2.0


class RegionClass(IntEnum):
    """Classification of a state against the two region approximations."""

    INNER = 0
    OUTER_ONLY = 1
    OUTSIDE = 2


def in_inner(x: ComState, cs: ConstraintSet) -> bool:
    """Capture-input pair inside the input bounds (closed inequalities)."""
    xi_p, xi_lam = _fast.ici_vals(x.c_x, x.c_z, x.dc_x, x.dc_z, cs.g)
    return (
        cs.p_min <= xi_p <= cs.p_max
        and cs.lambda_min <= xi_lam <= cs.lambda_max
    )


def in_outer(x: ComState, cs: ConstraintSet) -> bool:
    """Necessary condition built from the bracketing pair and the band."""
    _, xi_lam = _fast.ici_vals(x.c_x, x.c_z, x.dc_x, x.dc_z, cs.g)
    if not cs.lambda_min <= xi_lam <= cs.lambda_max:
        return False
    ts = two_sided(x, cs)
    return (
        min(ts.xi_p_plus, ts.xi_p_minus) <= cs.p_max
        and max(ts.xi_p_plus, ts.xi_p_minus) >= cs.p_min
    )


def classify(x: ComState, cs: ConstraintSet) -> RegionClass:
    if in_inner(x, cs):
        return RegionClass.INNER
    if in_outer(x, cs):
        return RegionClass.OUTER_ONLY
    return RegionClass.OUTSIDE


def _classify_raw(c_x, c_z, dc_x, dc_z, cs: ConstraintSet) -> RegionClass:
    """Classification tolerating invalid heights (used by grid scans)."""
    if c_z <= 0.0:
        return RegionClass.OUTSIDE
    return classify(ComState(c_x, c_z, dc_x, dc_z), cs)


@dataclass(frozen=True)
class SliceSpec:
    """Two swept state coordinates over a grid, the other two held fixed.

    ``resolution`` is cells per axis (int applies to both); classifications
    are evaluated at cell centers.
    """

    sweep: tuple[str, str]
    u_range: tuple[float, float]
    v_range: tuple[float, float]
    resolution: int | tuple[int, int] = 400
    fixed: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.sweep) != 2 or self.sweep[0] == self.sweep[1]:
            raise ValueError("exactly two distinct swept coordinates required")
        for name in self.sweep:
            if name not in STATE_FIELDS:
                raise ValueError(f"unknown state coordinate {name!r}")
        expect_fixed = set(STATE_FIELDS) - set(self.sweep)
        if set(self.fixed) != expect_fixed:
            raise ValueError(f"fixed coordinates must be exactly {sorted(expect_fixed)}")
        nu, nv = self.shape
        if nu < 1 or nv < 1:
            raise ValueError("resolution must be at least 1 cell per axis")
        for lo, hi in (self.u_range, self.v_range):
            if not (math.isfinite(lo) and math.isfinite(hi) and lo <= hi):
                raise ValueError("ranges must be finite with lo <= hi")

    @property
    def shape(self) -> tuple[int, int]:
        if isinstance(self.resolution, int):
            return self.resolution, self.resolution
        return self.resolution

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        nu, nv = self.shape
        u = self.u_range[0] + (np.arange(nu) + 0.5) * (
            self.u_range[1] - self.u_range[0]
        ) / nu
        v = self.v_range[0] + (np.arange(nv) + 0.5) * (
            self.v_range[1] - self.v_range[0]
        ) / nv
        return u, v


def slice_scan(spec: SliceSpec, cs: ConstraintSet) -> np.ndarray:
    """Classify every cell center; returns an array of shape (nu, nv).

    Cells whose height coordinate is non-positive are marked outside.
    """
    u_vals, v_vals = spec.centers()
    nu, nv = spec.shape
    grid = np.empty((nu, nv), dtype=np.uint8)
    coords = dict(spec.fixed)
    for i in range(nu):
        coords[spec.sweep[0]] = float(u_vals[i])
        for j in range(nv):
            coords[spec.sweep[1]] = float(v_vals[j])
            grid[i, j] = _classify_raw(
                coords["c_x"], coords["c_z"], coords["dc_x"], coords["dc_z"], cs
            )
    return grid


def _largest_true(member: Callable[[float], bool], v_start: float) -> float:
    """Largest v with member(v) true, by doubling bracket then bisection.

    ``v_start`` must be a member; the boundary is located to BISECTION_TOL
    and the last value tested true is returned.
    """
    lo = v_start
    step = 0.25
    hi = lo + step
    while member(hi):
        lo = hi
        step *= BRACKET_GROWTH
        hi = lo + step
    while hi - lo > BISECTION_TOL:
        mid = 0.5 * (lo + hi)
        if member(mid):
            lo = mid
        else:
            hi = mid
    return lo


def _find_member(member: Callable[[float], bool]) -> float:
    """Any value with member true, scanning 0 then +-1e-3 * 2^k."""
    if member(0.0):
        return 0.0
    for k in range(41):
        v = 1e-3 * 2.0**k
        if member(v):
            return v
        if member(-v):
            return -v
    raise ValueError("no bracketing interval: membership never true")


def _member_fn(
    base: ComState, cs: ConstraintSet, region: str, component: str
) -> Callable[[float], bool]:
    test = in_inner if region == "inner" else in_outer
    coords = {f: getattr(base, f) for f in STATE_FIELDS}

    def member(v: float) -> bool:
        c = dict(coords)
        c[component] = v
        if c["c_z"] <= 0.0:
            return False
        return test(ComState(c["c_x"], c["c_z"], c["dc_x"], c["dc_z"]), cs)

    return member


def extremal_velocity(
    base: ComState, cs: ConstraintSet, region: Literal["inner", "outer"]
) -> float:
    """Largest horizontal velocity keeping region membership, by bisection.

    The base state's height pair must satisfy the stiffness band; for the
    inner region the result equals (p_max - c_x) times the divergence rate.
    """
    if region not in ("inner", "outer"):
        raise ValueError(f"region must be 'inner' or 'outer', got {region!r}")
    member = _member_fn(base, cs, region, "dc_x")
    return _largest_true(member, _find_member(member))


def velocity_extreme(
    base: ComState,
    cs: ConstraintSet,
    region: Literal["inner", "outer"],
    component: Literal["dc_x", "dc_z"],
    direction: int,
) -> float:
    """Signed extreme of one velocity component keeping membership."""
    member = _member_fn(base, cs, region, component)
    if direction >= 0:
        return _largest_true(member, _find_member(member))
    flipped = lambda v: member(-v)
    return -_largest_true(flipped, -_find_member(member))


def velocity_box(
    position, cs: ConstraintSet, region: Literal["inner", "outer"] = "outer"
) -> np.ndarray:
    """Bounding box [[dcx_lo, dcx_hi], [dcz_lo, dcz_hi]] of the velocity slice."""
    base = ComState(float(position[0]), float(position[1]), 0.0, 0.0)
    return np.array(
        [
            [
                velocity_extreme(base, cs, region, "dc_x", -1),
                velocity_extreme(base, cs, region, "dc_x", +1),
            ],
            [
                velocity_extreme(base, cs, region, "dc_z", -1),
                velocity_extreme(base, cs, region, "dc_z", +1),
            ],
        ]
    )


def stationary_capture_target(x: ComState, g: float) -> np.ndarray:
    """Rest position reached under the pure capture-input policy."""
    return phi(ici(x, g).as_array(), g)
