"""Scalar numeric kernels shared by the public API and the batch rollout.

Every function here works on plain float64 values so the whole module can be
compiled with numba when it is available (pure-Python fallback otherwise).
The object-level modules call these kernels for their arithmetic, which keeps
single-step code and whole-run rollouts bit-identical.
"""

from __future__ import annotations

import math

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(fn):
            return fn

        return wrap


NAN = float("nan")

# Rollout termination codes.
COMPLETED = 0
STATE_CONSTRAINT = 1  # CoM height reached zero
GAIN_INFEASIBLE = 2  # gain selection failed even after the epsilon/10 retry
DIVERGED = 3  # non-finite state
AUX_DIVERGED = 4  # divergence-rate bookkeeping variable left (0, inf)

# Policy codes for rollout().
KIND_PURE_ICI = 0
KIND_ICI = 1
KIND_ICP = 2
KIND_DCM = 3

# Record buffer columns (rollout writes one row per recorded step).
# 0:c_x 1:c_z 2:dc_x 3:dc_z 4:p 5:lambda 6:xi_p 7:xi_lambda 8:k1 9:k2 10:eta_p
N_COLS = 11


@njit(cache=True)
def omega_pos(c_z: float, dc_z: float, g: float) -> float:
    """Positive root of c_z*w^2 + dc_z*w - g = 0.

    The algebraically equivalent form 2g/(disc + dc_z) is used for upward
    vertical velocity to avoid cancellation between disc and dc_z.
    """
    disc = math.sqrt(dc_z * dc_z + 4.0 * c_z * g)
    if dc_z > 0.0:
        return 2.0 * g / (disc + dc_z)
    return (disc - dc_z) / (2.0 * c_z)


@njit(cache=True)
def ici_vals(c_x, c_z, dc_x, dc_z, g):
    """Capture-input pair (xi_p, xi_lambda) of a state."""
    w = omega_pos(c_z, dc_z, g)
    return c_x + dc_x / w, w * w


@njit(cache=True)
def alpha_val(c_z, xi_lam, g):
    return g / (math.sqrt(xi_lam) * (c_z * xi_lam + g))


@njit(cache=True)
def beta_val(c_z, xi_lam, g):
    return 2.0 * c_z * xi_lam * math.sqrt(xi_lam) / (c_z * xi_lam + g)


@njit(cache=True)
def ici_rate_vals(c_x, c_z, dc_x, dc_z, p, lam, g):
    """Time derivative (dxi_p, dxi_lambda) under input (p, lambda)."""
    xi_p, xi_lam = ici_vals(c_x, c_z, dc_x, dc_z, g)
    root = math.sqrt(xi_lam)
    al = alpha_val(c_z, xi_lam, g)
    be = beta_val(c_z, xi_lam, g)
    dxi_p = (lam / root) * (xi_p - p) + al * (xi_lam - lam) * dc_x / root
    dxi_lam = be * (xi_lam - lam)
    return dxi_p, dxi_lam


@njit(cache=True)
def deriv_vals(c_x, c_z, dc_x, dc_z, p, lam, g):
    """Right-hand side of the pendulum dynamics."""
    return dc_x, dc_z, lam * (c_x - p), lam * c_z - g


@njit(cache=True)
def rk4_step(c_x, c_z, dc_x, dc_z, p, lam, g, dt):
    """Classical fourth-order Runge-Kutta step with the input held constant."""
    ax1 = lam * (c_x - p)
    az1 = lam * c_z - g

    cx2 = c_x + 0.5 * dt * dc_x
    cz2 = c_z + 0.5 * dt * dc_z
    vx2 = dc_x + 0.5 * dt * ax1
    vz2 = dc_z + 0.5 * dt * az1
    ax2 = lam * (cx2 - p)
    az2 = lam * cz2 - g

    cx3 = c_x + 0.5 * dt * vx2
    cz3 = c_z + 0.5 * dt * vz2
    vx3 = dc_x + 0.5 * dt * ax2
    vz3 = dc_z + 0.5 * dt * az2
    ax3 = lam * (cx3 - p)
    az3 = lam * cz3 - g

    cx4 = c_x + dt * vx3
    cz4 = c_z + dt * vz3
    vx4 = dc_x + dt * ax3
    vz4 = dc_z + dt * az3
    ax4 = lam * (cx4 - p)
    az4 = lam * cz4 - g

    h6 = dt / 6.0
    return (
        c_x + h6 * (dc_x + 2.0 * (vx2 + vx3) + vx4),
        c_z + h6 * (dc_z + 2.0 * (vz2 + vz3) + vz4),
        dc_x + h6 * (ax1 + 2.0 * (ax2 + ax3) + ax4),
        dc_z + h6 * (az1 + 2.0 * (az2 + az3) + az4),
    )


@njit(cache=True)
def dcm_omega_rk4(w, lam, dt):
    """RK4 step of the Riccati equation dw/dt = w^2 - lambda."""
    k1 = w * w - lam
    w2 = w + 0.5 * dt * k1
    k2 = w2 * w2 - lam
    w3 = w + 0.5 * dt * k2
    k3 = w3 * w3 - lam
    w4 = w + dt * k3
    k4 = w4 * w4 - lam
    return w + dt / 6.0 * (k1 + 2.0 * (k2 + k3) + k4)


@njit(cache=True)
def eta_val(c_z, xi_lam, dc_x, xi_lam_d, k2, g):
    """Nonlinear ZMP compensation term; denominator is the commanded lambda."""
    dl = xi_lam - xi_lam_d
    den = xi_lam + k2 * dl
    al = alpha_val(c_z, xi_lam, g)
    return -k2 * al * dl * dc_x / den


@njit(cache=True)
def _fold(lo, hi, a, b):
    """Intersect {k | a*k <= b} into [lo, hi]; returns (lo, hi, feasible)."""
    if a > 0.0:
        q = b / a
        if q < hi:
            hi = q
    elif a < 0.0:
        q = b / a
        if q > lo:
            lo = q
    elif b < 0.0:
        return lo, hi, False
    return lo, hi, lo <= hi


@njit(cache=True)
def gains_once(
    xi_p,
    xi_lam,
    dc_x,
    c_z,
    xi_p_d,
    xi_lam_d,
    eps,
    m_max,
    gamma,
    p_min,
    p_max,
    l_min,
    l_max,
    g,
):
    """Serial maximal-gain selection at a fixed gain floor.

    Stage one maximizes the stiffness gain k2 inside [eps, m_max] subject to
    the stiffness-channel input bounds and the two linearized compensation
    bounds; stage two maximizes the ZMP gain k1 subject to the ZMP-channel
    bounds with the compensation evaluated at the chosen k2.

    Returns (k1, k2, eta_p, code); code 0 = ok, 1 = stage-k2 infeasible,
    2 = stage-k1 infeasible.
    """
    dl = xi_lam - xi_lam_d
    lo = eps
    hi = m_max
    ok0 = lo <= hi
    lo, hi, ok1 = _fold(lo, hi, dl, l_max - xi_lam)
    lo, hi, ok2 = _fold(lo, hi, -dl, xi_lam - l_min)
    al = alpha_val(c_z, xi_lam, g)
    gp = gamma * (p_max - xi_p)
    gm = gamma * (p_min - xi_p)
    lo, hi, ok3 = _fold(lo, hi, -dl * (al * dc_x + gp), gp * xi_lam)
    lo, hi, ok4 = _fold(lo, hi, dl * (al * dc_x + gm), -gm * xi_lam)
    if not (ok0 and ok1 and ok2 and ok3 and ok4):
        return NAN, NAN, NAN, 1
    k2 = hi
    if xi_lam + k2 * dl <= 0.0:
        return NAN, NAN, NAN, 1
    eta = eta_val(c_z, xi_lam, dc_x, xi_lam_d, k2, g)

    dp = xi_p - xi_p_d
    lo1 = eps
    hi1 = m_max
    ok5 = lo1 <= hi1
    lo1, hi1, ok6 = _fold(lo1, hi1, dp, p_max - xi_p - eta)
    lo1, hi1, ok7 = _fold(lo1, hi1, -dp, xi_p + eta - p_min)
    if not (ok5 and ok6 and ok7):
        return NAN, k2, eta, 2
    return hi1, k2, eta, 0


@njit(cache=True)
def ici_gains(
    xi_p,
    xi_lam,
    dc_x,
    c_z,
    xi_p_d,
    xi_lam_d,
    eps,
    m_max,
    gamma,
    p_min,
    p_max,
    l_min,
    l_max,
    g,
):
    """Gain selection with a single retry at eps/10 on infeasibility."""
    k1, k2, eta, code = gains_once(
        xi_p, xi_lam, dc_x, c_z, xi_p_d, xi_lam_d,
        eps, m_max, gamma, p_min, p_max, l_min, l_max, g,
    )
    if code != 0:
        k1, k2, eta, code = gains_once(
            xi_p, xi_lam, dc_x, c_z, xi_p_d, xi_lam_d,
            eps * 0.1, m_max, gamma, p_min, p_max, l_min, l_max, g,
        )
    return k1, k2, eta, code


@njit(cache=True)
def icp_inputs(c_x, c_z, dc_x, tgt_cx, k, p_min, p_max, l_min, l_max, g):
    """Height-holding capture-point feedback, both channels clamped."""
    lam_lip = g / c_z
    lam = lam_lip
    if lam < l_min:
        lam = l_min
    elif lam > l_max:
        lam = l_max
    xi = c_x + dc_x / math.sqrt(lam_lip)
    p = xi + k * (xi - tgt_cx)
    if p < p_min:
        p = p_min
    elif p > p_max:
        p = p_max
    return p, lam


@njit(cache=True)
def dcm_inputs(
    omega, c_x, c_z, dc_x, dc_z, tgt_cx, tgt_cz, k, p_min, p_max, l_min, l_max, g
):
    """Divergent-component linearization baseline, both channels clamped.

    Prescribes first-order decay of both divergent-component errors at rate k
    and inverts the component dynamics for the input: the stiffness command
    solves the vertical row, the ZMP command the horizontal row (with the
    applied, clamped stiffness).
    """
    xi_x = c_x + dc_x / omega
    xi_z = c_z + dc_z / omega
    den = xi_z if xi_z > 1e-9 else 1e-9
    lam = (g - k * omega * (xi_z - tgt_cz)) / den
    if lam < l_min:
        lam = l_min
    elif lam > l_max:
        lam = l_max
    p = xi_x + (k * omega / lam) * (xi_x - tgt_cx)
    if p < p_min:
        p = p_min
    elif p > p_max:
        p = p_max
    return p, lam


@njit(cache=True)
def rollout(
    kind,
    c_x,
    c_z,
    dc_x,
    dc_z,
    p_min,
    p_max,
    l_min,
    l_max,
    g,
    tgt_cx,
    tgt_cz,
    eps,
    m_max,
    gamma,
    k_gain,
    omega0,
    dt,
    n_steps,
    out,
):
    """Closed-loop run under one of the built-in policies.

    Writes one row per recorded step into ``out`` (shape (n_steps + 1,
    N_COLS)); the final row carries the policy evaluated at the final state
    even though it is never applied. Returns (status, rows_written); on
    failure the offending state is not recorded and the failure time is
    rows_written * dt.
    """
    xi_p_d = tgt_cx
    xi_lam_d = g / tgt_cz
    w_dcm = omega0
    i = 0
    while True:
        w = omega_pos(c_z, dc_z, g)
        xi_p = c_x + dc_x / w
        xi_lam = w * w
        k1 = NAN
        k2 = NAN
        eta = NAN
        if kind == KIND_PURE_ICI:
            p = xi_p
            lam = xi_lam
        elif kind == KIND_ICI:
            k1, k2, eta, code = ici_gains(
                xi_p, xi_lam, dc_x, c_z, xi_p_d, xi_lam_d,
                eps, m_max, gamma, p_min, p_max, l_min, l_max, g,
            )
            if code != 0:
                return GAIN_INFEASIBLE, i
            p = xi_p + k1 * (xi_p - xi_p_d) + eta
            lam = xi_lam + k2 * (xi_lam - xi_lam_d)
        elif kind == KIND_ICP:
            p, lam = icp_inputs(
                c_x, c_z, dc_x, tgt_cx, k_gain, p_min, p_max, l_min, l_max, g
            )
        else:
            p, lam = dcm_inputs(
                w_dcm, c_x, c_z, dc_x, dc_z, tgt_cx, tgt_cz, k_gain,
                p_min, p_max, l_min, l_max, g,
            )
        out[i, 0] = c_x
        out[i, 1] = c_z
        out[i, 2] = dc_x
        out[i, 3] = dc_z
        out[i, 4] = p
        out[i, 5] = lam
        out[i, 6] = xi_p
        out[i, 7] = xi_lam
        out[i, 8] = k1
        out[i, 9] = k2
        out[i, 10] = eta
        if i == n_steps:
            return COMPLETED, n_steps + 1
        c_x, c_z, dc_x, dc_z = rk4_step(c_x, c_z, dc_x, dc_z, p, lam, g, dt)
        i += 1
        if not (
            math.isfinite(c_x)
            and math.isfinite(c_z)
            and math.isfinite(dc_x)
            and math.isfinite(dc_z)
        ):
            return DIVERGED, i
        if c_z <= 0.0:
            return STATE_CONSTRAINT, i
        if kind == KIND_DCM:
            w_dcm = dcm_omega_rk4(w_dcm, lam, dt)
            if not math.isfinite(w_dcm):
                return AUX_DIVERGED, i
            # The rate estimate is confined to the natural-frequency band of
            # the stiffness bounds, else the Riccati drift is absorbing.
            w_lo = math.sqrt(l_min)
            w_hi = math.sqrt(l_max)
            if w_dcm < w_lo:
                w_dcm = w_lo
            elif w_dcm > w_hi:
                w_dcm = w_hi
