"""Dynamics, integration and simulation-loop tests."""

import math

import numpy as np
import pytest

from conftest import make_rng, sample_in_inner
from vhip_balance.control import PureIciPolicy
from vhip_balance.model import (
    ComState,
    ConstraintSet,
    ControlInput,
    StateConstraintViolation,
    apply_push,
    input_admissible,
    phi,
    simulate,
    step,
    vhip_derivative,
)

G = 9.8


def constant_policy(p, lam):
    u = ControlInput(p=p, lambda_=lam)
    return lambda x: u


def closed_form_constant_input(x0, p, lam, g, t):
    """Exact solution of the dynamics under a constant input."""
    w = math.sqrt(lam)
    ch, sh = math.cosh(w * t), math.sinh(w * t)
    zx = p
    zz = g / lam
    c_x = zx + (x0.c_x - zx) * ch + x0.dc_x / w * sh
    dc_x = (x0.c_x - zx) * w * sh + x0.dc_x * ch
    c_z = zz + (x0.c_z - zz) * ch + x0.dc_z / w * sh
    dc_z = (x0.c_z - zz) * w * sh + x0.dc_z * ch
    return np.array([c_x, c_z, dc_x, dc_z])


class TestPhi:
    def test_unit_ratio(self):
        assert np.allclose(phi([0.0, 9.8], G), [0.0, 1.0])

    def test_direct_evaluation(self):
        assert np.allclose(phi([0.05, 14.0], G), [0.05, 9.8 / 14.0], atol=0, rtol=0)

    def test_involution_example(self):
        assert np.allclose(phi(phi([0.3, 0.6], G), G), [0.3, 0.6], atol=1e-15)

    def test_involution_random(self):
        rng = make_rng(10)
        for _ in range(1000):
            v = np.array([rng.uniform(-2, 2), rng.uniform(0.01, 30.0)])
            assert np.abs(phi(phi(v, G), G) - v).max() < 1e-12

    def test_domain_error(self):
        with pytest.raises(ValueError):
            phi([0.1, 0.0], G)
        with pytest.raises(ValueError):
            phi([0.1, -1.0], G)


class TestDerivative:
    def test_equilibrium(self):
        x = ComState(0.0, 0.6, 0.0, 0.0)
        u = ControlInput(0.0, G / 0.6)
        assert np.allclose(vhip_derivative(x, u, G), 0.0, atol=1e-15)

    def test_offset_acceleration(self):
        x = ComState(0.1, 0.6, 0.0, 0.0)
        u = ControlInput(0.0, G / 0.6)
        expected = np.array([0.0, 0.0, 0.1 * (G / 0.6), 0.0])
        assert np.allclose(vhip_derivative(x, u, G), expected, atol=1e-12)

    def test_exact_weight_support(self):
        x = ComState(0.0, 0.5, 0.0, 0.0)
        u = ControlInput(0.0, 19.6)
        assert np.allclose(vhip_derivative(x, u, G), 0.0, atol=1e-15)

    def test_equilibria_characterization(self):
        # zero residual iff velocities vanish and the input mirrors the
        # position through the ground map
        rng = make_rng(11)
        for _ in range(200):
            c_x = rng.uniform(-0.5, 0.5)
            c_z = rng.uniform(0.2, 1.5)
            x_eq = ComState(c_x, c_z, 0.0, 0.0)
            u_eq = ControlInput(c_x, G / c_z)
            assert np.linalg.norm(vhip_derivative(x_eq, u_eq, G)) < 1e-12
            x = ComState(c_x, c_z, rng.uniform(0.1, 1.0), rng.uniform(0.1, 1.0))
            assert np.linalg.norm(vhip_derivative(x, u_eq, G)) > 0.0


class TestStep:
    def test_equilibrium_fixed_point(self):
        x = ComState(0.02, 0.7, 0.0, 0.0)
        u = ControlInput(0.02, G / 0.7)
        for dt in (1e-3, 1e-2, 0.1):
            y = step(x, u, dt, G)
            assert y == x

    def test_richardson_halving(self):
        # halving dt cuts the global error against a dt/16 reference by >= 8
        x0 = ComState(0.04, 0.67, 0.05, 0.05)
        u = ControlInput(0.03, 15.0)

        def integrate(dt, t_end=1.0):
            x = x0
            for _ in range(round(t_end / dt)):
                x = step(x, u, dt, G)
            return x.as_array()

        ref = integrate(1e-2 / 16)
        e1 = np.linalg.norm(integrate(1e-2) - ref)
        e2 = np.linalg.norm(integrate(5e-3) - ref)
        assert e1 / e2 >= 8.0

    def test_convergence_order(self):
        # observed order >= 3.9 against the closed-form solution
        x0 = ComState(0.04, 0.67, 0.05, 0.05)
        u = ControlInput(0.03, 15.0)
        exact = closed_form_constant_input(x0, u.p, u.lambda_, G, 1.0)
        errs = []
        dts = [1e-2, 5e-3, 2.5e-3]
        for dt in dts:
            x = x0
            for _ in range(round(1.0 / dt)):
                x = step(x, u, dt, G)
            errs.append(np.linalg.norm(x.as_array() - exact))
        slope = np.polyfit(np.log(dts), np.log(errs), 1)[0]
        assert slope >= 3.9

    def test_ground_strike_raises(self):
        x = ComState(0.0, 0.05, 0.0, -2.0)
        u = ControlInput(0.0, 12.25)
        with pytest.raises(StateConstraintViolation):
            step(x, u, 0.1, G)


class TestApplyPush:
    def test_zero_push(self):
        x = ComState(0.0, 0.6, 0.1, 0.2)
        assert apply_push(x, [0.0, 0.0]) == x

    def test_reference_push(self):
        x = ComState(0.0, 0.6, 0.0, 0.0)
        assert apply_push(x, [0.58, 0.0]) == ComState(0.0, 0.6, 0.58, 0.0)

    def test_additivity(self):
        rng = make_rng(12)
        for _ in range(50):
            x = ComState(0.0, 0.6, rng.uniform(-1, 1), rng.uniform(-1, 1))
            d1 = rng.uniform(-0.5, 0.5, 2)
            d2 = rng.uniform(-0.5, 0.5, 2)
            a = apply_push(apply_push(x, d1), d2)
            b = apply_push(x, d1 + d2)
            assert np.allclose(a.as_array(), b.as_array(), atol=1e-15)


class TestInputAdmissible:
    def test_interior(self, cs):
        assert input_admissible(ControlInput(0.0, 16.33), cs)

    def test_bound_violation(self, cs):
        assert not input_admissible(ControlInput(0.15, 16.0), cs)

    def test_boundary_included(self, cs):
        assert input_admissible(ControlInput(cs.p_max, cs.lambda_max), cs)
        assert input_admissible(ControlInput(cs.p_min, cs.lambda_min), cs)


class TestSimulate:
    def test_zero_horizon_single_row(self, cs):
        x0 = ComState(0.0, 0.6, 0.1, 0.0)
        traj = simulate(x0, constant_policy(0.0, 16.0), 0.0, 1e-3, cs)
        assert traj.n_rows == 1
        assert traj.final_state == x0

    def test_constant_run_from_equilibrium(self, cs):
        x0 = ComState(0.05, 0.6, 0.0, 0.0)
        traj = simulate(x0, constant_policy(0.05, G / 0.6), 0.5, 1e-3, cs)
        assert traj.failure is None
        states = traj.data[:, 0:4]
        assert np.all(states == states[0])

    def test_pure_capture_policy_preserves_indicator(self, cs):
        rng = make_rng(13)
        x0 = sample_in_inner(rng, cs)
        traj = simulate(x0, PureIciPolicy(G), 4.0, 1e-3, cs)
        xi = traj.data[:, 6:8]
        assert np.abs(xi - xi[0]).max() < 1e-6

    def test_ground_strike_flagged(self, cs):
        x0 = ComState(0.0, 0.3, 0.0, -1.5)
        traj = simulate(x0, constant_policy(0.0, 12.25), 2.0, 1e-3, cs)
        assert traj.failure is not None
        assert traj.failure.reason == "constraint"
        assert traj.n_rows < 2001
        # recorded rows are all valid states
        assert np.all(traj.data[:, 1] > 0.0)

    def test_input_violations_flagged(self, cs):
        x0 = ComState(0.0, 0.6, 0.0, 0.0)
        traj = simulate(x0, constant_policy(0.2, 16.0), 0.01, 1e-3, cs)
        assert traj.input_violations.size == traj.n_rows

    def test_uniform_timestamps(self, cs):
        x0 = ComState(0.0, 0.6, 0.1, 0.1)
        traj = simulate(x0, constant_policy(0.0, 16.0), 0.1, 1e-3, cs)
        t = traj.t
        assert np.all(np.diff(t) > 0)
        assert np.allclose(np.diff(t), 1e-3, atol=1e-12)

    def test_non_multiple_horizon_rejected(self, cs):
        x0 = ComState(0.0, 0.6, 0.0, 0.0)
        with pytest.raises(ValueError):
            simulate(x0, constant_policy(0.0, 16.0), 0.0015, 1e-3 * 1.0001, cs)


class TestValidation:
    def test_com_state_invariants(self):
        with pytest.raises(ValueError):
            ComState(0.0, 0.0, 0.0, 0.0)
        with pytest.raises(ValueError):
            ComState(0.0, -0.1, 0.0, 0.0)
        with pytest.raises(ValueError):
            ComState(math.nan, 0.6, 0.0, 0.0)

    def test_control_input_invariants(self):
        with pytest.raises(ValueError):
            ControlInput(0.0, 0.0)

    def test_constraint_set_invariants(self):
        with pytest.raises(ValueError):
            ConstraintSet(0.1, 0.1, 12.0, 19.0)
        with pytest.raises(ValueError):
            ConstraintSet(-0.1, 0.1, 0.0, 19.0)
        with pytest.raises(ValueError):
            ConstraintSet(-0.1, 0.1, 19.0, 12.0)
        with pytest.raises(ValueError):
            ConstraintSet(-0.1, 0.1, 12.0, 19.0, g=-1.0)

    def test_height_band(self, cs):
        lo, hi = cs.height_band
        assert lo == pytest.approx(0.5)
        assert hi == pytest.approx(0.8)
