"""Capture-input, capture-point and divergent-component indicator tests."""

import math

import numpy as np
import pytest

from conftest import make_rng, sample_in_inner, sample_state
from vhip_balance.indicators import (
    DcmDivergence,
    DcmState,
    alpha,
    beta,
    dcm_update,
    ici,
    ici_rate,
    icp,
    omega,
    two_sided,
)
from vhip_balance.model import ComState, ControlInput, simulate, step
from vhip_balance.control import PureIciPolicy

G = 9.8


def omega_bisect(c_z, dc_z, g, lo=1e-9, hi=100.0):
    """Independent root finder for c_z*w^2 + dc_z*w - g = 0."""
    q = lambda w: c_z * w * w + dc_z * w - g
    assert q(lo) < 0 < q(hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if q(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


class TestOmega:
    def test_rest(self):
        assert omega(0.6, 0.0, G) == pytest.approx(math.sqrt(G / 0.6), abs=1e-12)
        assert omega(0.5, 0.0, G) == pytest.approx(math.sqrt(19.6), abs=1e-12)

    def test_descending_against_bisection(self):
        w = omega(0.6, -0.5, G)
        assert w == pytest.approx(4.4795, abs=1e-4)
        assert w == pytest.approx(omega_bisect(0.6, -0.5, G), abs=1e-9)
        assert abs(0.6 * w * w - 0.5 * w - G) < 1e-10

    def test_quadratic_residual_bulk(self):
        rng = make_rng(20)
        c_z = rng.uniform(0.05, 2.0, 100_000)
        dc_z = rng.uniform(-3.0, 3.0, 100_000)
        disc = np.sqrt(dc_z**2 + 4 * c_z * G)
        w = np.where(dc_z > 0, 2 * G / (disc + dc_z), (disc - dc_z) / (2 * c_z))
        resid = np.abs(c_z * w * w + dc_z * w - G)
        assert resid.max() < 1e-10
        assert w.min() > 0

    def test_matches_bisection_randomly(self):
        rng = make_rng(21)
        for _ in range(200):
            c_z = rng.uniform(0.05, 2.0)
            dc_z = rng.uniform(-3.0, 3.0)
            assert omega(c_z, dc_z, G) == pytest.approx(
                omega_bisect(c_z, dc_z, G), abs=1e-9
            )

    def test_domain_error(self):
        with pytest.raises(ValueError):
            omega(0.0, 0.0, G)


class TestIci:
    def test_rest_state(self):
        v = ici(ComState(0.05, 0.7, 0.0, 0.0), G)
        assert v.xi_p == pytest.approx(0.05, abs=1e-15)
        assert v.xi_lambda == pytest.approx(14.0, abs=1e-12)

    def test_reference_push_value(self):
        v = ici(ComState(0.0, 0.6, 0.58, 0.0), G)
        assert v.xi_p == pytest.approx(0.1435, abs=5e-4)
        assert v.xi_lambda == pytest.approx(G / 0.6, abs=1e-12)

    def test_boundary_velocity(self, cs):
        v = ici(ComState(0.0, 0.6, 0.5658, 0.0), G)
        assert v.xi_p == pytest.approx(cs.p_max, abs=1e-4)


class TestIcp:
    def test_rest(self):
        assert icp(0.1, 0.0, 12.0) == 0.1

    def test_direct(self):
        assert icp(0.0, 0.58, G / 0.6) == pytest.approx(0.14351, abs=1e-5)

    def test_coincides_with_capture_input_at_level_motion(self):
        rng = make_rng(22)
        for _ in range(100):
            c_x = rng.uniform(-0.5, 0.5)
            c_z = rng.uniform(0.3, 1.0)
            dc_x = rng.uniform(-1, 1)
            v = ici(ComState(c_x, c_z, dc_x, 0.0), G)
            assert icp(c_x, dc_x, G / c_z) == pytest.approx(v.xi_p, abs=1e-12)

    def test_domain_error(self):
        with pytest.raises(ValueError):
            icp(0.0, 0.0, 0.0)


class TestTwoSided:
    def test_rest_collapses(self, cs):
        ts = two_sided(ComState(0.3, 0.6, 0.0, 0.1), cs)
        assert ts.xi_p_plus == ts.xi_p_minus == 0.3

    def test_reference_values(self, cs):
        ts = two_sided(ComState(0.0, 0.6, 0.58, 0.0), cs)
        assert ts.xi_p_plus == pytest.approx(0.58 / math.sqrt(19.6), abs=1e-5)
        assert ts.xi_p_minus == pytest.approx(0.58 / 3.5, abs=1e-5)
        assert ts.xi_p_plus == pytest.approx(0.13101, abs=1e-5)
        assert ts.xi_p_minus == pytest.approx(0.16571, abs=1e-5)

    def test_sandwich_property(self, cs):
        # the bracket holds wherever the stiffness component is inside its
        # band, which is where the region approximations live
        rng = make_rng(23)
        for _ in range(2000):
            xi_lam = rng.uniform(cs.lambda_min, cs.lambda_max)
            w = math.sqrt(xi_lam)
            c_z = rng.uniform(0.1, 1.5)
            x = ComState(
                rng.uniform(-1, 1), c_z, rng.uniform(-3, 3), (cs.g - c_z * xi_lam) / w
            )
            ts = two_sided(x, cs)
            v = ici(x, cs.g)
            assert min(ts.xi_p_plus, ts.xi_p_minus) <= v.xi_p + 1e-12
            assert v.xi_p <= max(ts.xi_p_plus, ts.xi_p_minus) + 1e-12


class TestIciRate:
    def test_stationary_at_own_input(self):
        rng = make_rng(24)
        for _ in range(200):
            x = sample_state(rng)
            u = ici(x, G).as_input()
            assert np.abs(ici_rate(x, u, G)).max() < 1e-12

    def test_finite_difference_oracle(self):
        # central difference of the indicator along the frozen-input flow
        rng = make_rng(25)
        h = 1e-5
        for _ in range(200):
            x = sample_state(rng)
            u = ControlInput(rng.uniform(-0.2, 0.2), rng.uniform(10.0, 20.0))
            try:
                xp = step(x, u, h, G)
                xm = step(x, u, -h, G)
            except ValueError:
                continue
            fd = (ici(xp, G).as_array() - ici(xm, G).as_array()) / (2 * h)
            rate = ici_rate(x, u, G)
            assert np.abs(fd - rate).max() < 1e-4 * max(1.0, np.abs(rate).max())

    def test_stiffness_rate_sign(self):
        rng = make_rng(26)
        for _ in range(500):
            x = sample_state(rng)
            u = ControlInput(rng.uniform(-0.2, 0.2), rng.uniform(10.0, 20.0))
            d = ici_rate(x, u, G)
            gap = ici(x, G).xi_lambda - u.lambda_
            assert math.copysign(1.0, d[1]) == math.copysign(1.0, gap) or gap == 0


class TestAlphaBeta:
    def test_positive(self):
        rng = make_rng(27)
        for _ in range(500):
            c_z = rng.uniform(0.05, 2.0)
            xi_lam = rng.uniform(1.0, 40.0)
            assert alpha(c_z, xi_lam, G) > 0
            assert beta(c_z, xi_lam, G) > 0

    def test_closed_forms(self):
        c_z, xi_lam = 0.6, 16.0
        root = math.sqrt(xi_lam)
        assert alpha(c_z, xi_lam, G) == pytest.approx(
            G / (root * (c_z * xi_lam + G)), abs=1e-15
        )
        assert beta(c_z, xi_lam, G) == pytest.approx(
            2 * c_z * xi_lam * root / (c_z * xi_lam + G), abs=1e-12
        )


class TestDcm:
    def test_fixed_point(self):
        lam = 16.0
        s = DcmState.from_state(ComState(0.0, 0.6, 0.0, 0.0), math.sqrt(lam))
        x = ComState(0.0, 0.6, 0.0, 0.0)
        s2 = dcm_update(s, x, ControlInput(0.0, lam), 1e-3, G)
        assert s2.omega_dcm == pytest.approx(math.sqrt(lam), abs=1e-15)

    def test_rate_increases_above_held_stiffness(self):
        # rate starts above sqrt(held stiffness): strictly increasing
        lam = 12.25
        w = math.sqrt(G / 0.6)
        x = ComState(0.0, 0.6, 0.0, 0.0)
        u = ControlInput(0.0, lam)
        s = DcmState.from_state(x, w)
        values = [s.omega_dcm]
        for _ in range(200):
            s = dcm_update(s, x, u, 1e-3, G)
            values.append(s.omega_dcm)
        assert all(b > a for a, b in zip(values, values[1:]))

    def test_reduces_to_capture_point_in_fixed_height_regime(self, cs):
        # constant height, matching stiffness and rate: the component's
        # horizontal part equals the capture point at every step
        h = 0.6
        lam = G / h
        w = math.sqrt(lam)
        x = ComState(0.02, h, 0.3, 0.0)
        s = DcmState.from_state(x, w)
        u = ControlInput(0.0, lam)
        for _ in range(100):
            x = step(x, u, 1e-3, G)
            s = dcm_update(s, x, u, 1e-3, G)
            assert s.omega_dcm == pytest.approx(w, abs=1e-12)
            assert s.xi_dcm[0] == pytest.approx(icp(x.c_x, x.dc_x, lam), abs=1e-12)

    def test_component_definition_holds_by_construction(self):
        rng = make_rng(28)
        x = sample_state(rng)
        s = DcmState.from_state(x, 4.0)
        assert np.allclose(
            s.xi_dcm, x.position + x.velocity / s.omega_dcm, atol=0, rtol=0
        )

    def test_divergence_error(self):
        # large held stiffness drives the rate through zero
        x = ComState(0.0, 0.6, 0.0, 0.0)
        u = ControlInput(0.0, 19.6)
        s = DcmState.from_state(x, 0.5)
        with pytest.raises(DcmDivergence):
            for _ in range(2000):
                s = dcm_update(s, x, u, 1e-3, G)

    def test_validation(self):
        with pytest.raises(ValueError):
            DcmState(0.0, np.zeros(2))


class TestCapturePolicyConvergence:
    def test_rest_point_reached(self, cs):
        # the state converges to the ground-map image of the initial pair
        rng = make_rng(29)
        for _ in range(5):
            x0 = sample_in_inner(rng, cs)
            xi0 = ici(x0, cs.g)
            traj = simulate(x0, PureIciPolicy(cs.g), 4.0, 1e-3, cs)
            last = traj.final_state
            assert math.hypot(last.dc_x, last.dc_z) < 1e-3
            assert last.c_x == pytest.approx(xi0.xi_p, abs=1e-3)
            assert last.c_z == pytest.approx(cs.g / xi0.xi_lambda, abs=1e-3)
