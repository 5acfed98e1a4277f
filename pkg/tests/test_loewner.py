import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from alegrowth.cluster import ClusterState, map_deriv, map_point
from alegrowth.harness.config import ExperimentConfig
from alegrowth.harness.experiments import run_estimate_checks
from alegrowth.loewner import (
    DrivingFunction,
    angular_lifetime,
    check_away_estimate,
    check_tip_estimate,
    continuity_check,
    deriv_ratio_monitor,
    reference_angular,
    reference_radial,
    reverse_flow,
    reverse_flow_deriv,
    reverse_flow_logpolar,
)
from alegrowth.slitgeom import DomainError, LogPolarPoint, length_from_capacity, slit_map, slit_map_deriv

TOL = 1e-10


def cluster_driver(rng, n=20, c=2e-3):
    th = np.cumsum(rng.normal(0, 0.3, n))
    caps = c * rng.uniform(0.5, 1.5, n)
    return ClusterState.from_arrays(th, caps)


class TestDrivingFunction:
    def test_values_and_norm(self):
        xi = DrivingFunction.from_blocks([0.1, -0.3, 0.2], [1.0, 1.0, 1.0])
        assert xi(0.5) == 0.1 and xi(1.0) == 0.1 and xi(1.5) == -0.3
        assert xi.sup_norm(1.0) == 0.1
        assert xi.sup_norm(1.5) == 0.3
        assert xi.sup_norm(3.0, centre=0.2) == 0.5

    def test_reverse_segments(self):
        xi = DrivingFunction.from_blocks([1.0, 2.0, 3.0], [0.5, 0.25, 0.25])
        assert xi.reverse_segments(0.6) == [(pytest.approx(0.1), 2.0), (0.5, 1.0)]
        with pytest.raises(DomainError):
            xi.reverse_segments(1.5)

    def test_bad_jumps(self):
        with pytest.raises(DomainError):
            DrivingFunction(np.array([0.0, 1.0, 1.0]), np.array([0.0, 1.0]))


class TestReferenceFlows:
    @given(st.floats(1.0, 50.0), st.floats(1e-6, 2.0))
    def test_radial_matches_slit_map(self, r, t):
        assert reference_radial(r, t) == pytest.approx(slit_map(t, r).real, rel=1e-12)

    @pytest.mark.parametrize("t", [1e-6, 0.01, 0.5])
    def test_radial_unit_limit(self, t):
        assert reference_radial(1.0, t) == pytest.approx(length_from_capacity(t) + 1, rel=1e-13)

    def test_radial_increasing(self):
        v = reference_radial(1.3, np.linspace(0, 1, 50))
        assert np.all(np.diff(v) > 0)

    def test_antipode_fixed(self):
        assert np.allclose(reference_angular(math.pi, np.array([0.0, 0.5, 3.0])), math.pi, rtol=0, atol=1e-12)

    def test_lifetime_hits_zero(self):
        th = 1.2
        assert abs(reference_angular(th, angular_lifetime(th))) < 1e-7
        with pytest.raises(DomainError):
            reference_angular(th, angular_lifetime(th) * 1.01)

    @given(st.floats(0.1, 3.0), st.floats(0.0, 0.99))
    def test_angular_closed_form(self, th, u):
        t = u * float(angular_lifetime(th))
        expect = math.acos((1 + math.cos(th)) * math.exp(t) - 1)
        assert reference_angular(th, t) == pytest.approx(expect, abs=1e-7)
        assert reference_angular(-th, t) == -reference_angular(th, t)

    def test_angular_decreasing(self):
        v = reference_angular(2.0, np.linspace(0, 0.9 * angular_lifetime(2.0), 40))
        assert np.all(np.diff(v) < 0)

    def test_radial_rejects_inside(self):
        with pytest.raises(DomainError):
            reference_radial(0.9, 0.1)


class TestReverseFlow:
    @pytest.mark.parametrize("r", [1.001, 1.5, 4.0])
    def test_real_axis_zero_driver(self, r):
        T = 0.3
        w = reverse_flow(DrivingFunction.constant(0.0, T), T, r, TOL)
        assert abs(w - reference_radial(r, T)) <= 10 * TOL * abs(w)

    def test_zero_driver_equals_slit_map(self, rng):
        T = 0.05
        xi = DrivingFunction.constant(0.0, T)
        z = np.exp(rng.uniform(1e-3, 1.5, 40) + 1j * rng.uniform(-np.pi, np.pi, 40))
        w = reverse_flow(xi, T, z, TOL)
        assert np.max(np.abs(w - slit_map(T, z)) / np.abs(w)) <= 10 * TOL
        dw = reverse_flow_deriv(xi, T, z, TOL)
        assert np.max(np.abs(dw / slit_map_deriv(T, z) - 1)) <= 1e-6

    def test_matches_composition(self, rng):
        for _ in range(5):
            st_ = cluster_driver(rng)
            xi = DrivingFunction.from_cluster(st_)
            z = np.exp(rng.uniform(math.log(1.1), 1.5, 30) + 1j * rng.uniform(-np.pi, np.pi, 30))
            w = reverse_flow(xi, st_.total_capacity, z, TOL)
            assert np.max(np.abs(w / map_point(st_, z) - 1)) <= 1e-6
            dw = reverse_flow_deriv(xi, st_.total_capacity, z, TOL)
            assert np.max(np.abs(dw / map_deriv(st_, z) - 1)) <= 1e-5

    def test_deriv_nonzero(self, rng):
        st_ = cluster_driver(rng)
        xi = DrivingFunction.from_cluster(st_)
        z = LogPolarPoint(np.full(20, 1e-9), rng.uniform(-np.pi, np.pi, 20))
        _, _, lr, li = reverse_flow_logpolar(xi, st_.total_capacity, z.s, z.theta, TOL)
        assert np.all(np.isfinite(lr)) and np.all(np.abs(np.exp(lr + 1j * li)) > 0)

    def test_step_halving(self, rng):
        st_ = cluster_driver(rng, n=10)
        xi = DrivingFunction.from_cluster(st_)
        z = np.exp(rng.uniform(0.05, 1.0, 20) + 1j * rng.uniform(-np.pi, np.pi, 20))
        tol = 1e-8
        a = reverse_flow(xi, st_.total_capacity, z, tol)
        b = reverse_flow(xi, st_.total_capacity, z, tol / 2)
        assert np.max(np.abs(a - b) / np.abs(b)) <= tol

    def test_radius_non_decreasing(self, rng):
        st_ = cluster_driver(rng, n=10)
        xi = DrivingFunction.from_cluster(st_)
        s = rng.uniform(1e-4, 0.5, 10)
        th = rng.uniform(-np.pi, np.pi, 10)
        prev = s
        for T in np.linspace(0, st_.total_capacity, 12)[1:]:
            rho, _, _, _ = reverse_flow_logpolar(xi, T, s, th, TOL, deriv=False)
            assert np.all(rho >= prev * (1 - 1e-9))
            prev = rho

    def test_interior_rejected(self):
        with pytest.raises(DomainError):
            reverse_flow(DrivingFunction.constant(0.0, 0.1), 0.1, 0.9)

    def test_halfplane_fixture_consistency(self):
        from alegrowth.slitgeom import halfplane_slit_map

        from .conftest import halfplane_reverse_flow

        for z in [0.1 + 0.3j, -0.5 + 0.05j, 1.0 + 1.0j]:
            assert abs(halfplane_reverse_flow(z, 0.02) - halfplane_slit_map(0.02, z)) < 1e-9


class TestTipEstimate:
    def test_aligned_driver_keeps_argument(self):
        T, argz = 0.01, 1e-5
        xi = DrivingFunction.constant(argz, T)
        r = check_tip_estimate(xi, LogPolarPoint(math.log(1.5), argz), T)
        assert abs(r.detail["arg_psi"] - argz) <= 1e-15
        assert not r.violated

    def test_zero_driver_equality(self):
        T = 0.01
        r = check_tip_estimate(DrivingFunction.constant(0.0, T), LogPolarPoint(math.log(1.5), 0.0), T)
        assert r.admissible and not r.violated
        assert r.arg_violation <= 0
        assert abs(r.radial_violation) <= 10 * TOL * r.detail["r0"]

    def test_inadmissible_flagged(self):
        T = 0.01
        r = check_tip_estimate(DrivingFunction.constant(0.5, T), LogPolarPoint(math.log(1.5), 0.0), T)
        assert not r.admissible and not r.violated and r.hypothesis_margin < 0


class TestAwayEstimate:
    def test_zero_driver_defining_case(self):
        T, th = 0.1, 2.0
        r = check_away_estimate(DrivingFunction.constant(0.0, T), LogPolarPoint(1e-9, th), T)
        assert r.admissible and not r.violated
        assert abs(r.detail["arg_psi"] - reference_angular(th, T)) < 1e-8

    def test_radial_tracking(self):
        th = 2.0
        for T in [1e-4, 1e-3, 1e-2]:
            r = check_away_estimate(DrivingFunction.constant(0.0, T), LogPolarPoint(1e-8, th), T)
            assert abs(r.radial_log_ratio) <= 1.0

    def test_random_cases(self):
        cfg = ExperimentConfig(experiment="estimates", cases=40, seed=3)
        rep = run_estimate_checks(cfg)
        assert rep.passed, rep.violations


class TestMonitors:
    def test_zero_driver_tip_ratio(self):
        T = 0.02
        m = deriv_ratio_monitor(DrivingFunction.constant(0.0, T), LogPolarPoint(math.log(1.3), 0.0), T)
        assert m["tip_ratio"] < 1e-8

    def test_lower_bound_positive(self, rng):
        vals = []
        for _ in range(1000):
            T = 10 ** rng.uniform(-3, 0)
            xi = DrivingFunction.from_blocks(rng.uniform(-0.1, 0.1, 3), np.full(3, T / 3))
            z = LogPolarPoint(10 ** rng.uniform(-4, 0), rng.uniform(0.2, 3.0))
            vals.append(deriv_ratio_monitor(xi, z, T, tol=1e-8)["lower_bound_ratio"])
        vals = np.array(vals)
        assert np.all(np.isfinite(vals)) and np.all(vals > 0)

    def test_tip_ratio_grows_with_driver(self, rng):
        lo, hi = [], []
        for _ in range(100):
            T = 10 ** rng.uniform(-3, -1)
            z = LogPolarPoint(math.log1p(rng.uniform(0.1, 0.9)), 0.0)
            v = rng.choice([-1.0, 1.0], 4) * rng.uniform(0.5, 1.0, 4)
            amp = 1e-3
            a = DrivingFunction.from_blocks(amp * v, np.full(4, T / 4))
            b = DrivingFunction.from_blocks(2 * amp * v, np.full(4, T / 4))
            lo.append(deriv_ratio_monitor(a, z, T)["tip_ratio"])
            hi.append(deriv_ratio_monitor(b, z, T)["tip_ratio"])
        assert max(hi) >= max(lo)


class TestContinuity:
    def test_identical_drivers(self, rng):
        xi = DrivingFunction.from_cluster(cluster_driver(rng, n=5))
        assert continuity_check(xi, xi, xi.total, n_rays=16) == 0.0

    def test_shrinking_perturbation(self, rng):
        xi = DrivingFunction.from_cluster(cluster_driver(rng, n=5))
        d = [continuity_check(xi, xi.rotated(e), xi.total, n_rays=16) for e in [1e-1, 1e-2, 1e-3]]
        assert d[0] > d[1] > d[2]

    def test_rotation_bound(self, rng):
        xi = DrivingFunction.from_cluster(cluster_driver(rng, n=5))
        phi = 1e-3
        dist = continuity_check(xi, xi.rotated(phi), xi.total, n_rays=16)
        ang = np.linspace(-np.pi, np.pi, 16, endpoint=False)
        big = np.max(np.abs(reverse_flow(xi, xi.total, 10 * np.exp(1j * ang))))
        assert dist <= 2 * phi * big * 1.01
