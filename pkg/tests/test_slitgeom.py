import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from alegrowth.slitgeom import (
    DomainError,
    LogPolarPoint,
    SingularityError,
    SlitParams,
    base_angle,
    capacity_from_length,
    expm1_complex,
    halfplane_slit_map,
    length_from_capacity,
    mobius_to_disk,
    mobius_to_halfplane,
    scaled_halfplane_slit,
    slit_log_deriv,
    slit_logpolar,
    slit_map,
    slit_map_deriv,
    wrap_angle,
)

from .conftest import halfplane_reverse_flow

# lengths from numerically inverting e^t = 1 + d^2/(4(1+d)) at 40 digits
FROZEN_LENGTH = {
    1e-4: 0.020201510060751727122,
    0.01: 0.22160639306074513059,
    1.0: 7.7589584887082660184,
}
FROZEN_BETA = {
    1e-4: 0.01999983333375000744,
    0.01: 0.19983337507438296683,
    1.0: 1.8382133145871768441,
}
# closed form evaluated at 40 digits
FROZEN_MAP = [
    (0.01, 1.05 + 0j, 1.2288102636309564116 + 0j),
    (0.01, 1.2j, 0.011880191910300021754 + 1.2021283917305119913j),
    (0.3, -1.5 + 0.5j, -1.5880323431827764458 + 0.61771100332093460264j),
    (1.0, 2 + 2j, 9.4686750268862815915 + 4.799583549461359589j),
]

caps = st.floats(1e-8, 1.0)


def mp_slit(t, s, th, dps=50):
    """High-precision closed form and derivative at exp(s + i th)."""
    with mp.workdps(dps):
        T = mp.mpf(t)
        z = mp.exp(mp.mpf(s) + 1j * mp.mpf(th))
        d = 2 * mp.exp(T) * (1 + mp.sqrt(1 - mp.exp(-T))) - 2
        B = 2 * mp.atan(d / (2 * mp.sqrt(d + 1)))
        Q = mp.sqrt(1 - mp.exp(1j * B) / z) * mp.sqrt(1 - mp.exp(-1j * B) / z)
        f = mp.exp(T) / (2 * z) * (z * z + 2 * (1 - mp.exp(-T)) * z + 1 + (z + 1) * z * Q)
        fp = f / z * (1 - 1 / z) / Q
        lf, lfp = mp.log(f), mp.log(fp)
        return float(lf.real), float(lf.imag), float(lfp.real), float(lfp.imag)


class TestDictionary:
    def test_zero_capacity(self):
        assert length_from_capacity(0.0) == 0.0
        assert capacity_from_length(0.0) == 0.0
        assert base_angle(0.0) == 0.0

    def test_ln2_values(self):
        assert length_from_capacity(math.log(2)) == pytest.approx(2 + 2 * math.sqrt(2), rel=1e-14)
        assert capacity_from_length(2 + 2 * math.sqrt(2)) == pytest.approx(math.log(2), rel=1e-14)
        assert abs(base_angle(math.log(2)) - math.pi / 2) < 1e-12

    @pytest.mark.parametrize("t", sorted(FROZEN_LENGTH))
    def test_frozen_lengths_and_angles(self, t):
        assert length_from_capacity(t) == pytest.approx(FROZEN_LENGTH[t], rel=1e-14)
        assert base_angle(t) == pytest.approx(FROZEN_BETA[t], rel=1e-14)

    def test_small_capacity_length_scale(self):
        d = length_from_capacity(1e-4)
        assert abs(d / (2 * math.sqrt(1e-4)) - 1) < 0.02

    def test_beta_over_d_near_one(self):
        r = base_angle(1e-6) / length_from_capacity(1e-6)
        assert 0.999 <= r <= 1

    @given(caps)
    def test_roundtrip(self, t):
        assert capacity_from_length(length_from_capacity(t)) == pytest.approx(t, rel=1e-12)

    @given(caps)
    def test_capacity_identity(self, t):
        d = length_from_capacity(t)
        assert math.exp(t) == pytest.approx(1 + d * d / (4 * (1 + d)), rel=1e-12)

    @given(caps)
    def test_beta_in_range(self, t):
        b, d = base_angle(t), length_from_capacity(t)
        assert 0 < b < math.pi
        assert 0 < b / d <= 1

    def test_negative_rejected(self):
        with pytest.raises(DomainError):
            length_from_capacity(-1e-3)
        with pytest.raises(DomainError):
            capacity_from_length(-0.1)

    def test_params(self):
        p = SlitParams.from_length(FROZEN_LENGTH[0.01])
        assert p.t == pytest.approx(0.01, rel=1e-13)
        assert p.beta == pytest.approx(FROZEN_BETA[0.01], rel=1e-13)


class TestSlitMap:
    @pytest.mark.parametrize("t,z,w", FROZEN_MAP)
    def test_frozen_values(self, t, z, w):
        assert abs(slit_map(t, z) - w) <= 1e-13 * abs(w)

    @pytest.mark.parametrize("t", [1e-8, 1e-4, 0.01, 0.5, 1.0])
    def test_tip(self, t):
        assert abs(slit_map(t, LogPolarPoint(0.0, 0.0)) - (1 + length_from_capacity(t))) < 1e-10

    def test_identity_at_zero_capacity(self):
        z = np.array([1.2 + 0.3j, -2.0, 1j])
        assert np.allclose(slit_map(0.0, z), z, rtol=0, atol=1e-15)

    @pytest.mark.parametrize("t", [1e-3, 0.1, 1.0])
    def test_asymptote(self, t):
        assert abs(slit_map(t, 1e6) / 1e6 - math.exp(t)) <= 1e-5

    def test_base_point_ln2_near_one(self):
        w = slit_map(math.log(2), LogPolarPoint(1e-12, math.pi / 2))
        assert abs(w - 1) < 1e-5

    def test_inside_rejected(self):
        with pytest.raises(DomainError):
            slit_map(0.1, 0.5 + 0j)
        with pytest.raises(DomainError):
            LogPolarPoint(-1e-3, 0.0)

    @given(caps, st.floats(1e-6, 3.0), st.floats(-math.pi, math.pi))
    def test_outward_and_growth_bound(self, t, s, th):
        r = math.exp(s)
        w = slit_map(t, LogPolarPoint(s, th))
        assert abs(w) > r
        assert abs(w) <= math.exp(t) * (r + 4)

    @given(caps, st.floats(0.0, 1.0))
    def test_boundary_off_arc_stays_on_circle(self, t, u):
        b = base_angle(t)
        th = b + (math.pi - b) * max(u, 1e-9)
        for sgn in (1, -1):
            assert abs(abs(slit_map(t, LogPolarPoint(0.0, sgn * th))) - 1) < 1e-9

    @given(caps, st.floats(-1.0, 1.0))
    def test_boundary_on_arc_lands_on_slit(self, t, u):
        b = base_angle(t)
        w = slit_map(t, LogPolarPoint(0.0, u * b * (1 - 1e-12)))
        assert abs(w.imag) < 1e-9 * (1 + abs(w))
        assert 1 - 1e-12 <= w.real <= 1 + length_from_capacity(t) + 1e-12

    def test_matches_high_precision_near_circle(self):
        worst = 0.0
        for t in [1e-8, 1e-4, 0.01, 1.0]:
            b = base_angle(t)
            for s in [1e-15, 1e-8, 1e-3, 0.5, 2.0]:
                for th in [0.0, b / 2, b * (1 - 1e-6), b * (1 + 1e-6), 1.0, -2.5]:
                    ls, la, _, _ = mp_slit(t, s, th)
                    s2, th2 = slit_logpolar(t, s, th)
                    worst = max(worst, abs(s2 - ls) / abs(ls), abs(wrap_angle(th2 - la)))
        # the conditioning of e^{s+i th} near a base point is ~1/|th - beta|
        assert worst < 1e-9

    def test_wrap_keeps_small_angles(self):
        assert wrap_angle(1e-300) == 1e-300
        assert wrap_angle(math.pi) == -math.pi
        assert wrap_angle(-math.pi) == -math.pi
        assert abs(wrap_angle(3 * math.pi + 0.1) - (-math.pi + 0.1)) < 1e-14


class TestDerivative:
    def test_central_difference(self):
        z, h, t = 1.05, 1e-6, 0.01
        fd = (slit_map(t, z + h) - slit_map(t, z - h)) / (2 * h)
        assert abs(fd / slit_map_deriv(t, z) - 1) < 1e-8

    def test_random_interior_finite_difference(self, rng):
        for _ in range(100):
            t = 10 ** rng.uniform(-4, 0)
            z = np.exp(rng.uniform(0.05, 1.5) + 1j * rng.uniform(-np.pi, np.pi))
            h = 1e-6 * abs(z)
            fd = (slit_map(t, z + h) - slit_map(t, z - h)) / (2 * h)
            assert abs(fd / slit_map_deriv(t, z) - 1) < 1e-7

    @given(caps, st.floats(1e-12, 2.0), st.floats(0.0, math.pi))
    def test_reflection_symmetry(self, t, s, th):
        a = slit_map_deriv(t, LogPolarPoint(s, th))
        b = slit_map_deriv(t, LogPolarPoint(s, -th))
        assert abs(abs(a) - abs(b)) <= 1e-12 * abs(a)

    def test_high_precision_near_boundary(self):
        worst, worst_base = 0.0, 0.0
        for t in [1e-8, 1e-4, 0.01, 1.0, 5.0]:
            b = base_angle(t)
            for s in [1e-15, 1e-8, 1e-3, 0.5, 2.0, 30.0]:
                for th in [0.0, b / 2, b * (1 - 1e-6), b * (1 + 1e-6), 1.0, 3.0]:
                    _, _, lre, lim = mp_slit(t, s, th)
                    s2, th2 = slit_logpolar(t, s, th)
                    re, im = slit_log_deriv(t, s, th, s2, th2)
                    err = abs(re - lre) + abs(wrap_angle(im - lim))
                    if abs(th - b) < 1e-5 * b:
                        worst_base = max(worst_base, err)
                    else:
                        worst = max(worst, err)
        assert worst < 1e-12
        # rounding of beta is amplified by ~1/|th - beta| next to a base point
        assert worst_base < 1e-9

    def test_zero_at_tip_preimage(self):
        assert slit_map_deriv(0.1, LogPolarPoint(0.0, 0.0)) == 0

    def test_singular_at_base(self):
        b = base_angle(0.1)
        with pytest.raises(SingularityError):
            slit_map_deriv(0.1, LogPolarPoint(0.0, b))

    def test_near_tip_scaling_bracket(self):
        ratios = []
        for t in [1e-6, 1e-4, 1e-2]:
            d, b = length_from_capacity(t), base_angle(t)
            for sig in np.logspace(-10, 0, 11) * d:
                for th in np.concatenate([[0.0], np.logspace(-10, 0, 11) * b / 2]):
                    z = LogPolarPoint(sig, th)
                    r = abs(slit_map_deriv(t, z)) * d / (math.exp(t) * abs(np.expm1(sig + 1j * th)))
                    ratios.append(r)
        ratios = np.array(ratios)
        assert ratios.min() > 0.1 and ratios.max() < 10

    def test_H_bounded(self, rng):
        for _ in range(500):
            t = rng.uniform(1e-6, 1.0)
            z = np.exp(rng.uniform(1e-9, math.log(2)) + 1j * rng.uniform(-np.pi, np.pi))
            H = slit_map(t, z) / (z * math.exp(t))
            assert 0.1 <= abs(H) <= 10

    def test_near_tip_movement(self):
        for t in [1e-6, 1e-4, 1e-3, 0.04]:
            b = base_angle(t)
            for eps in np.logspace(-12, 0, 13) * math.sqrt(t):
                for th in np.linspace(-b / 2, b / 2, 9):
                    w = slit_map(t, LogPolarPoint(math.log1p(eps), th))
                    assert abs(w) - 1 >= math.sqrt(t) / 10
                    assert abs(np.angle(w)) <= 2 * eps + 1e-15

    def test_expm1_complex(self):
        re, im = expm1_complex(1e-17, 1e-17)
        assert re == pytest.approx(1e-17, rel=1e-12) and im == pytest.approx(1e-17, rel=1e-12)


class TestHalfPlane:
    @given(st.floats(1e-8, 1.0), st.floats(1e-6, 10.0))
    def test_imaginary_axis(self, t, y):
        w = halfplane_slit_map(t, 1j * y)
        assert abs(w - 1j * math.sqrt(y * y + 4 * t)) <= 1e-12 * abs(w)

    def test_boundary_value(self):
        t = 0.01
        w = halfplane_slit_map(t, 3 * math.sqrt(t), boundary=True)
        assert abs(w - math.sqrt(5) * math.sqrt(t)) < 1e-14
        inner = halfplane_slit_map(t, 3 * math.sqrt(t) + 1e-10j)
        assert abs(inner - w) < 1e-8

    def test_near_tip_box(self):
        for t in [1e-6, 1e-3, 0.1]:
            r = math.sqrt(t)
            for y in np.linspace(1e-3, 1, 15) * r:
                for x in np.linspace(-1.2, 1.2, 15) * r:
                    w = halfplane_slit_map(t, x + 1j * y)
                    assert abs(w.real) <= y * (1 + 1e-12)
                    assert 0.7 * 2 * r <= w.imag <= math.sqrt(5) / 2 * 2 * r * (1 + 1e-12)

    def test_lower_half_rejected(self):
        with pytest.raises(DomainError):
            halfplane_slit_map(0.1, 1.0 - 0.1j)
        with pytest.raises(DomainError):
            halfplane_slit_map(0.1, 1.0)

    @pytest.mark.parametrize("z", [0.3 + 0.2j, -1 + 1j, 2j, 0.05 + 0.01j])
    def test_matches_reverse_flow(self, z):
        t = 0.04
        assert abs(halfplane_reverse_flow(z, t) - halfplane_slit_map(t, z)) < 1e-9


class TestMobius:
    def test_normalisations(self):
        assert mobius_to_halfplane(1.0) == 0
        assert mobius_to_halfplane(complex("inf")) == 1j
        assert mobius_to_disk(0.0) == 1

    def test_inverse_pair(self, rng):
        z = np.exp(rng.uniform(0, 2, 50) + 1j * rng.uniform(-3, 3, 50))
        assert np.allclose(mobius_to_disk(mobius_to_halfplane(z)), z, rtol=1e-13, atol=0)

    def test_decomposition(self, rng):
        for t in [1e-4, 0.01, 0.5]:
            d = length_from_capacity(t)
            z = np.exp(rng.uniform(1e-6, math.log(3), 100) + 1j * rng.uniform(-np.pi, np.pi, 100))
            lhs = slit_map(t, z)
            rhs = mobius_to_disk(scaled_halfplane_slit(d, mobius_to_halfplane(z)))
            assert np.max(np.abs(lhs - rhs)) < 1e-10

    def test_pre_tip_root(self):
        d = 0.3
        assert abs(scaled_halfplane_slit(d, d / (2 * math.sqrt(d + 1)))) < 1e-15

    def test_poles_rejected(self):
        with pytest.raises(DomainError):
            mobius_to_halfplane(-1.0)
        with pytest.raises(DomainError):
            mobius_to_disk(1j)
