import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thinfilm.errors import DomainError, RegimeError
from thinfilm import model
from thinfilm.model import (PhysicalScales, SlipParameters, TypeCState,
                            cox_voinov_speed, lubrication_scales, mobility,
                            mobility_derivative, tanner_speed, typeb_profile,
                            typeb_speed, typec_mass, young_angle)


def make_p(n=2.0, eps=1e-3, theta=1.0):
    return SlipParameters(n=n, epsilon=eps, theta=theta)


class TestSlipParameters:
    def test_wetting_flag_derived(self):
        assert make_p(theta=0.0).wetting == "complete"
        assert make_p(theta=0.5).wetting == "partial"

    def test_invalid_exponent(self):
        with pytest.raises(DomainError):
            SlipParameters(n=3.5, epsilon=1e-3, theta=1.0)
        with pytest.raises(DomainError):
            SlipParameters(n=0.0, epsilon=1e-3, theta=1.0)

    def test_zero_slip_needs_flag(self):
        with pytest.raises(DomainError):
            SlipParameters(n=3.0, epsilon=0.0, theta=1.0)
        p = SlipParameters(n=3.0, epsilon=0.0, theta=1.0, no_slip_limit=True)
        assert p.epsilon == 0.0

    def test_wetting_mismatch(self):
        with pytest.raises(DomainError):
            SlipParameters(n=2.0, epsilon=1e-3, theta=0.0, wetting="partial")


class TestMobility:
    def test_zero_height(self):
        assert mobility(0.0, make_p()) == 0.0

    def test_no_slip_reduces_to_cubic(self):
        p = SlipParameters(n=2.0, epsilon=0.0, theta=1.0, no_slip_limit=True)
        assert mobility(1.0, p) == 1.0

    def test_direct_arithmetic(self):
        assert mobility(2.0, make_p(n=2.0, eps=0.5)) == pytest.approx(8.0 + 0.5 * 4.0, abs=0)

    def test_negative_height_rejected(self):
        with pytest.raises(DomainError):
            mobility(-1e-9, make_p())

    @given(h=st.floats(1e-6, 1e3), n=st.floats(0.5, 3.0), eps=st.floats(0.0, 1.0))
    @settings(max_examples=200, deadline=None)
    def test_nonnegative_and_monotone(self, h, n, eps):
        p = SlipParameters(n=n, epsilon=eps, theta=1.0, no_slip_limit=eps == 0.0)
        lo, hi = mobility(h, p), mobility(h * 1.01, p)
        assert lo >= 0.0
        assert hi > lo

    @given(h=st.floats(0.0, 1e3))
    @settings(max_examples=100, deadline=None)
    def test_eps_zero_is_cubic(self, h):
        # identical value up to floating rounding (not bitwise formula path)
        p = SlipParameters(n=1.5, epsilon=0.0, theta=1.0, no_slip_limit=True)
        assert mobility(h, p) == pytest.approx(h ** 3, rel=1e-15, abs=0.0)


class TestMobilityDerivative:
    def test_direct_values(self):
        p0 = SlipParameters(n=2.0, epsilon=0.0, theta=1.0, no_slip_limit=True)
        assert mobility_derivative(1.0, p0) == 3.0
        assert mobility_derivative(1.0, make_p(n=2.0, eps=1.0)) == 5.0

    def test_singular_at_zero_for_small_n(self):
        with pytest.raises(DomainError):
            mobility_derivative(0.0, make_p(n=0.5))

    @pytest.mark.parametrize("h", [0.1, 1.0, 10.0])
    @pytest.mark.parametrize("n,eps", [(2.0, 0.3), (1.5, 0.1), (2.7, 1e-2)])
    def test_against_finite_differences(self, h, n, eps):
        # central finite-difference oracle
        p = make_p(n=n, eps=eps)
        step = 1e-6 * h
        fd = (mobility(h + step, p) - mobility(h - step, p)) / (2.0 * step)
        assert mobility_derivative(h, p) == pytest.approx(fd, rel=1e-8)


class TestYoungAngle:
    def scales(self, dgamma):
        return PhysicalScales(gamma_LG=1.0, gamma_SL=0.0, gamma_SG=dgamma,
                              mu=1.0, sy=0.01, sx=0.1)

    def test_sixty_degrees(self):
        assert young_angle(self.scales(0.5)) == pytest.approx(math.pi / 3.0, abs=1e-15)

    def test_ninety_degrees(self):
        assert young_angle(self.scales(0.0)) == pytest.approx(math.pi / 2.0, abs=1e-15)

    def test_flat_limit(self):
        assert young_angle(self.scales(1.0 - 1e-12)) == pytest.approx(0.0, abs=1e-5)

    def test_no_partial_wetting_rejected(self):
        with pytest.raises(DomainError):
            self.scales(1.0)

    def test_roundtrip_identity(self):
        for theta in np.linspace(1e-3, math.pi - 1e-3, 37):
            s = self.scales(math.cos(theta))
            assert young_angle(s) == pytest.approx(theta, abs=1e-12)


class TestLubricationScales:
    def test_direct(self):
        assert lubrication_scales(1.0, 1.0, 0.01, 0.1) == pytest.approx((0.1, 0.1, 0.1))
        assert lubrication_scales(2.0, 4.0, 0.01, 0.1) == pytest.approx((0.1, 0.2, 0.05))

    def test_equal_lengths(self):
        delta, _, _ = lubrication_scales(1.0, 2.0, 0.3, 0.3)
        assert delta == 1.0

    def test_nonpositive_rejected(self):
        with pytest.raises(DomainError):
            lubrication_scales(1.0, 0.0, 0.01, 0.1)

    def test_consistent_with_scales_type(self):
        s = PhysicalScales(gamma_LG=2.0, gamma_SL=0.1, gamma_SG=0.4,
                           mu=4.0, sy=0.01, sx=0.1)
        assert (s.delta, s.sp, s.st) == pytest.approx(lubrication_scales(2.0, 4.0, 0.01, 0.1))


class TestSpeedLaws:
    def test_cox_voinov_zero_at_matched_angle(self):
        assert cox_voinov_speed(1.0, 1.0, 1e-3) == 0.0

    def test_cox_voinov_values(self):
        assert cox_voinov_speed(1.0, 0.0, math.exp(-10.0)) == pytest.approx(0.1, rel=1e-14)
        assert cox_voinov_speed(2.0, 1.0, math.exp(-20.0)) == pytest.approx(0.2, rel=1e-14)

    def test_cox_voinov_invalid_regime(self):
        with pytest.raises(RegimeError):
            cox_voinov_speed(1.0, 1.0, 1.0)

    @given(theta=st.floats(1e-3, 10.0), eps=st.floats(1e-12, 0.99))
    @settings(max_examples=100, deadline=None)
    def test_cox_voinov_exact_zero_property(self, theta, eps):
        assert cox_voinov_speed(theta, theta, eps) == 0.0

    def test_tanner_values(self):
        assert tanner_speed(1.0, math.exp(-3.0)) == pytest.approx(-1.0 / 9.0, rel=1e-14)
        assert tanner_speed(0.0, 1e-3) == 0.0
        assert tanner_speed(3.0, math.exp(-27.0)) == pytest.approx(-1.0 / 3.0, rel=1e-14)

    @given(g=st.floats(1e-3, 10.0), eps=st.floats(1e-12, 0.99))
    @settings(max_examples=100, deadline=None)
    def test_sign_conventions(self, g, eps):
        assert tanner_speed(g, eps) < 0.0
        assert typeb_speed(g) > 0.0

    def test_typeb_values(self):
        assert typeb_speed(1.0) == pytest.approx(1.0 / 3.0, rel=1e-15)
        assert typeb_speed(3.0 ** (1.0 / 3.0)) == pytest.approx(1.0, rel=1e-14)
        with pytest.raises(DomainError):
            typeb_speed(0.0)


class TestTypebProfile:
    def test_direct_value(self):
        # (3 * 1/3)^(1/3) = 1 and ln(1/xi) = 8
        assert typeb_profile(math.exp(-8.0), 1.0 / 3.0) == pytest.approx(
            math.exp(-8.0) * 2.0, rel=1e-13)

    def test_no_finite_contact_angle(self):
        xs = np.array([1e-4, 1e-8, 1e-12, 1e-16])
        slopes = typeb_profile(xs, 1.0 / 3.0) / xs
        assert np.all(np.diff(slopes) > 0.0)

    def test_domain(self):
        for bad in (0.0, 1.0, 1.5, -0.1):
            with pytest.raises(DomainError):
                typeb_profile(bad, 1.0 / 3.0)
        with pytest.raises(DomainError):
            typeb_profile(0.5, 0.0)

    def test_third_derivative_matches_asymptote(self):
        # symbolic oracle for the third derivative of the profile formula
        import sympy as sp

        x = sp.symbols("xi", positive=True)
        expr = (3 * sp.Rational(1, 3)) ** sp.Rational(1, 3) * x * sp.log(1 / x) ** sp.Rational(1, 3)
        d3 = sp.lambdify(x, sp.diff(expr, x, 3), "mpmath")
        xi0 = math.exp(-8.0)
        exact = float(d3(xi0))
        asym = math.exp(16.0) / 12.0   # (1/3) xi^-2 (ln 1/xi)^(-2/3) at xi = e^-8
        assert exact == pytest.approx(asym, rel=0.02)


class TestTypecMass:
    def test_constant_path(self):
        x = np.linspace(0.0, 2.0, 101)
        m = typec_mass(x, np.ones_like(x), np.full(7, 0.5))
        assert np.all(m == 0.0)

    def test_unit_profile(self):
        x = np.linspace(0.0, 2.0, 101)
        tau = np.linspace(0.0, 1.5, 16)
        m = typec_mass(x, np.ones_like(x), tau)
        assert m == pytest.approx(tau, abs=1e-14)

    def test_linear_profile_closed_form(self):
        # int_0^tau x dx = tau^2/2; piecewise-linear quadrature is exact here
        x = np.linspace(0.0, 2.0, 41)
        tau = np.linspace(0.0, 1.0, 11)
        m = typec_mass(x, x.copy(), tau)
        assert m[-1] == pytest.approx(0.5, abs=1e-6)
        assert m == pytest.approx(tau ** 2 / 2.0, abs=1e-12)

    def test_monotone_and_additive(self):
        rng = np.random.default_rng(7)
        x = np.linspace(0.0, 3.0, 301)
        h0 = rng.uniform(0.0, 2.0, x.size)
        s = np.sort(rng.uniform(0.0, 3.0, 25))
        m = typec_mass(x, h0, s)
        assert np.all(np.diff(m) >= -1e-15)
        # additivity over concatenated paths
        m1 = typec_mass(x, h0, s[:13])
        m2 = typec_mass(x, h0, s[12:])
        assert m[-1] == pytest.approx(m1[-1] + m2[-1], abs=1e-12)

    def test_decreasing_path_rejected(self):
        x = np.linspace(0.0, 1.0, 11)
        with pytest.raises(DomainError):
            typec_mass(x, np.ones_like(x), np.array([0.5, 0.4]))

    def test_state_validation(self):
        x = np.linspace(0.0, 1.0, 11)
        TypeCState(m=0.0, s=0.0, h0_x=x, h0=np.ones_like(x))
        with pytest.raises(DomainError):
            TypeCState(m=-1.0, s=0.0, h0_x=x, h0=np.ones_like(x))
        with pytest.raises(DomainError):
            TypeCState(m=0.0, s=0.0, h0_x=x, h0=-np.ones_like(x))
