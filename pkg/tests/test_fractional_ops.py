import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fracrb.fem import PiecewiseLinearFn, build_mesh
from fracrb.fractional_ops import (
    FracOrder,
    PowerTerm,
    QuadratureRule,
    composite_quadrature,
    fourth_difference_power,
    frac_deriv_pl,
    frac_deriv_power,
    frac_integral_power,
    gamma_fn,
    gauss_jacobi01,
    rgamma,
    right_integral_of_power,
    second_difference_power,
)

mp.mp.dps = 30

orders = st.floats(1.01, 1.99)
betas = st.floats(0.51, 0.99)
exponents = st.floats(-0.45, 4.0)
coefs = st.floats(-5.0, 5.0).filter(lambda c: abs(c) > 1e-3)


def test_frac_order_bounds():
    assert FracOrder(1.5).beta == 0.75
    for bad in (1.0, 2.0, 0.5, 2.5):
        with pytest.raises(ValueError):
            FracOrder(bad)


def test_cos_pi_beta_negative():
    for s in np.linspace(1.001, 1.999, 50):
        assert math.cos(math.pi * FracOrder(s).beta) < 0


class TestGamma:
    def test_integers(self):
        assert gamma_fn(1.0) == pytest.approx(1.0, rel=1e-14)
        assert gamma_fn(2.0) == pytest.approx(1.0, rel=1e-14)
        assert gamma_fn(5.0) == pytest.approx(24.0, rel=1e-14)

    def test_oracle_1_9(self):
        assert gamma_fn(1.9) == pytest.approx(0.9617658319, rel=1e-9)

    def test_against_mpmath(self):
        xs = np.linspace(0.1, 20.0, 400)
        ref = np.array([float(mp.gamma(mp.mpf(float(x)))) for x in xs])
        assert np.max(np.abs(gamma_fn(xs) / ref - 1.0)) <= 1e-12

    def test_domain(self):
        for bad in (0.0, -1.0, -0.5):
            with pytest.raises(ValueError):
                gamma_fn(bad)

    def test_rgamma_poles_and_reflection(self):
        assert rgamma(0.0) == 0.0
        assert rgamma(-2.0) == 0.0
        for x in (-0.3, -1.7, -2.5, 0.4, 3.2):
            assert rgamma(x) == pytest.approx(float(mp.rgamma(x)), rel=1e-12, abs=1e-15)


class TestPowerCalculus:
    def test_integral_of_one(self):
        s = 1.5
        t = frac_integral_power(PowerTerm(1.0, 0.0), s)
        assert t.exponent == s
        assert t.coefficient == pytest.approx(1.0 / math.gamma(s + 1.0), rel=1e-13)

    def test_integral_against_definition(self):
        # (1/Gamma(sigma)) int_0^x (x-t)^(sigma-1) t^p dt by mpmath at x = 0.7
        p, sigma, x = 0.3, 1.4, 0.7
        ref = mp.quad(lambda t: (x - t) ** (sigma - 1) * t**p, [0, x]) / mp.gamma(sigma)
        assert frac_integral_power(PowerTerm(1.0, p), sigma)(x) == pytest.approx(float(ref), rel=1e-12)

    def test_integral_of_singular_term_is_constant(self):
        s = 1.5
        t = frac_integral_power(PowerTerm(1.0, s / 2 - 1.0), 1.0 - s / 2)
        assert t.exponent == pytest.approx(0.0, abs=1e-15)
        assert t.coefficient == pytest.approx(math.gamma(s / 2), rel=1e-13)

    def test_classical_antiderivative(self):
        t = frac_integral_power(PowerTerm(2.0, 1.0), 1.0)
        assert (t.coefficient, t.exponent) == pytest.approx((1.0, 2.0), rel=1e-14)

    def test_integral_domain(self):
        with pytest.raises(ValueError):
            PowerTerm(1.0, -1.0)

    def test_pole_annihilation(self):
        s = 1.5
        assert frac_deriv_power(PowerTerm(1.0, s / 2 - 1.0), s / 2).coefficient == 0.0

    def test_derivative_examples(self):
        t = frac_deriv_power(PowerTerm(1.0, 1.0), 0.5)
        assert t.exponent == 0.5
        assert t.coefficient == pytest.approx(2.0 / math.sqrt(math.pi), rel=1e-13)
        t = frac_deriv_power(PowerTerm(1.0, 0.5), 0.9)
        assert t.exponent == pytest.approx(-0.4)
        assert t.coefficient == pytest.approx(math.gamma(1.5) / math.gamma(0.6), rel=1e-13)

    def test_derivative_against_definition(self):
        # D^beta x^p = d/dx I^(1-beta) x^p, via mpmath differentiation of the integral
        p, beta = 1.3, 0.7

        def integ(x):
            return mp.quad(lambda t: (x - t) ** (-beta) * t**p, [0, x]) / mp.gamma(1 - beta)

        ref = mp.diff(integ, mp.mpf("0.6"))
        assert frac_deriv_power(PowerTerm(1.0, p), beta)(0.6) == pytest.approx(float(ref), rel=1e-10)

    @given(coefs, exponents, st.floats(0.05, 2.0), st.floats(0.05, 2.0))
    def test_semigroup(self, c, p, s1, s2):
        a = frac_integral_power(frac_integral_power(PowerTerm(c, p), s1), s2)
        b = frac_integral_power(PowerTerm(c, p), s1 + s2)
        assert a.exponent == pytest.approx(b.exponent, abs=1e-14)
        assert a.coefficient == pytest.approx(b.coefficient, rel=1e-12)

    @given(coefs, exponents, betas)
    def test_left_inverse(self, c, p, beta):
        back = frac_deriv_power(frac_integral_power(PowerTerm(c, p), beta), beta)
        assert back.exponent == pytest.approx(p, abs=1e-14)
        assert back.coefficient == pytest.approx(c, rel=1e-12)


class TestPiecewiseLinear:
    def _hat(self, n, k):
        mesh = build_mesh(n)
        c = np.zeros(mesh.n_dofs)
        c[k - 1] = 1.0
        return PiecewiseLinearFn(mesh, c)

    def test_causality_single_hat(self):
        f = self._hat(8, 4)
        assert frac_deriv_pl(f, "left", 0.75, 0.3) == 0.0
        assert frac_deriv_pl(f, "right", 0.75, 0.7) == 0.0

    def test_against_defining_integral(self):
        # D^beta f = I^(1-beta) f' : piecewise-constant slope, Gauss-Jacobi on each piece
        f = self._hat(4, 1)
        beta, x = 0.75, 0.6
        ref = mp.quad(lambda t: (x - t) ** (-beta) * 4, [0, 0.25]) + mp.quad(lambda t: (x - t) ** (-beta) * (-4), [0.25, 0.5])
        ref /= mp.gamma(1 - beta)
        assert frac_deriv_pl(f, "left", beta, x) == pytest.approx(float(ref), rel=1e-10)

    def test_right_side_against_definition(self):
        f = self._hat(4, 3)
        beta, x = 0.6, 0.3
        # Dbar f = -Ibar^(1-beta) f'
        ref = -(
            mp.quad(lambda t: (t - x) ** (-beta) * 4, [0.5, 0.75]) + mp.quad(lambda t: (t - x) ** (-beta) * (-4), [0.75, 1.0])
        ) / mp.gamma(1 - beta)
        assert frac_deriv_pl(f, "right", beta, x) == pytest.approx(float(ref), rel=1e-10)

    def test_interpolant_converges_to_power_rule(self):
        beta, x = 0.75, 0.5
        exact = sum(
            frac_deriv_power(t, beta)(x) for t in (PowerTerm(1.0, 1.0), PowerTerm(-1.0, 2.0))
        )
        errs = []
        for n in (16, 64, 256):
            mesh = build_mesh(n)
            xs = mesh.nodes[1:-1]
            errs.append(abs(frac_deriv_pl(PiecewiseLinearFn(mesh, xs * (1 - xs)), "left", beta, x) - exact))
        assert errs[2] < errs[1] < errs[0]
        assert errs[2] < 1e-3

    def test_nonzero_trace_rejected(self):
        with pytest.raises(ValueError):
            frac_deriv_pl((np.array([0.0, 0.5, 1.0]), np.array([1.0, 0.0, 0.0])), "left", 0.75, 0.5)

    def test_bad_side(self):
        with pytest.raises(ValueError):
            frac_deriv_pl(self._hat(4, 1), "up", 0.75, 0.5)

    @given(st.integers(2, 24), betas, st.data())
    def test_mirror(self, n, beta, data):
        mesh = build_mesh(n)
        c = np.array(data.draw(st.lists(st.floats(-3, 3), min_size=n - 1, max_size=n - 1)))
        # dyadic points so that 1 - x is exact
        x = np.array(data.draw(st.lists(st.integers(0, 2**20), min_size=1, max_size=5))) / 2**20
        a = frac_deriv_pl(PiecewiseLinearFn(mesh, c), "left", beta, x)
        b = frac_deriv_pl(PiecewiseLinearFn(mesh, c[::-1].copy()), "right", beta, 1.0 - x)
        assert np.allclose(a, b, rtol=1e-12, atol=1e-12)

    @given(st.integers(3, 24), betas, st.data())
    def test_causality(self, n, beta, data):
        mesh = build_mesh(n)
        k = data.draw(st.integers(1, n - 1))
        c = np.zeros(mesh.n_dofs)
        c[k - 1 :] = data.draw(st.lists(st.floats(-3, 3), min_size=n - k, max_size=n - k))
        x = data.draw(st.floats(0.0, mesh.nodes[k - 1]))
        assert frac_deriv_pl(PiecewiseLinearFn(mesh, c), "left", beta, x) == 0.0


class TestQuadrature:
    def test_constant(self):
        for rule in (QuadratureRule(), QuadratureRule("gauss-jacobi", 10, 3, -0.3, 0.2)):
            g = (lambda x: np.ones_like(x)) if rule.kind == "gauss-legendre" else (lambda x: x**-0.3 * (1 - x) ** 0.2)
            ref = 1.0 if rule.kind == "gauss-legendre" else float(mp.beta(0.7, 1.2))
            assert composite_quadrature(g, (0.0, 1.0), rule) == pytest.approx(ref, rel=1e-12)

    def test_singular_power(self):
        rule = QuadratureRule("gauss-jacobi", 4, 1, left_exponent=-0.4)
        assert composite_quadrature(lambda x: x**-0.4, (0.0, 1.0), rule) == pytest.approx(1 / 0.6, rel=1e-13)

    def test_two_point_exactness(self):
        rule = QuadratureRule("gauss-legendre", 2, 1)
        assert composite_quadrature(lambda x: x * (1 - x), (0.0, 1.0), rule) == pytest.approx(1 / 6, rel=1e-15)

    def test_nonfinite(self):
        with pytest.raises(FloatingPointError), np.errstate(divide="ignore"):
            composite_quadrature(lambda x: 1 / (x - x), (0.0, 1.0), QuadratureRule())

    def test_rule_validation(self):
        with pytest.raises(ValueError):
            QuadratureRule(points_per_panel=0)
        with pytest.raises(ValueError):
            QuadratureRule("simpson")

    def test_jacobi_nodes_interior_weights_positive(self):
        t, w = gauss_jacobi01(12, -0.3, 0.5)
        assert np.all((t > 0) & (t < 1)) and np.all(w > 0)
        assert w.sum() == pytest.approx(float(mp.beta(0.7, 1.5)), rel=1e-13)


class TestDifferences:
    def test_fourth_difference_against_mpmath(self):
        g = 1.6
        for m in (4, 7, 30, 500):
            ref = sum(c * mp.mpf(m + 2 - k) ** g for k, c in enumerate((1, -4, 6, -4, 1)))
            # Delta^4 centred so that the stencil is m-2 .. m+2
            got = fourth_difference_power(np.array([float(m)]), g)[0]
            assert got == pytest.approx(float(ref), rel=1e-12)

    def test_second_difference_against_mpmath(self):
        h, g = 1 / 64, 1.35
        for y in (2 * h, 0.3, 0.9):
            ref = mp.mpf(y + h) ** g - 2 * mp.mpf(y) ** g + mp.mpf(y - h) ** g
            assert second_difference_power(np.array([y]), h, g)[0] == pytest.approx(float(ref), rel=1e-11)

    def test_right_integral_against_mpmath(self):
        t, sigma = PowerTerm(1.5, 0.4), 0.6
        for y in (0.0, 1e-3, 0.3, 0.8):
            ref = 1.5 * mp.quad(lambda u: (u - y) ** (sigma - 1) * u**0.4, [y, (y + 1) / 2, 1]) / mp.gamma(sigma)
            assert right_integral_of_power(t, sigma, y)[0] == pytest.approx(float(ref), rel=1e-12)
        assert right_integral_of_power(t, sigma, 1.0)[0] == 0.0
