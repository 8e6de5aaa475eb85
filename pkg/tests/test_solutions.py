import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fracrb.coefficients import Constant, PiecewiseConstant, polynomial
from fracrb.fem import build_mesh, fem_solve
from fracrb.fractional_ops import frac_deriv_power
from fracrb.solutions import build_strong_solution, chebyshev_grid, ex1_solution, ex2_solution
from fracrb.spectra import ex3_coefficients, ex4_coefficients

S_VALUES = (1.8, 1.5, 1.2)


@pytest.fixture(scope="module")
def ex4_strong():
    d, _ = ex4_coefficients()
    return build_strong_solution(d, 1.0, 1.5, grid_size=257)


class TestClosedForms:
    def test_ex1_midpoint(self):
        assert ex1_solution(1.5)(0.5) == pytest.approx(0.26596, abs=5e-6)

    @pytest.mark.parametrize("s", S_VALUES)
    def test_boundary_values(self, s):
        for u in (ex1_solution(s), ex2_solution(s)):
            assert u(0.0) == 0.0
            assert abs(u(1.0)) < 1e-15

    @pytest.mark.parametrize("s", S_VALUES)
    def test_ex2_against_sympy_free_form(self, s):
        x = 0.37
        ref = (x ** (s - 1) - x ** (s + 1)) / math.gamma(s + 2) - 2 * (x ** (s - 1) - x ** (s + 2)) / math.gamma(s + 3)
        assert ex2_solution(s)(x) == pytest.approx(ref, rel=1e-14)

    @given(st.floats(1.05, 1.95), st.floats(0.01, 0.99))
    def test_source_reproduced(self, s, x):
        # f = -D^s u termwise must give 1 and x(1-x)
        for u, f in ((ex1_solution(s), 1.0), (ex2_solution(s), x * (1 - x))):
            val = sum(t(x) for t in u.source_terms())
            assert val == pytest.approx(f, rel=1e-10, abs=1e-12)

    def test_source_against_mpmath(self):
        # -D^s u from the defining integral: -(d/dx)^2 I^(2-s) u
        s = 1.5
        u = ex1_solution(s)
        x0 = mp.mpf("0.6")
        iu = lambda x: mp.quad(lambda t: (x - t) ** (1 - s) * (t ** (s - 1) - t**s), [0, x]) / mp.gamma(2 - s) / mp.gamma(s + 1)  # noqa: E731
        assert float(-mp.diff(iu, x0, 2)) == pytest.approx(1.0, rel=1e-8)
        assert sum(t(0.6) for t in u.source_terms()) == pytest.approx(1.0, rel=1e-13)

    def test_derivative_terms(self):
        beta = 0.75
        terms = ex1_solution(1.5).derivative_terms(beta)
        direct = [frac_deriv_power(t, beta) for t in ex1_solution(1.5).terms]
        assert sum(t(0.3) for t in terms) == pytest.approx(sum(t(0.3) for t in direct))


class TestStrongSolution:
    def test_chebyshev_grid(self):
        g = chebyshev_grid(5)
        assert g[0] == 0.0 and g[-1] == 1.0
        assert np.all(np.diff(g) > 0)

    @pytest.mark.parametrize("s", S_VALUES)
    def test_constant_diffusion_matches_closed_forms(self, s):
        for f, exact in ((1.0, ex1_solution(s)), (polynomial([0.0, 1.0, -1.0]), ex2_solution(s))):
            sol = build_strong_solution(Constant(1.0), f, s, grid_size=513)
            assert np.max(np.abs(sol.values - exact(sol.grid))) <= 1e-8

    def test_endpoint_values(self, ex4_strong):
        d3, _ = ex3_coefficients()
        for sol in (ex4_strong, build_strong_solution(d3, 1.0, 1.2, grid_size=65)):
            assert abs(sol.p[0]) <= 1e-10 and abs(sol.p[-1] - 1.0) <= 1e-10
            assert abs(sol(0.0)) <= 1e-10 and abs(sol(1.0)) <= 1e-10

    def test_against_mpmath_integrals(self, ex4_strong):
        beta = 0.75
        d = lambda t: 5 if t < 0.5 else 3  # noqa: E731
        for x in (mp.mpf("0.3"), mp.mpf("0.8")):
            pts = [0, x] if x < 0.5 else [0, 0.5, x]
            rho = mp.quad(lambda t: (x - t) ** (beta - 1) * t ** (beta - 1) / d(t), pts) / mp.gamma(beta)
            g = mp.quad(lambda t: (x - t) ** (beta - 1) * t**beta / d(t), pts) / mp.gamma(beta) / mp.gamma(beta + 1)
            assert float(ex4_strong.g_fn(np.array([float(x)]))[0]) == pytest.approx(float(g), rel=1e-9)
            rho1 = mp.quad(lambda t: (1 - t) ** (beta - 1) * t ** (beta - 1) / d(t), [0, 0.5, 1]) / mp.gamma(beta)
            assert float(ex4_strong.p_fn(np.array([float(x)]))[0]) == pytest.approx(float(rho / rho1), rel=1e-9)

    def test_fem_converges_to_strong(self, ex4_strong):
        d, _ = ex4_coefficients()
        errs = []
        for n in (2**5, 2**7, 2**9):
            uh = fem_solve(build_mesh(n), 0.75, d, 0.0, 1.0)
            x = uh.mesh.nodes
            errs.append(np.max(np.abs(uh.nodal_values() - ex4_strong(x))))
        assert errs[0] > errs[1] > errs[2]
        # nodal sup error decays at least like h^((s-1)/2)
        rate = -np.polyfit(np.log([2**5, 2**7, 2**9]), np.log(errs), 1)[0]
        assert rate > 0.25

    def test_general_source_route(self):
        # a source that is neither constant nor a power sum forces the nested rule
        d = PiecewiseConstant((0.5,), (2.0, 1.0))
        f = PiecewiseConstant((0.5,), (1.0, 1.0))
        a = build_strong_solution(d, f, 1.5, grid_size=33)
        b = build_strong_solution(d, 1.0, 1.5, grid_size=33)
        assert np.max(np.abs(a.values - b.values)) <= 1e-8

    def test_rejects_nonpositive_diffusion(self):
        with pytest.raises(ValueError):
            build_strong_solution(PiecewiseConstant((0.5,), (1.0, -1.0)), 1.0, 1.5, grid_size=9)

    def test_to_csv(self, tmp_path, ex4_strong):
        ex4_strong.to_csv(tmp_path / "u.csv")
        data = np.loadtxt(tmp_path / "u.csv", delimiter=",", skiprows=1)
        assert data.shape == (257, 2)
