"""Reference solutions of ``-D^s_d u = f`` with zero boundary values.

* Constant coefficients (``d = 1``, ``r = 0``): the solutions for ``f = 1`` and
  ``f = x(1-x)`` are finite sums of powers of ``x``.
* Variable diffusion with ``r = 0``: ``u = -g + g(1) p`` where
  ``g = I^beta(d^-1 I^beta f)``, ``rho = I^beta(d^-1 x^(beta-1))`` and
  ``p = rho / rho(1)``; ``beta = s/2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .coefficients import Coefficient, Constant, PowerSum, as_coefficient
from .fractional_ops import (
    FracOrder,
    PowerTerm,
    frac_deriv_power,
    frac_integral_power,
    gamma_fn,
    gauss_jacobi01,
    gauss_legendre01,
    rgamma,
)

GRID_SIZE = 4096
RULE_ORDERS = (30, 60)
RULE_AGREEMENT = 1e-8


@dataclass(frozen=True)
class ClosedFormSolution:
    """``u(x) = sum_m c_m x^(q_m)`` solving the constant-coefficient problem."""

    terms: tuple[PowerTerm, ...]
    s: float
    label: str = ""

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for t in self.terms:
            out = out + t(x)
        return out

    def derivative_terms(self, beta: float) -> list[PowerTerm]:
        """Left derivative of order ``beta``, termwise."""
        out = [frac_deriv_power(t, beta) for t in self.terms]
        return [t for t in out if t.coefficient != 0.0]

    def source_terms(self) -> list[PowerTerm]:
        """``f = -D^s u`` termwise; the ``x^(s-1)`` terms are annihilated."""
        out = []
        for t in self.terms:
            q = t.exponent
            coef = -t.coefficient * gamma_fn(q + 1.0) * rgamma(q + 1.0 - self.s)
            if coef != 0.0:
                out.append(PowerTerm(coef, q - self.s))
        return out


def ex1_solution(s: float) -> ClosedFormSolution:
    """Solution for ``f = 1``: ``(x^(s-1) - x^s) / Gamma(s+1)``."""
    FracOrder(s)
    c = 1.0 / gamma_fn(s + 1.0)
    return ClosedFormSolution((PowerTerm(c, s - 1.0), PowerTerm(-c, s)), s, "ex1")


def ex2_solution(s: float) -> ClosedFormSolution:
    """Solution for ``f = x(1-x)``.

    ``(x^(s-1) - x^(s+1)) / Gamma(s+2) - 2 (x^(s-1) - x^(s+2)) / Gamma(s+3)``;
    the factor 2 is ``Gamma(3)`` from integrating ``x^2``.
    """
    FracOrder(s)
    a = 1.0 / gamma_fn(s + 2.0)
    b = 2.0 / gamma_fn(s + 3.0)
    terms = (
        PowerTerm(a - b, s - 1.0),
        PowerTerm(-a, s + 1.0),
        PowerTerm(b, s + 2.0),
    )
    return ClosedFormSolution(terms, s, "ex2")


# ---------------------------------------------------------------------------
# strong solution for variable diffusion
# ---------------------------------------------------------------------------


def chebyshev_grid(n: int) -> np.ndarray:
    """``n`` Chebyshev-Lobatto points on [0, 1], endpoints included."""
    k = np.arange(n)
    return 0.5 * (1.0 - np.cos(np.pi * k / (n - 1)))


def _kernel_integral(x: np.ndarray, q: float, beta: float, weight_fn: Callable, breaks, order: int) -> np.ndarray:
    """``int_0^1 tau^q (1-tau)^(beta-1) weight_fn(x tau) dtau`` for each ``x``.

    Without breakpoints a single Gauss-Jacobi rule carrying both algebraic
    factors is exact up to the smoothness of ``weight_fn``. Otherwise the
    unit interval is cut where ``x tau`` crosses a breakpoint and graded
    geometrically toward 0 and 1, so that every panel either touches a
    singular end (Gauss-Jacobi) or sits at least one panel width away from
    both (Gauss-Legendre).
    """
    out = np.zeros_like(x)
    tj_both, wj_both = gauss_jacobi01(order, q, beta - 1.0)
    tj_left, wj_left = gauss_jacobi01(order, q, 0.0)
    tj_right, wj_right = gauss_jacobi01(order, 0.0, beta - 1.0)
    tg, wg = gauss_legendre01(order)
    toward0 = 0.5 ** np.arange(1, 61)
    toward1 = 1.0 - 0.5 ** np.arange(2, 54)
    for i, xx in enumerate(x):
        if xx <= 0.0:
            continue
        cuts = [b / xx for b in breaks if 0.0 < b < xx]
        if not cuts:
            out[i] = float(np.dot(wj_both, weight_fn(xx * tj_both)))
            continue
        pieces = [0.0, *cuts, 1.0]
        nodes, weights = [], []
        for lo, hi in zip(pieces[:-1], pieces[1:]):
            inner = []
            if lo > 0.0:
                inner.append(toward0[(toward0 > lo) & (toward0 < hi)])
            if hi < 1.0:
                inner.append(toward1[(toward1 > lo) & (toward1 < hi)])
            inner = np.concatenate(inner) if inner else np.empty(0)
            edges = np.concatenate(([lo], np.sort(inner), [hi]))
            for a, b in zip(edges[:-1], edges[1:]):
                w = b - a
                if a == 0.0:
                    t = b * tj_left
                    nodes.append(t)
                    weights.append(b ** (q + 1.0) * wj_left * (1.0 - t) ** (beta - 1.0))
                elif b == 1.0:
                    t = a + w * tj_right
                    nodes.append(t)
                    weights.append(w**beta * wj_right * t**q)
                else:
                    t = a + w * tg
                    nodes.append(t)
                    weights.append(w * wg * t**q * (1.0 - t) ** (beta - 1.0))
        t = np.concatenate(nodes)
        out[i] = float(np.dot(np.concatenate(weights), weight_fn(xx * t)))
    return out


def _frac_integral_weighted(x, terms, beta: float, inv_d: Callable, breaks, order: int) -> np.ndarray:
    """``I^beta(inv_d * sum_m c_m t^(q_m))`` at ``x``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.zeros_like(x)
    for t in terms:
        q = t.exponent
        out += t.coefficient * x ** (q + beta) * _kernel_integral(x, q, beta, inv_d, breaks, order)
    return out * rgamma(beta)


def _frac_integral_of_integral(x, f: Coefficient, beta: float, inv_d: Callable, breaks, order: int) -> np.ndarray:
    """``I^beta(inv_d * I^beta f)`` for a general source, by nested Gauss-Jacobi."""
    ts, ws = gauss_jacobi01(order, 0.0, beta - 1.0)

    def inner(t):
        # I^beta f (t) = t^beta H(t); the t^beta factor goes into the outer weight
        t = np.asarray(t, dtype=float)
        return (f(t[..., None] * ts) @ ws) * rgamma(beta) * inv_d(t)

    x = np.atleast_1d(np.asarray(x, dtype=float))
    return x ** (2.0 * beta) * _kernel_integral(x, beta, beta, inner, breaks, order) * rgamma(beta)


@dataclass
class StrongSolution:
    """``u = -g + scale * p`` with cached values on a Chebyshev grid."""

    grid: np.ndarray
    g: np.ndarray
    p: np.ndarray
    scale: float
    evaluator: Callable = field(repr=False)
    g_fn: Callable = field(repr=False)
    p_fn: Callable = field(repr=False)

    def __call__(self, x):
        return self.evaluator(x)

    @property
    def values(self) -> np.ndarray:
        return -self.g + self.scale * self.p

    def to_csv(self, path):
        np.savetxt(path, np.column_stack([self.grid, self.values]), delimiter=",", fmt="%.17g", header="x,u", comments="")


def build_strong_solution(d, f, s: float, grid_size: int = GRID_SIZE) -> StrongSolution:
    """Strong solution for ``r = 0`` and positive diffusion ``d``.

    Power-sum sources are integrated once in closed form; other sources use a
    nested Gauss-Jacobi rule. Every quantity is computed with two rule orders
    and must agree to ``1e-8``.
    """
    beta = FracOrder(s).beta
    d = as_coefficient(d)
    f = as_coefficient(f)
    breaks = tuple(d.breakpoints)
    if np.any(d(np.linspace(0.0, 1.0, 1001)) <= 0.0):
        raise ValueError("diffusion coefficient must be positive")

    def inv_d(t):
        return 1.0 / d(t)

    if isinstance(f, Constant):
        f_terms = [frac_integral_power(PowerTerm(f.value, 0.0), beta)]
    elif isinstance(f, PowerSum):
        f_terms = [frac_integral_power(t, beta) for t in f.terms]
    else:
        f_terms = None
    rho_terms = [PowerTerm(1.0, beta - 1.0)]

    def make(order):
        if f_terms is not None:
            g_of = lambda x: _frac_integral_weighted(x, f_terms, beta, inv_d, breaks, order)  # noqa: E731
        else:
            g_of = lambda x: _frac_integral_of_integral(x, f, beta, inv_d, breaks + tuple(f.breakpoints), order)  # noqa: E731
        rho_of = lambda x: _frac_integral_weighted(x, rho_terms, beta, inv_d, breaks, order)  # noqa: E731
        return g_of, rho_of

    grid = chebyshev_grid(grid_size)
    lo_g, lo_rho = make(RULE_ORDERS[0])
    hi_g, hi_rho = make(RULE_ORDERS[1])
    g_vals = hi_g(grid)
    rho_vals = hi_rho(grid)
    for a, b in ((lo_g(grid), g_vals), (lo_rho(grid), rho_vals)):
        err = np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300)
        if err > RULE_AGREEMENT:
            raise FloatingPointError(f"nested quadrature rules disagree ({err:.2e})")
    rho1 = float(hi_rho(np.array([1.0]))[0])
    scale = float(hi_g(np.array([1.0]))[0])
    p_vals = rho_vals / rho1

    def p_fn(x):
        x = np.asarray(x, dtype=float)
        return (hi_rho(x.ravel()) / rho1).reshape(x.shape)

    def g_fn(x):
        x = np.asarray(x, dtype=float)
        return hi_g(x.ravel()).reshape(x.shape)

    def evaluator(x):
        return -g_fn(x) + scale * p_fn(x)

    return StrongSolution(grid, g_vals, p_vals, scale, evaluator, g_fn, p_fn)
