"""Riemann-Liouville operators on power terms and piecewise-linear functions.

Also hosts the special-function and quadrature helpers that the assembly and
reference-solution code build on: a Lanczos Gamma function, a pole-aware
reciprocal Gamma, cached Gauss rules and numerically stable finite
differences of truncated powers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Literal

import numpy as np
from scipy.special import roots_jacobi

Side = Literal["left", "right"]

# Lanczos approximation, g = 7, n = 9.
_LANCZOS_G = 7.0
_LANCZOS_COEF = np.array(
    [
        0.99999999999980993,
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ]
)


@dataclass(frozen=True)
class FracOrder:
    """Order ``s`` of the two-sided problem; ``beta = s/2`` is the one-sided order."""

    s: float

    def __post_init__(self):
        if not 1.0 < self.s < 2.0:
            raise ValueError(f"order s must lie strictly in (1, 2), got {self.s}")

    @property
    def beta(self) -> float:
        return 0.5 * self.s


@dataclass(frozen=True)
class PowerTerm:
    """The function ``coefficient * x**exponent`` on (0, 1)."""

    coefficient: float
    exponent: float

    def __post_init__(self):
        if not self.exponent > -1.0:
            raise ValueError(f"exponent must exceed -1 (integrability), got {self.exponent}")

    @property
    def square_integrable(self) -> bool:
        return self.exponent > -0.5 or self.coefficient == 0.0

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.coefficient == 0.0:
            return np.zeros_like(x)
        with np.errstate(divide="ignore"):
            return self.coefficient * np.power(x, self.exponent)


@dataclass(frozen=True)
class QuadratureRule:
    """Composite Gauss rule on ``panels`` equal panels.

    For ``kind="gauss-jacobi"`` the integrand passed to
    :func:`composite_quadrature` may carry the algebraic factors
    ``(x - a)**left_exponent`` and ``(b - x)**right_exponent``; the end panels
    absorb them into Gauss-Jacobi weights.
    """

    kind: Literal["gauss-legendre", "gauss-jacobi"] = "gauss-legendre"
    points_per_panel: int = 10
    panels: int = 1
    left_exponent: float = 0.0
    right_exponent: float = 0.0

    def __post_init__(self):
        if self.points_per_panel < 1 or self.panels < 1:
            raise ValueError("points_per_panel and panels must be >= 1")
        if self.kind not in ("gauss-legendre", "gauss-jacobi"):
            raise ValueError(f"unknown quadrature kind {self.kind!r}")
        if self.left_exponent <= -1.0 or self.right_exponent <= -1.0:
            raise ValueError("Jacobi exponents must exceed -1")


# ---------------------------------------------------------------------------
# special functions
# ---------------------------------------------------------------------------


def _lanczos(z: np.ndarray) -> np.ndarray:
    # valid for z >= 0.5
    zm = z - 1.0
    acc = np.full_like(zm, _LANCZOS_COEF[0])
    for k in range(1, len(_LANCZOS_COEF)):
        acc = acc + _LANCZOS_COEF[k] / (zm + k)
    t = zm + _LANCZOS_G + 0.5
    return math.sqrt(2.0 * math.pi) * np.power(t, zm + 0.5) * np.exp(-t) * acc


def gamma_fn(x):
    """Gamma function for positive arguments (Lanczos, ~15 significant digits).

    Accepts scalars or arrays; raises ``ValueError`` for ``x <= 0``.
    """
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr > 0.0)):
        raise ValueError("gamma_fn is defined here for x > 0 only")
    small = arr < 0.5
    z = np.where(small, arr + 1.0, arr)
    out = _lanczos(z)
    out = np.where(small, out / arr, out)
    return float(out) if np.ndim(x) == 0 else out


def rgamma(x):
    """Reciprocal Gamma ``1/Gamma(x)`` for all real ``x``; exactly 0 at the poles."""
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.empty_like(arr)
    pos = arr > 0.0
    if np.any(pos):
        out[pos] = 1.0 / gamma_fn(arr[pos])
    neg = ~pos
    if np.any(neg):
        xn = arr[neg]
        pole = xn == np.round(xn)
        val = np.zeros_like(xn)
        ok = ~pole
        if np.any(ok):
            # reflection: 1/Gamma(x) = sin(pi x) Gamma(1 - x) / pi
            val[ok] = np.sin(np.pi * xn[ok]) * gamma_fn(1.0 - xn[ok]) / np.pi
        out[neg] = val
    return float(out[0]) if np.ndim(x) == 0 else out


def _binomial_coefficients(a: float, n: int) -> np.ndarray:
    out = np.empty(n + 1)
    out[0] = 1.0
    for k in range(1, n + 1):
        out[k] = out[k - 1] * (a - k + 1) / k
    return out


# ---------------------------------------------------------------------------
# power-term calculus
# ---------------------------------------------------------------------------


def frac_integral_power(t: PowerTerm, sigma: float) -> PowerTerm:
    """Left-sided integral of order ``sigma`` of ``c x^p``: ``c Gamma(p+1)/Gamma(p+1+sigma) x^(p+sigma)``."""
    if sigma <= 0.0:
        raise ValueError("sigma must be positive")
    p = t.exponent
    coef = t.coefficient * gamma_fn(p + 1.0) * rgamma(p + 1.0 + sigma)
    return PowerTerm(coef, p + sigma)


def frac_deriv_power(t: PowerTerm, beta: float) -> PowerTerm:
    """Left-sided derivative of order ``beta`` in (0, 1) of ``c x^p``.

    When ``p + 1 - beta`` hits a pole of Gamma the result is the zero term,
    e.g. the derivative of order ``s/2`` of ``x^(s/2-1)``.
    """
    if not 0.0 < beta < 1.0:
        raise ValueError("beta must lie in (0, 1)")
    p = t.exponent
    if not p > -0.5:
        raise ValueError("exponent must exceed -1/2")
    coef = t.coefficient * gamma_fn(p + 1.0) * rgamma(p + 1.0 - beta)
    new_exp = p - beta
    if coef == 0.0:
        # keep a representable exponent; the term is identically zero
        return PowerTerm(0.0, max(new_exp, 0.0))
    return PowerTerm(coef, new_exp)


def _nodal_data(f):
    if hasattr(f, "mesh"):
        nodes = f.mesh.nodes
        values = f.nodal_values()
    else:
        nodes, values = (np.asarray(a, dtype=float) for a in f)
    if abs(values[0]) > 0.0 or abs(values[-1]) > 0.0:
        raise ValueError("piecewise-linear function must vanish at 0 and 1")
    return nodes, values


def slope_jumps(nodes: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Jumps of the derivative at every node, zero extension included."""
    slopes = np.diff(values) / np.diff(nodes)
    padded = np.concatenate(([0.0], slopes, [0.0]))
    return np.diff(padded)


def frac_deriv_pl(f, side: Side, beta: float, x):
    """One-sided RL derivative of a zero-trace piecewise-linear function.

    Uses ``D^beta f = I^(1-beta) f'`` with ``f'`` piecewise constant, which
    gives a finite sum of truncated powers ``(x - x_k)_+^(1-beta)`` weighted by
    the slope jumps. The truncated powers are continuous, so evaluation at a
    mesh node needs no special casing.

    ``f`` is a :class:`~fracrb.fem.PiecewiseLinearFn` or a ``(nodes, values)`` pair.
    """
    if not 0.5 < beta < 1.0:
        raise ValueError("beta must lie in (1/2, 1)")
    nodes, values = _nodal_data(f)
    jumps = slope_jumps(nodes, values)
    xa = np.atleast_1d(np.asarray(x, dtype=float))
    alpha = 1.0 - beta
    if side == "left":
        dist = xa[:, None] - nodes[None, :]
    elif side == "right":
        dist = nodes[None, :] - xa[:, None]
    else:
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    kern = np.where(dist > 0.0, np.abs(dist), 0.0) ** alpha
    out = kern @ jumps * rgamma(2.0 - beta)
    return float(out[0]) if np.ndim(x) == 0 else out


# ---------------------------------------------------------------------------
# stable differences of truncated powers
# ---------------------------------------------------------------------------


def second_difference_power(y, h: float, exponent: float, terms: int = 30):
    """``(y+h)_+^g - 2 y_+^g + (y-h)_+^g`` without cancellation for ``y >> h``.

    For ``y >= 2h`` the even binomial series in ``h/y`` is summed; its
    truncation error is below ``4**-terms`` relative.
    """
    y = np.asarray(y, dtype=float)
    g = exponent

    def tp(z):
        return np.where(z > 0.0, np.abs(z), 0.0) ** g

    direct = tp(y + h) - 2.0 * tp(y) + tp(y - h)
    far = y >= 2.0 * h
    if not np.any(far):
        return direct
    coef = _binomial_coefficients(g, 2 * terms)[2::2]  # binom(g, 2m), m >= 1
    yf = y[far]
    e2 = (h / yf) ** 2
    acc = np.zeros_like(yf)
    for c in coef[::-1]:
        acc = (acc + c) * e2
    out = direct.copy()
    out[far] = 2.0 * yf**g * acc
    return out


def fourth_difference_power(m, exponent: float, terms: int = 40):
    """Central fourth difference of ``t_+^g`` at integer offsets ``m`` (unit step)."""
    m = np.asarray(m, dtype=float)
    g = exponent

    def tp(z):
        return np.where(z > 0.0, np.abs(z), 0.0) ** g

    direct = tp(m + 2) - 4 * tp(m + 1) + 6 * tp(m) - 4 * tp(m - 1) + tp(m - 2)
    far = m >= 4.0
    if not np.any(far):
        return direct
    n = np.arange(4, 2 * terms + 1, 2)
    binom = _binomial_coefficients(g, 2 * terms)[n]
    moment = 2.0 ** (n + 1) - 8.0  # sum_t w_t t^n for w = (1,-4,6,-4,1)
    mf = m[far]
    acc = np.zeros_like(mf)
    inv2 = 1.0 / mf**2
    for c in (binom * moment)[::-1]:
        acc = (acc + c) * inv2
    out = direct.copy()
    out[far] = mf**g * acc * inv2  # series starts at n = 4
    return out


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def gauss_legendre01(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes/weights on (0, 1)."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def gauss_jacobi01(n: int, left: float, right: float) -> tuple[np.ndarray, np.ndarray]:
    """Nodes/weights on (0, 1) for the weight ``t**left * (1 - t)**right``."""
    x, w = roots_jacobi(n, right, left)
    return 0.5 * (x + 1.0), w * 0.5 ** (left + right + 1.0)


def composite_quadrature(g: Callable, interval: tuple[float, float], rule: QuadratureRule) -> float:
    """Integrate ``g`` over ``interval`` with a composite Gauss rule.

    For Gauss-Jacobi rules ``g`` is the full integrand, singular factor
    included; the first (last) panel divides out ``(x-a)**left_exponent``
    (``(b-x)**right_exponent``) at its nodes and uses matching Jacobi weights.
    """
    a, b = map(float, interval)
    edges = np.linspace(a, b, rule.panels + 1)
    total = 0.0
    n = rule.points_per_panel
    for k in range(rule.panels):
        lo, hi = edges[k], edges[k + 1]
        width = hi - lo
        le = rule.left_exponent if (rule.kind == "gauss-jacobi" and k == 0) else 0.0
        re = rule.right_exponent if (rule.kind == "gauss-jacobi" and k == rule.panels - 1) else 0.0
        if le == 0.0 and re == 0.0:
            t, w = gauss_legendre01(n)
        else:
            t, w = gauss_jacobi01(n, le, re)
        x = lo + width * t
        vals = np.asarray(g(x), dtype=float)
        if not np.all(np.isfinite(vals)):
            raise FloatingPointError("integrand is not finite at a quadrature node")
        # remove the factors that the Jacobi weights already carry
        divisor = ((x - a) ** le) * ((b - x) ** re)
        scale = width ** (1.0 + le + re) if (le or re) else width
        total += scale * float(np.dot(w, vals / divisor)) if (le or re) else scale * float(np.dot(w, vals))
    return total


def right_integral_of_power(term: PowerTerm, sigma: float, y) -> np.ndarray:
    """Right-sided integral on (0, 1) of ``c t^p``, evaluated at points ``y`` in [0, 1].

    ``(1/Gamma(sigma)) * int_y^1 (t - y)^(sigma-1) c t^p dt``. There is no
    elementary closed form, so the integral is split geometrically away from
    ``y`` (panels ``[y, 2y], [2y, 4y], ...``): the first panel carries the
    Jacobi weight, the others see both singular points at a fixed relative
    distance and converge geometrically with Gauss-Legendre.
    """
    ya = np.atleast_1d(np.asarray(y, dtype=float))
    p, c = term.exponent, term.coefficient
    out = np.zeros_like(ya)
    tj, wj = gauss_jacobi01(20, sigma - 1.0, 0.0)
    tl, wl = gauss_legendre01(20)
    for idx, yy in enumerate(ya):
        if yy >= 1.0:
            continue
        if yy <= 0.0:
            out[idx] = 1.0 / (sigma + p)
            continue
        hi = min(2.0 * yy, 1.0)
        width = hi - yy
        t = yy + width * tj
        acc = width**sigma * np.dot(wj, t**p)
        lo = hi
        while lo < 1.0:
            hi = min(2.0 * lo, 1.0)
            width = hi - lo
            t = lo + width * tl
            acc += width * np.dot(wl, (t - yy) ** (sigma - 1.0) * t**p)
            lo = hi
        out[idx] = acc
    return c * out * rgamma(sigma)
