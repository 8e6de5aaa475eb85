"""Coefficient functions d(x), r(x), f(x) on (0, 1).

Each shape knows how to evaluate itself and, where the shape permits, its
exact supremum and infimum. Breakpoints of piecewise shapes are exposed so
assembly can check that the mesh resolves them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .fractional_ops import PowerTerm

SAMPLE_POINTS = 10_000


class Coefficient:
    """Base class: a real function on (0, 1)."""

    breakpoints: tuple[float, ...] = ()

    def __call__(self, x):
        raise NotImplementedError

    def bounds(self) -> tuple[float, float, bool]:
        """Return ``(sup, inf, exact)``; ``exact`` is False for sampled bounds."""
        x = np.linspace(0.0, 1.0, SAMPLE_POINTS + 1)
        v = np.asarray(self(x), dtype=float)
        return float(v.max()), float(v.min()), False

    def sup_norm(self) -> float:
        hi, lo, _ = self.bounds()
        return max(abs(hi), abs(lo))


@dataclass(frozen=True)
class Constant(Coefficient):
    value: float

    def __call__(self, x):
        return np.full(np.shape(x), float(self.value))

    def bounds(self):
        return float(self.value), float(self.value), True


@dataclass(frozen=True)
class PiecewiseConstant(Coefficient):
    """Value ``values[i]`` on ``[breaks[i-1], breaks[i])``, right-continuous."""

    breaks: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "breaks", tuple(float(b) for b in self.breaks))
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if len(self.values) != len(self.breaks) + 1:
            raise ValueError("need exactly one more value than breakpoints")
        if any(not 0.0 < b < 1.0 for b in self.breaks) or list(self.breaks) != sorted(self.breaks):
            raise ValueError("breakpoints must be sorted and inside (0, 1)")

    @property
    def breakpoints(self):
        return self.breaks

    @property
    def edges(self) -> np.ndarray:
        return np.concatenate(([0.0], self.breaks, [1.0]))

    def __call__(self, x):
        idx = np.searchsorted(np.asarray(self.breaks), np.asarray(x, dtype=float), side="right")
        return np.asarray(self.values)[idx]

    def bounds(self):
        return max(self.values), min(self.values), True


@dataclass(frozen=True)
class Affine(Coefficient):
    """``a + b x``; monotone, so the extrema sit at the endpoints."""

    a: float
    b: float = 0.0

    def __call__(self, x):
        return self.a + self.b * np.asarray(x, dtype=float)

    def bounds(self):
        ends = (self.a, self.a + self.b)
        return max(ends), min(ends), True


@dataclass(frozen=True)
class PowerSum(Coefficient):
    """Finite sum of power terms, e.g. ``x - x^2``."""

    terms: tuple[PowerTerm, ...]

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for t in self.terms:
            out = out + t(x)
        return out


@dataclass(frozen=True)
class Sampled(Coefficient):
    """Arbitrary vectorized closure.

    ``known_bounds`` may supply analytically known ``(sup, inf)``; otherwise
    the bounds come from a uniform sample and are flagged as inexact.
    """

    func: Callable
    label: str = "sampled"
    known_bounds: tuple[float, float] | None = None
    breaks: tuple[float, ...] = field(default=())

    @property
    def breakpoints(self):
        return self.breaks

    def __call__(self, x):
        return np.asarray(self.func(np.asarray(x, dtype=float)), dtype=float)

    def bounds(self):
        if self.known_bounds is not None:
            return float(self.known_bounds[0]), float(self.known_bounds[1]), True
        return Coefficient.bounds(self)


@dataclass(frozen=True)
class Sum(Coefficient):
    """Linear combination ``sum_q weights[q] * parts[q]``."""

    weights: tuple[float, ...]
    parts: tuple[Coefficient, ...]

    @property
    def breakpoints(self):
        pts = sorted({b for p in self.parts for b in p.breakpoints})
        return tuple(pts)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for w, p in zip(self.weights, self.parts):
            out = out + w * p(x)
        return out

    def bounds(self):
        probes = probe_matrix(self.parts)
        if probes is not None:
            v = probes @ np.asarray(self.weights, dtype=float)
            return float(v.max()), float(v.min()), True
        return Coefficient.bounds(self)


def as_coefficient(c) -> Coefficient:
    """Promote numbers to :class:`Constant`; pass coefficients through."""
    if isinstance(c, Coefficient):
        return c
    if np.isscalar(c):
        return Constant(float(c))
    raise TypeError(f"cannot interpret {c!r} as a coefficient")


def indicator(lo: float, hi: float) -> PiecewiseConstant:
    """Indicator of ``[lo, hi)`` as a piecewise-constant coefficient."""
    breaks: list[float] = []
    values: list[float] = []
    if lo > 0.0:
        breaks.append(lo)
        values.append(0.0)
    values.append(1.0)
    if hi < 1.0:
        breaks.append(hi)
        values.append(0.0)
    return PiecewiseConstant(tuple(breaks), tuple(values))


def polynomial(coeffs: Sequence[float]) -> PowerSum:
    """``sum_k coeffs[k] x^k``."""
    return PowerSum(tuple(PowerTerm(float(c), float(k)) for k, c in enumerate(coeffs) if c != 0.0))


def probe_matrix(parts: Sequence[Coefficient]) -> np.ndarray | None:
    """Values of each part at probes that bracket every linear combination.

    On every cell of the common partition a combination of constant,
    piecewise-constant and affine parts is affine, so its extrema are among
    the one-sided limits at the cell ends. Returns a ``(probes, len(parts))``
    matrix, or ``None`` when some part has another shape.
    """
    if not all(isinstance(p, (Constant, PiecewiseConstant, Affine)) for p in parts):
        return None
    edges = np.array([0.0, *sorted({b for p in parts for b in p.breakpoints}), 1.0])
    mids = 0.5 * (edges[1:] + edges[:-1])
    cols = []
    for p in parts:
        if isinstance(p, PiecewiseConstant):
            v = p(mids)
            cols.append(np.concatenate((v, v)))
        else:
            cols.append(np.concatenate((p(edges[:-1]), p(edges[1:]))))
    return np.column_stack(cols)
