"""Explicit well-posedness constants and the predicted n-width decay rate."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .coefficients import as_coefficient
from .fractional_ops import FracOrder, gamma_fn

VARIANTS = ("alpha", "alpha-tilde", "gamma")


@dataclass(frozen=True)
class CoefficientStats:
    sup: float
    inf: float
    exact: bool = True

    @property
    def average(self) -> float:
        return 0.5 * (self.sup + self.inf)

    @property
    def range(self) -> float:
        return 0.5 * (self.sup - self.inf)

    @property
    def sup_norm(self) -> float:
        return max(abs(self.sup), abs(self.inf))


@dataclass(frozen=True)
class ConstantSet:
    """Coercivity and continuity constants for one ``(s, d, r)``.

    ``gamma_sd``
        ``avg(d) |cos(s pi/2)| - range(d)``, the coercivity constant of the
        diffusion part with respect to the semi-norm.
    ``c_sdr``
        ``gamma_sd Gamma(s/2+1)^2 + inf(r)``; nonnegative values certify
        coercivity of the full form.
    ``alpha_sd``
        ``gamma_sd Gamma(s/2+1)^4 / 8``.
    ``alpha_tilde``
        ``gamma_sd Gamma(s/2+1)^2 / 2 + min(inf(r), 0) / 2``.
    ``continuity``
        ``2 (||d||_inf + ||r||_inf)``.
    """

    s: float
    gamma_sd: float
    c_sdr: float
    alpha_sd: float
    alpha_tilde: float
    continuity: float

    @property
    def coercive(self) -> bool:
        return self.c_sdr >= 0.0


def coefficient_stats(c) -> CoefficientStats:
    """Sup/inf of a coefficient; exact for constant, piecewise-constant and affine shapes."""
    c = as_coefficient(c)
    hi, lo, exact = c.bounds()
    return CoefficientStats(hi, lo, exact)


def gamma_sd(s: float, d_stats: CoefficientStats) -> float:
    return d_stats.average * abs(math.cos(0.5 * math.pi * s)) - d_stats.range


def constant_set(s: float, d_stats: CoefficientStats, r_stats: CoefficientStats) -> ConstantSet:
    FracOrder(s)
    g = gamma_sd(s, d_stats)
    G = gamma_fn(0.5 * s + 1.0)
    return ConstantSet(
        s=s,
        gamma_sd=g,
        c_sdr=g * G**2 + r_stats.inf,
        alpha_sd=g * G**4 / 8.0,
        alpha_tilde=g * G**2 / 2.0 + 0.5 * min(r_stats.inf, 0.0),
        continuity=2.0 * (d_stats.sup_norm + r_stats.sup_norm),
    )


def coercivity_value(s: float, d_stats: CoefficientStats, r_stats: CoefficientStats, variant: str = "alpha") -> float:
    """Lower bound selected by ``variant`` (one of ``alpha``, ``alpha-tilde``, ``gamma``)."""
    cs = constant_set(s, d_stats, r_stats)
    if variant == "alpha":
        return cs.alpha_sd
    if variant == "alpha-tilde":
        return cs.alpha_tilde
    if variant == "gamma":
        return cs.gamma_sd
    raise ValueError(f"unknown coercivity variant {variant!r}")


def parametric_alpha(s: float, problem, mu, variant: str = "alpha") -> float:
    """Coercivity lower bound of ``problem`` at parameter ``mu``.

    ``problem`` must provide ``check_mu``, ``diffusion_coefficient`` and
    ``reaction_coefficient``.
    """
    mu = problem.check_mu(mu)
    d_stats = coefficient_stats(problem.diffusion_coefficient(mu))
    r_stats = coefficient_stats(problem.reaction_coefficient(mu))
    return coercivity_value(s, d_stats, r_stats, variant)


def predicted_nwidth_rate(s: float, mu_plus: float) -> tuple[int, float]:
    """``(M_s, ln 2 / M_s)`` with ``M_s = ceil(mu_plus / |cos(s pi/2)|)``.

    Exponential decay rate of the n-width bound for the reaction-parametrized
    problem with ``d = 1``; only meaningful for comparisons across ``s``.
    """
    FracOrder(s)
    if mu_plus <= 0.0:
        raise ValueError("mu_plus must be positive")
    alpha_s = abs(math.cos(0.5 * math.pi * s))
    m = math.ceil(mu_plus / alpha_s)
    return m, math.log(2.0) / m
