"""Extreme singular values of stiffness matrices under mesh refinement."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .coefficients import Coefficient, Constant, PiecewiseConstant, Sampled, as_coefficient
from .fem import assemble_diffusion, assemble_mass, assemble_reaction, build_mesh
from .fractional_ops import FracOrder

FAMILIES = ("A1-constant", "A2-Ex3", "A3-Ex4", "mass")


def singular_values(A) -> np.ndarray:
    """All singular values of a dense square matrix, in descending order."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("matrix must be square")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    return np.linalg.svd(A, compute_uv=False)


def ex3_coefficients() -> tuple[Coefficient, Coefficient]:
    """Smooth coefficients ``d = 4 + sin(2 pi x)``, ``r = cos(2 pi x)``."""
    d = Sampled(lambda x: 4.0 + np.sin(2.0 * np.pi * x), "4+sin(2pi x)", (5.0, 3.0))
    r = Sampled(lambda x: np.cos(2.0 * np.pi * x), "cos(2pi x)", (1.0, -1.0))
    return d, r


def ex4_coefficients() -> tuple[Coefficient, Coefficient]:
    """Piecewise-constant coefficients with a jump at ``x = 1/2``."""
    return PiecewiseConstant((0.5,), (5.0, 3.0)), PiecewiseConstant((0.5,), (-2.0, 8.0))


def family_coefficients(family: str) -> tuple[Coefficient, Coefficient]:
    if family == "A1-constant":
        return Constant(1.0), Constant(0.0)
    if family == "A2-Ex3":
        return ex3_coefficients()
    if family == "A3-Ex4":
        return ex4_coefficients()
    raise ValueError(f"unknown family {family!r}")


def family_matrix(family: str, s: float, n_elements: int) -> np.ndarray:
    """Stiffness matrix of ``family`` (diffusion plus reaction part)."""
    mesh = build_mesh(n_elements)
    if family == "mass":
        return assemble_mass(mesh)
    d, r = family_coefficients(family)
    A = assemble_diffusion(mesh, FracOrder(s).beta, d)
    if not (isinstance(r, Constant) and r.value == 0.0):
        A = A + assemble_reaction(mesh, as_coefficient(r))
    return A


@dataclass(frozen=True)
class SpectrumRecord:
    n_elements: int
    sigma_max: float
    sigma_min: float

    @property
    def kappa(self) -> float:
        return self.sigma_max / self.sigma_min


@dataclass
class SpectrumReport:
    family: str
    s: float
    records: list[SpectrumRecord] = field(default_factory=list)

    def _slope(self, values) -> float:
        # coarsest level is treated as pre-asymptotic
        N = np.array([r.n_elements for r in self.records], dtype=float)[1:]
        y = np.asarray(values, dtype=float)[1:]
        if len(N) < 2:
            return float("nan")
        return float(np.polyfit(np.log(N), np.log(y), 1)[0])

    @property
    def slope_max(self) -> float:
        return self._slope([r.sigma_max for r in self.records])

    @property
    def slope_min(self) -> float:
        return self._slope([r.sigma_min for r in self.records])

    def kappa_bound_constant(self) -> float:
        """Smallest ``c`` with ``kappa <= c N^s`` at every level."""
        return max(r.kappa / r.n_elements**self.s for r in self.records)

    def to_csv(self, path) -> None:
        lines = ["N,sigma_max,sigma_min,kappa"]
        for r in self.records:
            lines.append(f"{r.n_elements},{r.sigma_max:.17g},{r.sigma_min:.17g},{r.kappa:.17g}")
        lines.append(f"# slope_sigma_max={self.slope_max:.6g},slope_sigma_min={self.slope_min:.6g}")
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")


def condition_study(family: str, s: float, levels) -> SpectrumReport:
    """Extreme singular values for each mesh size in ``levels`` (element counts)."""
    levels = [int(n) for n in levels]
    for n in levels:
        if n < 2 or n & (n - 1):
            raise ValueError("levels must be powers of two")
    if levels != sorted(levels):
        raise ValueError("levels must be ascending")
    report = SpectrumReport(family, float(s))
    for n in levels:
        sv = singular_values(family_matrix(family, s, n))
        if not sv[-1] > 0.0 or not math.isfinite(sv[0]):
            raise np.linalg.LinAlgError(f"singular stiffness matrix at N={n}")
        report.records.append(SpectrumRecord(n, float(sv[0]), float(sv[-1])))
    return report
