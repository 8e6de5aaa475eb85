"""Finite elements and certified reduced basis methods for one-dimensional
fractional diffusion-reaction problems with Riemann-Liouville derivatives of
order ``s`` in (1, 2)."""

from .coefficients import Affine, Constant, PiecewiseConstant, PowerSum, Sampled, indicator, polynomial
from .constants import coefficient_stats, constant_set, parametric_alpha, predicted_nwidth_rate
from .fem import (
    Mesh,
    NormKind,
    PiecewiseLinearFn,
    assemble_diffusion,
    assemble_load,
    assemble_mass,
    assemble_reaction,
    assemble_seminorm_gram,
    build_mesh,
    fe_error,
    fem_solve,
    solve_dense,
)
from .fractional_ops import FracOrder, PowerTerm, frac_deriv_pl, frac_deriv_power, frac_integral_power, gamma_fn
from .rbm import build_affine_problem, gauss_legendre_grid, greedy_train, rb_solve, residual_dual_norm, truth_solve
from .solutions import build_strong_solution, ex1_solution, ex2_solution
from .spectra import condition_study, singular_values

__all__ = [
    "Affine",
    "assemble_diffusion",
    "assemble_load",
    "assemble_mass",
    "assemble_reaction",
    "assemble_seminorm_gram",
    "build_affine_problem",
    "build_mesh",
    "build_strong_solution",
    "coefficient_stats",
    "condition_study",
    "Constant",
    "constant_set",
    "ex1_solution",
    "ex2_solution",
    "fe_error",
    "fem_solve",
    "frac_deriv_pl",
    "frac_deriv_power",
    "frac_integral_power",
    "FracOrder",
    "gamma_fn",
    "gauss_legendre_grid",
    "greedy_train",
    "indicator",
    "Mesh",
    "NormKind",
    "parametric_alpha",
    "PiecewiseConstant",
    "PiecewiseLinearFn",
    "polynomial",
    "PowerSum",
    "PowerTerm",
    "predicted_nwidth_rate",
    "rb_solve",
    "residual_dual_norm",
    "Sampled",
    "singular_values",
    "solve_dense",
    "truth_solve",
]

__version__ = "0.1.0"
