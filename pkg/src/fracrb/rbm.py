"""Certified reduced basis method for the parametrized fractional problem.

The operator is affine in the parameter,
``A(mu) = sum_q theta^d_q(mu) A1_q + sum_q theta^r_q(mu) A2_q`` and
``f(mu) = sum_q theta^f_q(mu) f_q``, so every parameter-independent piece is
projected once offline. The V-inner product is the semi-norm Gram matrix
``G``; the residual dual norm is ``||r||_{V'} = ||L^-1 r||`` with
``G = L L^T``.

Residual norms are evaluated from an upper-triangular factor ``R`` of the
whitened residual components ``W = L^-1 [f_q, A_q V]`` (``R^T R = W^T W``,
the Gram blocks). ``||W z|| = ||R z||`` is exact, and evaluating the norm of
the small vector ``R z`` avoids the cancellation floor of the expanded
quadratic form ``z^T (W^T W) z`` near small residuals.
"""

from __future__ import annotations

import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla
from scipy.linalg.lapack import dgesv

from .coefficients import (
    Affine,
    Coefficient,
    Constant,
    Sum,
    as_coefficient,
    indicator,
    polynomial,
    probe_matrix,
)
from .constants import VARIANTS, coercivity_value, coefficient_stats
from .fem import (
    Mesh,
    PiecewiseLinearFn,
    assemble_diffusion,
    assemble_load,
    assemble_reaction,
    assemble_seminorm_gram,
    build_mesh,
    solve_dense,
)
from .fractional_ops import FracOrder, gamma_fn

TRAINING_CAP = 10**6
STAGNATION_RATIO = 1e-10


class ConfigError(ValueError):
    """Malformed problem or run configuration."""


class StagnationError(RuntimeError):
    """A new snapshot adds no information to the reduced space."""


# ---------------------------------------------------------------------------
# parameter functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ParamTheta:
    """``theta(mu) = mu[index]``."""

    index: int

    def __call__(self, mu):
        return np.asarray(mu, dtype=float)[..., self.index]

    def __str__(self):
        return f"mu_{self.index + 1}"


@dataclass(frozen=True)
class ConstTheta:
    """``theta(mu) = value``."""

    value: float = 1.0

    def __call__(self, mu):
        mu = np.asarray(mu, dtype=float)
        return np.full(mu.shape[:-1], self.value)

    def __str__(self):
        return f"{self.value:g}"


def _linear_theta(thetas, n_params: int):
    """``(T, t0)`` with ``theta(mu) = mu @ T + t0`` when every function is a
    :class:`ParamTheta` or :class:`ConstTheta`; ``None`` otherwise."""
    T = np.zeros((n_params, len(thetas)))
    t0 = np.zeros(len(thetas))
    for q, th in enumerate(thetas):
        if isinstance(th, ParamTheta):
            T[th.index, q] = 1.0
        elif isinstance(th, ConstTheta):
            t0[q] = th.value
        else:
            return None
    return T, t0


def _theta_matrix(thetas, mus: np.ndarray) -> np.ndarray:
    mus = np.atleast_2d(mus)
    cols = []
    for th in thetas:
        try:
            v = np.asarray(th(mus), dtype=float)
            if v.shape != (mus.shape[0],):
                raise ValueError
        except (ValueError, TypeError, IndexError):
            v = np.array([float(th(m)) for m in mus])
        cols.append(v)
    return np.column_stack(cols) if cols else np.zeros((mus.shape[0], 0))


@dataclass(frozen=True)
class AffineComponent:
    theta: Callable
    coefficient: Coefficient
    label: str = ""


# ---------------------------------------------------------------------------
# affine problem
# ---------------------------------------------------------------------------


@dataclass
class AffineProblem:
    """Parametrized operator and load in affine form on a fixed mesh."""

    s: float
    mesh: Mesh
    diffusion: list[AffineComponent]
    reaction: list[AffineComponent]
    load: list[AffineComponent]
    box: np.ndarray
    variant: str = "alpha"
    name: str = "custom"
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        FracOrder(self.s)
        self.box = np.atleast_2d(np.asarray(self.box, dtype=float))
        if self.box.ndim != 2 or self.box.shape[1] != 2 or np.any(self.box[:, 0] > self.box[:, 1]):
            raise ConfigError("parameter box must be a list of [lo, hi] pairs")
        if not self.diffusion:
            raise ConfigError("at least one diffusion component is required")
        if not self.load:
            raise ConfigError("at least one load component is required")
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown coercivity variant {self.variant!r}")
        self._truth: dict[tuple, np.ndarray] = {}

    @property
    def _box_limits(self):
        if "box" not in self._cache:
            tol = 1e-12 * (1.0 + np.abs(self.box).max())
            self._cache["box"] = (self.box[:, 0] - tol, self.box[:, 1] + tol)
        return self._cache["box"]

    # -- shape information -------------------------------------------------
    @property
    def beta(self) -> float:
        return 0.5 * self.s

    @property
    def n_params(self) -> int:
        return self.box.shape[0]

    @property
    def n_affine_terms(self) -> int:
        return len(self.diffusion) + len(self.reaction)

    @property
    def operator_components(self) -> list[AffineComponent]:
        return list(self.diffusion) + list(self.reaction)

    def check_mu(self, mu) -> np.ndarray:
        mu = np.asarray(mu, dtype=float).reshape(-1)
        if mu.shape != (self.n_params,):
            raise ConfigError(f"expected {self.n_params} parameters, got {mu.shape[0]}")
        lo, hi = self._box_limits
        if (mu < lo).any() or (mu > hi).any():
            raise ValueError(f"parameter {mu} outside the box")
        return mu

    # -- parameter functions ---------------------------------------------
    def _thetas(self, key: str, comps, mus) -> np.ndarray:
        ck = ("theta", key)
        if ck not in self._cache:
            self._cache[ck] = _linear_theta([c.theta for c in comps], self.n_params)
        lin = self._cache[ck]
        if lin is None:
            return _theta_matrix([c.theta for c in comps], mus)
        return np.atleast_2d(mus) @ lin[0] + lin[1]

    def theta_operator(self, mus) -> np.ndarray:
        return self._thetas("a", self.operator_components, mus)

    def theta_diffusion(self, mus) -> np.ndarray:
        return self._thetas("d", self.diffusion, mus)

    def theta_reaction(self, mus) -> np.ndarray:
        return self._thetas("r", self.reaction, mus)

    def theta_load(self, mus) -> np.ndarray:
        return self._thetas("f", self.load, mus)

    def _combine(self, comps, mu) -> Coefficient:
        w = _theta_matrix([c.theta for c in comps], mu)[0] if comps else []
        return Sum(tuple(float(x) for x in w), tuple(c.coefficient for c in comps))

    def diffusion_coefficient(self, mu) -> Coefficient:
        return self._combine(self.diffusion, self.check_mu(mu))

    def reaction_coefficient(self, mu) -> Coefficient:
        if not self.reaction:
            return Constant(0.0)
        return self._combine(self.reaction, self.check_mu(mu))

    def load_coefficient(self, mu) -> Coefficient:
        return self._combine(self.load, self.check_mu(mu))

    # -- coercivity ------------------------------------------------------
    def alpha(self, mus, variant: str | None = None) -> np.ndarray:
        """Coercivity lower bound for each row of ``mus``."""
        variant = variant or self.variant
        mus = np.atleast_2d(np.asarray(mus, dtype=float))
        pd = self._probes("d", self.diffusion)
        pr = self._probes("r", self.reaction)
        if pd is None or (self.reaction and pr is None):
            return np.array([
                coercivity_value(
                    self.s,
                    coefficient_stats(self.diffusion_coefficient(m)),
                    coefficient_stats(self.reaction_coefficient(m)),
                    variant,
                )
                for m in mus
            ])
        dv = self.theta_diffusion(mus) @ pd.T
        d_hi, d_lo = dv.max(axis=1), dv.min(axis=1)
        if "gamma" not in self._cache:
            self._cache["gamma"] = (abs(math.cos(0.5 * math.pi * self.s)), gamma_fn(0.5 * self.s + 1.0))
        cosine, G = self._cache["gamma"]
        gam = 0.5 * (d_hi + d_lo) * cosine - 0.5 * (d_hi - d_lo)
        if variant == "gamma":
            return gam
        if variant == "alpha":
            return gam * G**4 / 8.0
        if self.reaction:
            r_lo = (self.theta_reaction(mus) @ pr.T).min(axis=1)
        else:
            r_lo = np.zeros(len(mus))
        return gam * G**2 / 2.0 + 0.5 * np.minimum(r_lo, 0.0)

    def _probes(self, key, comps):
        ck = ("probes", key)
        if ck not in self._cache:
            self._cache[ck] = probe_matrix([c.coefficient for c in comps]) if comps else np.zeros((1, 0))
        return self._cache[ck]

    # -- truth quantities ---------------------------------------------------
    @property
    def diffusion_matrices(self) -> list[np.ndarray]:
        if "A1" not in self._cache:
            self._cache["A1"] = [
                assemble_diffusion(self.mesh, self.beta, c.coefficient, require_positive=False) for c in self.diffusion
            ]
        return self._cache["A1"]

    @property
    def reaction_matrices(self) -> list[np.ndarray]:
        if "A2" not in self._cache:
            self._cache["A2"] = [assemble_reaction(self.mesh, c.coefficient) for c in self.reaction]
        return self._cache["A2"]

    @property
    def operator_matrices(self) -> list[np.ndarray]:
        return self.diffusion_matrices + self.reaction_matrices

    @property
    def load_vectors(self) -> list[np.ndarray]:
        if "f" not in self._cache:
            self._cache["f"] = [assemble_load(self.mesh, c.coefficient) for c in self.load]
        return self._cache["f"]

    @property
    def gram(self) -> np.ndarray:
        if "G" not in self._cache:
            self._cache["G"] = assemble_seminorm_gram(self.mesh, self.beta)
        return self._cache["G"]

    @property
    def gram_factor(self) -> np.ndarray:
        """Lower Cholesky factor ``L`` of the V-Gram matrix."""
        if "L" not in self._cache:
            self._cache["L"] = np.linalg.cholesky(self.gram)
        return self._cache["L"]

    def whiten(self, vectors: np.ndarray) -> np.ndarray:
        """``L^-1 v``: functional vectors to coordinates whose 2-norm is the dual norm."""
        return sla.solve_triangular(self.gram_factor, vectors, lower=True)

    def operator(self, mu) -> np.ndarray:
        th = self.theta_operator(self.check_mu(mu))[0]
        return sum(t * A for t, A in zip(th, self.operator_matrices))

    def rhs(self, mu) -> np.ndarray:
        th = self.theta_load(self.check_mu(mu))[0]
        return sum(t * f for t, f in zip(th, self.load_vectors))

    def assemble_direct(self, mu) -> tuple[np.ndarray, np.ndarray]:
        """Assemble ``A(mu)``, ``f(mu)`` from the combined coefficients (no affine reuse)."""
        mu = self.check_mu(mu)
        A = assemble_diffusion(self.mesh, self.beta, self.diffusion_coefficient(mu))
        if self.reaction:
            A = A + assemble_reaction(self.mesh, self.reaction_coefficient(mu))
        return A, assemble_load(self.mesh, self.load_coefficient(mu))

    def truth_solve(self, mu) -> PiecewiseLinearFn:
        mu = self.check_mu(mu)
        key = tuple(mu.tolist())
        if key not in self._truth:
            self._truth[key] = solve_dense(self.operator(mu), self.rhs(mu))
        return PiecewiseLinearFn(self.mesh, self._truth[key])


def truth_solve(problem: AffineProblem, mu) -> PiecewiseLinearFn:
    return problem.truth_solve(mu)


def _greedy_case_1(s, mesh, variant):
    quarters = [indicator(0.0, 0.25), indicator(0.25, 0.5), indicator(0.5, 0.75), indicator(0.75, 1.0)]
    thetas = [ConstTheta(1.0), ParamTheta(0), ParamTheta(1), ParamTheta(2)]
    diffusion = [AffineComponent(t, q, f"d{i + 1}") for i, (t, q) in enumerate(zip(thetas, quarters))]
    reaction = [
        AffineComponent(ParamTheta(3), Constant(1.0), "r1"),
        AffineComponent(ParamTheta(4), Affine(0.0, 1.0), "r2"),
    ]
    load = [AffineComponent(ConstTheta(1.0), polynomial([0.0, 1.0, -1.0]), "f1")]
    box = [[0.7, 1.3]] * 3 + [[0.0, 1.0]] * 2
    return AffineProblem(s, mesh, diffusion, reaction, load, np.array(box), variant, "greedy-case-1")


def _constant_diffusion(s, mesh, variant, mu_plus):
    diffusion = [AffineComponent(ConstTheta(1.0), Constant(1.0), "d1")]
    reaction = [AffineComponent(ParamTheta(0), Constant(1.0), "r1")]
    load = [AffineComponent(ConstTheta(1.0), polynomial([0.0, 1.0, -1.0]), "f1")]
    return AffineProblem(s, mesh, diffusion, reaction, load, np.array([[0.0, mu_plus]]), variant, "constant-diffusion")


def build_affine_problem(config) -> AffineProblem:
    """Build a named or custom affine problem.

    ``config`` is a mapping with ``name`` (``greedy-case-1``,
    ``constant-diffusion`` or ``custom``), ``s``, ``n_elements`` and optionally
    ``variant``, ``mu_plus`` (constant-diffusion box ``[0, mu_plus]``) or, for
    custom problems, ``diffusion``/``reaction``/``load`` lists of
    ``(theta, coefficient)`` pairs plus ``box``.
    """
    if isinstance(config, str):
        config = {"name": config}
    cfg = dict(config)
    name = cfg.get("name", "custom")
    s = float(cfg.get("s", 1.5))
    mesh = cfg.get("mesh") or build_mesh(int(cfg.get("n_elements", 2**7)))
    variant = cfg.get("variant", "alpha")
    if name == "greedy-case-1":
        return _greedy_case_1(s, mesh, variant)
    if name == "constant-diffusion":
        return _constant_diffusion(s, mesh, variant, float(cfg.get("mu_plus", 1.0)))
    if name != "custom":
        raise ConfigError(f"unknown problem {name!r}")

    def comps(key):
        out = []
        for item in cfg.get(key, []):
            if isinstance(item, AffineComponent):
                out.append(item)
                continue
            try:
                theta, coef = item
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"malformed {key} component {item!r}") from exc
            if isinstance(theta, int):
                theta = ParamTheta(theta)
            elif np.isscalar(theta):
                theta = ConstTheta(float(theta))
            out.append(AffineComponent(theta, as_coefficient(coef)))
        return out

    if "box" not in cfg:
        raise ConfigError("custom problems need a parameter box")
    return AffineProblem(s, mesh, comps("diffusion"), comps("reaction"), comps("load"), np.asarray(cfg["box"]), variant)


# ---------------------------------------------------------------------------
# training sets
# ---------------------------------------------------------------------------


def gauss_legendre_grid(box, points_per_dim: int, cap: int = TRAINING_CAP) -> np.ndarray:
    """Tensor grid of Gauss-Legendre nodes mapped into ``box``; shape ``(n**P, P)``."""
    box = np.atleast_2d(np.asarray(box, dtype=float))
    if points_per_dim < 1:
        raise ValueError("points_per_dim must be >= 1")
    total = points_per_dim ** box.shape[0]
    if total > cap:
        raise ValueError(f"training set of {total} points exceeds the cap {cap}")
    x, _ = np.polynomial.legendre.leggauss(points_per_dim)
    axes = [lo + 0.5 * (x + 1.0) * (hi - lo) for lo, hi in box]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([m.ravel() for m in mesh])


def random_parameters(box, n: int, seed: int = 0) -> np.ndarray:
    box = np.atleast_2d(np.asarray(box, dtype=float))
    rng = np.random.default_rng(seed)
    return box[:, 0] + rng.random((n, box.shape[0])) * (box[:, 1] - box[:, 0])


# ---------------------------------------------------------------------------
# reduced model
# ---------------------------------------------------------------------------


@dataclass
class ReducedModel:
    """Offline data of a reduced basis approximation.

    ``basis`` holds G-orthonormal columns. ``reduced_operators[q] = V^T A_q V``
    in the order diffusion, reaction; ``reduced_loads[q] = V^T f_q``. The
    residual Gram blocks are ``ff[q, p] = <f_q, f_p>``, ``fa[q, p, i] =
    <f_q, A_p v_i>`` and ``aa[q, p, i, j] = <A_q v_i, A_p v_j>`` in the dual
    inner product; ``residual_factor`` is an upper-triangular ``R`` with
    ``R^T R`` equal to the same blocks laid out as one matrix.
    """

    problem: AffineProblem
    basis: np.ndarray
    reduced_operators: list[np.ndarray]
    reduced_loads: list[np.ndarray]
    ff: np.ndarray
    fa: np.ndarray
    aa: np.ndarray
    residual_factor: np.ndarray
    selected: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        n = self.basis.shape[1]
        self._ops = np.asarray(self.reduced_operators).reshape(len(self.reduced_operators), n, n)
        self._loads = np.asarray(self.reduced_loads).reshape(len(self.reduced_loads), n)
        self._online = _online_maps(self)

    @property
    def n(self) -> int:
        return self.basis.shape[1]

    def alpha(self, mus) -> np.ndarray:
        return self.problem.alpha(mus)

    def truncated(self, n: int) -> "ReducedModel":
        """Model restricted to the first ``n`` basis functions."""
        return _build_model(self.problem, self.basis[:, :n], self.selected[:n])


def _build_model(problem: AffineProblem, basis: np.ndarray, selected) -> ReducedModel:
    A = problem.operator_matrices
    F = problem.load_vectors
    AV = [Aq @ basis for Aq in A]
    red_ops = [basis.T @ x for x in AV]
    red_f = [basis.T @ f for f in F]
    Wf = problem.whiten(np.column_stack(F))
    if basis.shape[1]:
        Wa = problem.whiten(np.column_stack(AV))  # columns ordered (q, i)
    else:
        Wa = np.zeros((basis.shape[0], 0))
    W = np.column_stack([Wf, Wa])
    K = np.concatenate([Wf, Wa], axis=1).T @ W
    Qf, Qa, n = len(F), len(A), basis.shape[1]
    ff = K[:Qf, :Qf]
    fa = K[:Qf, Qf:].reshape(Qf, Qa, n)
    aa = K[Qf:, Qf:].reshape(Qa, n, Qa, n).transpose(0, 2, 1, 3)
    R = np.linalg.qr(W, mode="r") if W.shape[1] else np.zeros((0, 0))
    return ReducedModel(problem, basis, red_ops, red_f, ff, fa, aa, R, [np.asarray(m) for m in selected])


def empty_model(problem: AffineProblem) -> ReducedModel:
    return _build_model(problem, np.zeros((problem.mesh.n_dofs, 0)), [])


def _residual_coordinates(theta_f: np.ndarray, theta_a: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
    # z = [theta_f, -theta_a (x) c] for rows of a batch
    batch = theta_f.shape[0]
    za = -(theta_a[:, :, None] * coeffs[:, None, :]).reshape(batch, -1)
    return np.concatenate([theta_f, za], axis=1)


def reduced_solve_batch(model: ReducedModel, mus: np.ndarray):
    """Reduced coefficients for every row of ``mus``; returns ``(coeffs, theta_a, theta_f)``."""
    p = model.problem
    ta = p.theta_operator(mus)
    tf = p.theta_load(mus)
    n = model.n
    if n == 0:
        return np.zeros((len(mus), 0)), ta, tf
    Ahat = np.einsum("bq,qij->bij", ta, model._ops)
    fhat = tf @ model._loads
    try:
        c = np.linalg.solve(Ahat, fhat[:, :, None])[:, :, 0]
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("reduced system is singular; parameter outside the coercive region") from exc
    return c, ta, tf


def residual_dual_norm(model: ReducedModel, mu, coeffs, method: str = "factor") -> float | np.ndarray:
    """Dual norm of ``f(mu) - A(mu) V c`` in the V-inner product.

    ``method="factor"`` uses the triangular factor of the Gram blocks,
    ``method="blocks"`` the expanded quadratic form (tiny negative values are
    clamped, larger ones signal corrupted blocks). Both cost
    ``O((Q n)^2)`` independent of the truth dimension.
    """
    mus = np.atleast_2d(np.asarray(mu, dtype=float))
    coeffs = np.atleast_2d(np.asarray(coeffs, dtype=float)).reshape(len(mus), model.n)
    p = model.problem
    z = _residual_coordinates(p.theta_load(mus), p.theta_operator(mus), coeffs)
    if method == "factor":
        val = np.linalg.norm(z @ model.residual_factor.T, axis=1)
    elif method == "blocks":
        Qf, Qa, n = model.ff.shape[0], model.fa.shape[1], model.n
        K = np.zeros((Qf + Qa * n,) * 2)
        K[:Qf, :Qf] = model.ff
        K[:Qf, Qf:] = model.fa.reshape(Qf, Qa * n)
        K[Qf:, :Qf] = K[:Qf, Qf:].T
        K[Qf:, Qf:] = model.aa.transpose(0, 2, 1, 3).reshape(Qa * n, Qa * n)
        sq = np.einsum("bi,ij,bj->b", z, K, z)
        scale = np.einsum("bi,ii,bi->b", np.abs(z), np.abs(np.diag(K))[:, None] * np.eye(len(K)), np.abs(z))
        if np.any(sq < -1e-8 * np.maximum(scale, 1e-300)):
            raise ArithmeticError("residual quadratic form is significantly negative")
        val = np.sqrt(np.maximum(sq, 0.0))
    else:
        raise ValueError(f"unknown method {method!r}")
    return float(val[0]) if np.ndim(mu) == 1 else val


def residual_dual_norm_direct(problem: AffineProblem, mu, u: np.ndarray) -> float:
    """Riesz-solve oracle: ``sqrt(r^T G^-1 r)`` with ``r = f(mu) - A(mu) u``."""
    r = problem.rhs(mu) - problem.operator(mu) @ u
    return float(np.linalg.norm(problem.whiten(r)))


@dataclass
class RBSolution:
    coefficients: np.ndarray
    delta: float
    model: ReducedModel = field(repr=False)

    @property
    def u_n(self) -> PiecewiseLinearFn:
        return PiecewiseLinearFn(self.model.problem.mesh, self.model.basis @ self.coefficients)

    def __iter__(self):
        yield self.coefficients
        yield self.u_n
        yield self.delta


@dataclass
class _OnlineMaps:
    """Parameter-to-array maps folded into single matrix products."""

    lo: np.ndarray
    hi: np.ndarray
    theta_a: tuple[np.ndarray, np.ndarray]
    theta_f: tuple[np.ndarray, np.ndarray]
    ops: np.ndarray  # (Q_a, n*n)
    loads: np.ndarray  # (Q_f, n)
    d_probes: tuple[np.ndarray, np.ndarray]
    r_probes: tuple[np.ndarray, np.ndarray] | None
    cosine: float
    factors: tuple[float, float]  # multipliers of gamma and of min(r, 0)


def _online_maps(model: ReducedModel) -> _OnlineMaps | None:
    p = model.problem
    la = _linear_theta([c.theta for c in p.operator_components], p.n_params)
    lf = _linear_theta([c.theta for c in p.load], p.n_params)
    ld = _linear_theta([c.theta for c in p.diffusion], p.n_params)
    lr = _linear_theta([c.theta for c in p.reaction], p.n_params)
    pd = p._probes("d", p.diffusion)
    pr = p._probes("r", p.reaction)
    if la is None or lf is None or ld is None or lr is None or pd is None or (p.reaction and pr is None):
        return None
    cosine = abs(math.cos(0.5 * math.pi * p.s))
    G = gamma_fn(0.5 * p.s + 1.0)
    factors = {"gamma": (1.0, 0.0), "alpha": (G**4 / 8.0, 0.0), "alpha-tilde": (G**2 / 2.0, 0.5)}[p.variant]
    r_probes = (lr[0] @ pr.T, lr[1] @ pr.T) if p.reaction and factors[1] else None
    n = model.n
    return _OnlineMaps(
        *p._box_limits,
        la,
        lf,
        model._ops.reshape(len(model._ops), n * n),
        model._loads,
        (ld[0] @ pd.T, ld[1] @ pd.T),
        r_probes,
        cosine,
        factors,
    )


def _alpha_online(om: _OnlineMaps, mu: np.ndarray) -> float:
    dv = mu @ om.d_probes[0] + om.d_probes[1]
    hi, lo = dv.max(), dv.min()
    gam = 0.5 * (hi + lo) * om.cosine - 0.5 * (hi - lo)
    val = om.factors[0] * gam
    if om.r_probes is not None:
        val += om.factors[1] * min(float((mu @ om.r_probes[0] + om.r_probes[1]).min()), 0.0)
    return float(val)


def rb_solve(model: ReducedModel, mu) -> RBSolution:
    """Online solve: reduced Galerkin system and certified bound ``Delta_n(mu)``.

    Only ``n``- and ``Q``-sized arrays are touched.
    """
    p = model.problem
    om = model._online
    if om is None:
        mu = p.check_mu(mu)
        ta = p.theta_operator(mu)[0]
        tf = p.theta_load(mu)[0]
        alpha = float(p.alpha(mu)[0])
    else:
        mu = np.asarray(mu, dtype=float).reshape(-1)
        if mu.shape != om.lo.shape:
            raise ConfigError(f"expected {om.lo.shape[0]} parameters, got {mu.shape[0]}")
        if (mu < om.lo).any() or (mu > om.hi).any():
            raise ValueError(f"parameter {mu} outside the box")
        ta = mu @ om.theta_a[0] + om.theta_a[1]
        tf = mu @ om.theta_f[0] + om.theta_f[1]
        alpha = _alpha_online(om, mu)
    n = model.n
    if n == 0:
        c = np.zeros(0)
    else:
        A = np.tensordot(ta, model._ops, axes=1) if om is None else (ta @ om.ops).reshape(n, n)
        _, _, c, info = dgesv(A, tf @ model._loads)
        if info != 0:
            raise np.linalg.LinAlgError("reduced system is singular; parameter outside the coercive region")
    z = np.concatenate((tf, -np.outer(ta, c).ravel()))
    w = model.residual_factor @ z
    res = math.sqrt(float(w @ w))
    if alpha <= 0.0:
        raise ValueError("coercivity lower bound is not positive at this parameter")
    return RBSolution(c, res / alpha, model)


# ---------------------------------------------------------------------------
# greedy
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GreedyRecord:
    iteration: int
    basis_size: int
    selected: np.ndarray | None
    max_estimator: float
    max_true_error: float | None


@dataclass
class GreedyTrace:
    records: list[GreedyRecord] = field(default_factory=list)
    mode: str = "weak"

    @property
    def max_estimators(self) -> np.ndarray:
        return np.array([r.max_estimator for r in self.records])

    @property
    def max_true_errors(self) -> np.ndarray:
        return np.array([np.nan if r.max_true_error is None else r.max_true_error for r in self.records])

    def fitted_rate(self, first_iteration: int = 2, values: str = "estimator") -> float:
        """Least-squares slope ``rho`` of ``log(value) ~ c - rho * iteration``."""
        y = self.max_estimators if values == "estimator" else self.max_true_errors
        it = np.array([r.iteration for r in self.records])
        keep = (it >= first_iteration) & np.isfinite(y) & (y > 0)
        if keep.sum() < 2:
            return float("nan")
        slope = np.polyfit(it[keep], np.log(y[keep]), 1)[0]
        return float(-slope)

    def to_rows(self, n_params: int) -> list[list]:
        rows = []
        for r in self.records:
            mu = [""] * n_params if r.selected is None else [f"{x:.17g}" for x in r.selected]
            err = "" if r.max_true_error is None else f"{r.max_true_error:.6g}"
            rows.append([r.iteration, *mu, f"{r.max_estimator:.6g}", err])
        return rows


def _estimators(model: ReducedModel, mus: np.ndarray, alpha: np.ndarray, chunk: int = 4096) -> np.ndarray:
    out = np.empty(len(mus))
    for a in range(0, len(mus), chunk):
        b = min(a + chunk, len(mus))
        c, ta, tf = reduced_solve_batch(model, mus[a:b])
        z = _residual_coordinates(tf, ta, c)
        out[a:b] = np.linalg.norm(z @ model.residual_factor.T, axis=1) / alpha[a:b]
    return out


def _truth_block(problem: AffineProblem, mus: np.ndarray, cache_dir=None) -> np.ndarray:
    path = None
    if cache_dir is not None:
        key = abs(hash((problem.name, problem.s, problem.mesh.n_elements, mus.tobytes()))) % 10**12
        path = Path(cache_dir) / f"truth_{key}.npy"
        if path.exists():
            return np.load(path)
    U = np.column_stack([problem.truth_solve(m).interior_coeffs for m in mus])
    if path is not None:
        os.makedirs(path.parent, exist_ok=True)
        np.save(path, U)
    return U


def _true_errors(problem: AffineProblem, model: ReducedModel, white_truth: np.ndarray, mus: np.ndarray, chunk: int = 4096):
    # ||u - V c||_G = ||L^T (u - V c)||
    LtV = problem.gram_factor.T @ model.basis
    out = np.empty(len(mus))
    for a in range(0, len(mus), chunk):
        b = min(a + chunk, len(mus))
        c, _, _ = reduced_solve_batch(model, mus[a:b])
        E = white_truth[:, a:b] - LtV @ c.T
        out[a:b] = np.linalg.norm(E, axis=0)
    return out


def orthonormalize(v: np.ndarray, basis: np.ndarray, G: np.ndarray) -> np.ndarray:
    """Modified Gram-Schmidt in the G-inner product with one re-orthogonalization."""
    norm0 = math.sqrt(max(float(v @ G @ v), 0.0))
    w = v.copy()
    for _ in range(2):
        for j in range(basis.shape[1]):
            q = basis[:, j]
            w = w - float(q @ (G @ w)) * q
    nrm = math.sqrt(max(float(w @ G @ w), 0.0))
    if norm0 == 0.0 or nrm < STAGNATION_RATIO * norm0:
        raise StagnationError("snapshot is linearly dependent on the current basis")
    return w / nrm


def greedy_train(
    problem: AffineProblem,
    training: np.ndarray,
    mode: str = "weak",
    tol: float = 1e-6,
    n_max: int = 20,
    cache_dir=None,
    track_true_error: bool | None = None,
) -> tuple[ReducedModel, GreedyTrace]:
    """Greedy basis selection over a finite training set.

    ``mode="weak"`` maximizes the certified bound ``Delta_n``; ``"strong"``
    maximizes the true V-norm error and needs every truth solution. Ties go
    to the lowest training index. Stops once the maximized quantity is at
    most ``tol`` or the basis has ``n_max`` functions.
    """
    if mode not in ("weak", "strong"):
        raise ConfigError(f"unknown greedy mode {mode!r}")
    if tol <= 0.0 or n_max < 1:
        raise ConfigError("tol must be positive and n_max >= 1")
    training = np.atleast_2d(np.asarray(training, dtype=float))
    if training.shape[0] == 0:
        raise ConfigError("training set is empty")
    for m in training:
        problem.check_mu(m)
    track = mode == "strong" if track_true_error is None else track_true_error

    alpha = problem.alpha(training)
    if np.any(alpha <= 0.0):
        raise ValueError("coercivity lower bound is not positive on the whole training set")
    white_truth = None
    if track:
        U = _truth_block(problem, training, cache_dir)
        white_truth = problem.gram_factor.T @ U

    G = problem.gram
    basis = np.zeros((problem.mesh.n_dofs, 0))
    selected: list[np.ndarray] = []
    model = empty_model(problem)
    trace = GreedyTrace(mode=mode)
    iteration = 1
    while True:
        est = _estimators(model, training, alpha)
        err = _true_errors(problem, model, white_truth, training) if track else None
        drive = err if mode == "strong" else est
        k = int(np.argmax(drive))  # first index on ties
        done = drive[k] <= tol or model.n >= n_max
        trace.records.append(
            GreedyRecord(
                iteration,
                model.n,
                None if done else training[k].copy(),
                float(est.max()),
                None if err is None else float(err.max()),
            )
        )
        if done:
            break
        snap = problem.truth_solve(training[k]).interior_coeffs
        basis = np.column_stack([basis, orthonormalize(snap, basis, G)])
        selected.append(training[k].copy())
        model = _build_model(problem, basis, selected)
        iteration += 1
    return model, trace


# ---------------------------------------------------------------------------
# timing
# ---------------------------------------------------------------------------


@dataclass
class SpeedupReport:
    dofs_fem: int
    dofs_rb: int
    affine_terms: int
    t_assemble_solve: float
    t_solve: float
    t_rb: float
    timings: dict = field(default_factory=dict)

    @property
    def dof_ratio(self) -> float:
        return self.dofs_fem / self.dofs_rb

    @property
    def ratio_solve(self) -> float:
        return self.t_solve / self.t_rb

    @property
    def ratio_total(self) -> float:
        return self.t_assemble_solve / self.t_rb


def _median_time(fn, repetitions: int) -> float:
    times = []
    for _ in range(repetitions):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def speedup_bench(model: ReducedModel, problem: AffineProblem, mu_sample: Sequence, repetitions: int = 10) -> SpeedupReport:
    """Median wall-clock of full assembly + solve, solve only, and the online RB solve."""
    if repetitions < 10:
        raise ValueError("repetitions must be at least 10")
    mus = [problem.check_mu(m) for m in mu_sample]
    systems = [(problem.operator(m), problem.rhs(m)) for m in mus]

    def full():
        for m in mus:
            A, f = problem.assemble_direct(m)
            solve_dense(A, f)

    def solve_only():
        for A, f in systems:
            solve_dense(A, f)

    def online():
        for m in mus:
            rb_solve(model, m)

    online()  # warm caches
    k = len(mus)
    t_full = _median_time(full, max(3, repetitions // 5)) / k
    t_solve = _median_time(solve_only, repetitions) / k
    t_rb = _median_time(online, repetitions) / k
    return SpeedupReport(problem.mesh.n_dofs, model.n, problem.n_affine_terms, t_full, t_solve, t_rb)


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------


def save_model(model: ReducedModel, directory) -> Path:
    """Write basis, reduced components, residual blocks and a manifest."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    fmt = "%.17g"
    np.savetxt(d / "basis.csv", model.basis, delimiter=",", fmt=fmt)
    for q, A in enumerate(model.reduced_operators):
        np.savetxt(d / f"reduced_operator_{q}.csv", np.atleast_2d(A), delimiter=",", fmt=fmt)
    for q, f in enumerate(model.reduced_loads):
        np.savetxt(d / f"reduced_load_{q}.csv", np.atleast_1d(f), delimiter=",", fmt=fmt)
    np.savetxt(d / "residual_ff.csv", model.ff, delimiter=",", fmt=fmt)
    np.savetxt(d / "residual_fa.csv", model.fa.reshape(model.ff.shape[0], -1), delimiter=",", fmt=fmt)
    Qa, n = model.fa.shape[1], model.n
    np.savetxt(d / "residual_aa.csv", model.aa.transpose(0, 2, 1, 3).reshape(Qa * n, Qa * n), delimiter=",", fmt=fmt)
    np.savetxt(d / "residual_factor.csv", model.residual_factor, delimiter=",", fmt=fmt)
    np.savetxt(d / "selected.csv", np.array(model.selected).reshape(model.n, -1), delimiter=",", fmt=fmt)
    p = model.problem
    box = ";".join(f"{lo:g}:{hi:g}" for lo, hi in p.box)
    manifest = {
        "problem": p.name,
        "s": p.s,
        "N": p.mesh.n_elements,
        "n": model.n,
        "variant": p.variant,
        "box": box,
        "Qd": len(p.diffusion),
        "Qr": len(p.reaction),
        "Qf": len(p.load),
    }
    (d / "manifest.txt").write_text("".join(f"{k}={v}\n" for k, v in manifest.items()))
    return d


def load_model(directory, problem: AffineProblem) -> ReducedModel:
    """Rebuild a model saved by :func:`save_model` for the same problem."""
    d = Path(directory)
    manifest = dict(line.split("=", 1) for line in (d / "manifest.txt").read_text().splitlines() if line)
    if int(manifest["N"]) != problem.mesh.n_elements or float(manifest["s"]) != problem.s:
        raise ConfigError("saved model does not match the problem")
    n = int(manifest["n"])
    basis = np.loadtxt(d / "basis.csv", delimiter=",", ndmin=2).reshape(problem.mesh.n_dofs, n)
    selected = list(np.loadtxt(d / "selected.csv", delimiter=",", ndmin=2).reshape(n, -1)) if n else []
    return _build_model(problem, basis, selected)
