"""Piecewise-linear finite elements for the two-sided fractional problem.

The bilinear form is ``a(u, v) = -(d D^beta u, Dbar^beta v) + (r u, v)`` on
the zero-trace hat-function space of a uniform mesh, ``beta = s/2``. All
fractional derivatives of hat functions are finite sums of truncated powers
``(x - x_k)_+^(1-beta)``, so the stiffness entries are integrals of products
of such powers.

* For constant ``d`` the entries are exact: the product of a left and a right
  truncated power integrates to a Beta function, which makes the matrix
  Toeplitz with entries given by a fourth difference of ``m^(3-2 beta)``.
* For variable ``d`` every element is integrated with Gauss-Legendre, and the
  ``(x - x_e)^(1-beta)`` / ``(x_{e+1} - x)^(1-beta)`` endpoint singularities
  are corrected with Gauss-Jacobi rules.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np
import scipy.linalg as sla

from .coefficients import Coefficient, Constant, as_coefficient
from .fractional_ops import (
    fourth_difference_power,
    gauss_jacobi01,
    gauss_legendre01,
    gamma_fn,
    right_integral_of_power,
    second_difference_power,
)

DEFAULT_QUAD_ORDER = 10


class NormKind(Enum):
    L2 = "L2"
    SEMINORM = "seminorm"
    FULL = "full"


@dataclass(frozen=True)
class Mesh:
    """Uniform mesh of (0, 1) with ``n_elements`` cells."""

    n_elements: int

    def __post_init__(self):
        if int(self.n_elements) != self.n_elements or self.n_elements < 2:
            raise ValueError(f"need at least 2 elements, got {self.n_elements}")

    @property
    def h(self) -> float:
        return 1.0 / self.n_elements

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.n_elements + 1) / self.n_elements

    @property
    def n_dofs(self) -> int:
        return self.n_elements - 1

    def contains_points(self, pts) -> bool:
        """True when every point in ``pts`` is a mesh node."""
        return all(abs(p * self.n_elements - round(p * self.n_elements)) < 1e-12 for p in pts)


def build_mesh(n_elements: int) -> Mesh:
    return Mesh(int(n_elements))


@dataclass(frozen=True)
class PiecewiseLinearFn:
    """Hat-function expansion with implicit zero boundary values."""

    mesh: Mesh
    interior_coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.interior_coeffs, dtype=float)
        if c.shape != (self.mesh.n_dofs,):
            raise ValueError(f"expected {self.mesh.n_dofs} coefficients, got {c.shape}")
        object.__setattr__(self, "interior_coeffs", c)

    def nodal_values(self) -> np.ndarray:
        return np.concatenate(([0.0], self.interior_coeffs, [0.0]))

    def __call__(self, x):
        return np.interp(x, self.mesh.nodes, self.nodal_values())

    def prolong(self, fine: Mesh) -> "PiecewiseLinearFn":
        """Exact representation on a nested finer mesh."""
        ratio = fine.n_elements // self.mesh.n_elements
        if ratio * self.mesh.n_elements != fine.n_elements:
            raise ValueError("meshes are not nested")
        return PiecewiseLinearFn(fine, self(fine.nodes[1:-1]))


# ---------------------------------------------------------------------------
# diffusion
# ---------------------------------------------------------------------------


def _check_beta(beta: float):
    if not 0.5 < beta < 1.0:
        raise ValueError(f"beta must lie in (1/2, 1), got {beta}")


@lru_cache(maxsize=32)
def _toeplitz_column(n_dofs: int, beta: float) -> np.ndarray:
    # entries of -(D phi_j, Dbar phi_i) at unit step, indexed by m = i - j
    alpha = 1.0 - beta
    g = 2.0 * alpha + 1.0
    beta_fn = gamma_fn(alpha + 1.0) ** 2 / gamma_fn(2.0 * alpha + 2.0)
    m = np.arange(-1, n_dofs, dtype=float)
    vals = -beta_fn / gamma_fn(2.0 - beta) ** 2 * fourth_difference_power(m, g)
    vals.setflags(write=False)
    return vals


def _constant_diffusion(mesh: Mesh, beta: float, value: float) -> np.ndarray:
    n = mesh.n_dofs
    col = _toeplitz_column(n, beta)
    scale = value * mesh.h ** (1.0 - 2.0 * beta)
    lower = col[1:] * scale  # m = 0, 1, ...
    first_row = np.zeros(n)
    first_row[0] = lower[0]
    if n > 1:
        first_row[1] = col[0] * scale  # m = -1; m <= -2 vanish
    return sla.toeplitz(lower, first_row)


def _check_alignment(mesh: Mesh, c: Coefficient, name: str):
    if c.breakpoints and not mesh.contains_points(c.breakpoints):
        raise ValueError(f"{name} has a discontinuity that is not a mesh node")


def _element_values(mesh: Mesh, c: Coefficient, xi: np.ndarray) -> np.ndarray:
    x = mesh.nodes[:-1, None] + mesh.h * xi[None, :]
    return np.asarray(c(x), dtype=float)


def _profiles(n_elements: int, beta: float, xi: np.ndarray):
    """Left/right hat-derivative profiles on a reference element.

    ``left[m + 1, q]`` is the unit-step left profile of hat ``k`` on element
    ``e = k + m`` at ``xi[q]``; ``right[m, q]`` is the right profile of hat
    ``k`` on element ``e = k - m``. Both are second differences of
    ``y^(1-beta)`` and are computed stably.
    """
    alpha = 1.0 - beta
    m_left = np.arange(-1, n_elements, dtype=float)
    m_right = np.arange(0, n_elements + 1, dtype=float)
    yl = m_left[:, None] + xi[None, :]
    yr = m_right[:, None] - xi[None, :]
    left = second_difference_power(yl.ravel(), 1.0, alpha).reshape(yl.shape)
    right = second_difference_power(yr.ravel(), 1.0, alpha).reshape(yr.shape)
    return left, right


def _general_diffusion(
    mesh: Mesh, beta: float, d: Coefficient, quad_order: int, require_positive: bool = True, chunk: int = 128
) -> np.ndarray:
    N = mesh.n_elements
    alpha = 1.0 - beta
    Q = quad_order
    xg, wg = gauss_legendre01(Q)
    xl, wl = gauss_jacobi01(Q, alpha, 0.0)
    xr, wr = gauss_jacobi01(Q, 0.0, alpha)
    xb, wb = gauss_jacobi01(Q, alpha, alpha)

    dg = _element_values(mesh, d, xg)
    if require_positive and np.any(dg <= 0.0):
        raise ValueError("diffusion coefficient must be positive")
    dl = _element_values(mesh, d, xl)
    dr = _element_values(mesh, d, xr)
    db = _element_values(mesh, d, xb)

    pl_g, pr_g = _profiles(N, beta, xg)
    pl_r, _ = _profiles(N, beta, xr)
    _, pr_l = _profiles(N, beta, xl)

    scale = -mesh.h ** (1.0 - 2.0 * beta) / gamma_fn(2.0 - beta) ** 2
    A = np.zeros((N + 1, N + 1))  # indexed by node k, trimmed at the end

    # bulk Gauss-Legendre: A[k, j] += sum_e sum_q R[k-e, q] w_q d_eq L[e-j+1, q]
    for e0 in range(0, N, chunk):
        e1 = min(e0 + chunk, N)
        es = np.arange(e0, e1)
        rows = np.arange(e0, N + 1)
        cols = np.arange(0, e1 + 2)
        mr = rows[:, None] - es[None, :]
        ml = es[None, :] - cols[:, None] + 1
        R = np.where((mr >= 0)[:, :, None], pr_g[np.clip(mr, 0, N)], 0.0)
        L = np.where((ml >= 0)[:, :, None], pl_g[np.clip(ml, 0, N)], 0.0)
        W = dg[es] * wg[None, :]
        R = (R * W[None, :, :]).reshape(len(rows), -1)
        L = L.reshape(len(cols), -1)
        A[np.ix_(rows, cols[cols <= N])] += R @ L[cols <= N].T

    # endpoint corrections; singular coefficients (1, -2, 1)
    sing = np.array([1.0, -2.0, 1.0])
    sl_g = xg**alpha
    sr_g = (1.0 - xg) ** alpha
    # smooth remainders of the profiles with the singular part removed
    rt_l = pr_l.copy()
    rt_l[:3] -= sing[:, None] * ((1.0 - xl) ** alpha)[None, :]
    rt_g = pr_g.copy()
    rt_g[:3] -= sing[:, None] * sr_g[None, :]
    lt_r = pl_r.copy()
    lt_r[:3] -= sing[:, None] * (xr**alpha)[None, :]
    lt_g = pl_g.copy()
    lt_g[:3] -= sing[:, None] * sl_g[None, :]

    # uL[e, m'] : left singular part of the left profile against right remainder
    uL = (dl * wl) @ rt_l.T - (dg * wg * sl_g) @ rt_g.T
    # uR[e, m+1] : right singular part of the right profile against left remainder
    uR = (dr * wr) @ lt_r.T - (dg * wg * sr_g) @ lt_g.T
    # both singular parts
    uB = (db * wb).sum(axis=1) - (dg * wg * sl_g * sr_g).sum(axis=1)

    for e in range(N):
        span = N + 1 - e
        for t, m in enumerate((-1, 0, 1)):
            j = e - m
            if 0 <= j <= N:
                A[e:, j] += sing[t] * uL[e, :span]
        for t in range(3):
            k = e + t
            if k <= N:
                A[k, : e + 2] += sing[t] * uR[e, e + 1 :: -1][: e + 2]
        for t in range(3):
            k = e + t
            for u, m in enumerate((-1, 0, 1)):
                j = e - m
                if k <= N and 0 <= j <= N:
                    A[k, j] += sing[t] * sing[u] * uB[e]

    return scale * A[1:N, 1:N]


def assemble_diffusion(
    mesh: Mesh, beta: float, d=1.0, quad_order: int = DEFAULT_QUAD_ORDER, require_positive: bool = True
) -> np.ndarray:
    """Matrix ``A[i, j] = -(d D^beta phi_j, Dbar^beta phi_i)`` over interior hats.

    Dense and nonsymmetric in general. Constant ``d`` uses the exact Toeplitz
    form; otherwise per-element Gauss-Legendre of order ``quad_order`` with
    Gauss-Jacobi endpoint corrections. ``require_positive=False`` admits
    nonnegative pieces such as the indicator components of an affine
    decomposition.
    """
    _check_beta(beta)
    d = as_coefficient(d)
    if isinstance(d, Constant):
        if d.value <= 0.0 and require_positive:
            raise ValueError("diffusion coefficient must be positive")
        return _constant_diffusion(mesh, beta, d.value)
    _check_alignment(mesh, d, "diffusion coefficient")
    return _general_diffusion(mesh, beta, d, quad_order, require_positive)


# ---------------------------------------------------------------------------
# local (banded) terms
# ---------------------------------------------------------------------------


def _local_products(mesh: Mesh, c: Coefficient, quad_order: int):
    xg, wg = gauss_legendre01(quad_order)
    cv = _element_values(mesh, c, xg) * (wg * mesh.h)[None, :]
    left, right = 1.0 - xg, xg
    return (cv @ (left * left), cv @ (left * right), cv @ (right * right))


def assemble_reaction(mesh: Mesh, r=1.0, quad_order: int = DEFAULT_QUAD_ORDER) -> np.ndarray:
    """Weighted mass matrix ``(r phi_j, phi_i)``; tridiagonal and symmetric."""
    r = as_coefficient(r)
    _check_alignment(mesh, r, "reaction coefficient")
    ll, lr, rr = _local_products(mesh, r, quad_order)
    n = mesh.n_dofs
    # hat k (node k) is the right hat on element k-1 and the left hat on element k
    diag = rr[:-1] + ll[1:]
    off = lr[1:-1]
    A = np.zeros((n, n))
    idx = np.arange(n)
    A[idx, idx] = diag
    A[idx[:-1], idx[1:]] = off
    A[idx[1:], idx[:-1]] = off
    return A


def assemble_mass(mesh: Mesh) -> np.ndarray:
    """Standard hat-function mass matrix."""
    n, h = mesh.n_dofs, mesh.h
    return (
        np.diag(np.full(n, 2.0 * h / 3.0))
        + np.diag(np.full(n - 1, h / 6.0), 1)
        + np.diag(np.full(n - 1, h / 6.0), -1)
    )


def assemble_load(mesh: Mesh, f=1.0, quad_order: int = DEFAULT_QUAD_ORDER) -> np.ndarray:
    """Load vector ``(f, phi_j)``."""
    f = as_coefficient(f)
    _check_alignment(mesh, f, "source")
    xg, wg = gauss_legendre01(quad_order)
    fv = _element_values(mesh, f, xg) * (wg * mesh.h)[None, :]
    left_part = fv @ (1.0 - xg)
    right_part = fv @ xg
    return right_part[:-1] + left_part[1:]


def assemble_seminorm_gram(mesh: Mesh, beta: float) -> np.ndarray:
    """Gram matrix of ``|u|_beta^2 = ||D^beta u||^2_{L2(R)}`` on the hat basis.

    Uses ``(D^beta u, Dbar^beta u)_{(0,1)} = cos(pi beta) |u|_beta^2`` and the
    d = 1 diffusion matrix ``M`` (which carries a leading minus sign), so
    ``G = -(M + M^T) / (2 cos(pi beta))``. Positive definiteness is checked
    with a Cholesky factorization.
    """
    _check_beta(beta)
    M = assemble_diffusion(mesh, beta, 1.0)
    G = -(M + M.T) / (2.0 * math.cos(math.pi * beta))
    try:
        np.linalg.cholesky(G)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("semi-norm Gram matrix is not positive definite") from exc
    return G


# ---------------------------------------------------------------------------
# solvers
# ---------------------------------------------------------------------------


def solve_dense(A: np.ndarray, b: np.ndarray, check: bool = True) -> np.ndarray:
    """LU with partial pivoting; rejects tiny pivots and checks the residual."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] != b.shape[0]:
        raise ValueError("shape mismatch in linear system")
    lu, piv = sla.lu_factor(A, check_finite=True)
    norm = np.abs(A).max()
    if np.min(np.abs(np.diag(lu))) < 1e-14 * norm:
        raise np.linalg.LinAlgError("matrix is numerically singular")
    x = sla.lu_solve((lu, piv), b)
    if check:
        bn = np.linalg.norm(b)
        if bn > 0.0 and np.linalg.norm(A @ x - b) > 1e-10 * bn:
            raise np.linalg.LinAlgError("residual check failed")
    return x


def gmres_iterations(A: np.ndarray, b: np.ndarray, rtol: float = 1e-8, restart: int = 50) -> int:
    """Number of unpreconditioned restarted GMRES iterations to reach ``rtol``."""
    from scipy.sparse.linalg import gmres

    count = [0]

    def cb(_):
        count[0] += 1

    gmres(A, b, rtol=rtol, restart=restart, maxiter=10_000, callback=cb, callback_type="pr_norm")
    return count[0]


def assemble_system(mesh: Mesh, beta: float, d=1.0, r=0.0, f=1.0, quad_order: int = DEFAULT_QUAD_ORDER):
    """Stiffness matrix ``A1 + A2`` and load vector."""
    A = assemble_diffusion(mesh, beta, d, quad_order)
    r = as_coefficient(r)
    if not (isinstance(r, Constant) and r.value == 0.0):
        A = A + assemble_reaction(mesh, r, quad_order)
    return A, assemble_load(mesh, f, quad_order)


def fem_solve(mesh: Mesh, beta: float, d=1.0, r=0.0, f=1.0) -> PiecewiseLinearFn:
    A, b = assemble_system(mesh, beta, d, r, f)
    return PiecewiseLinearFn(mesh, solve_dense(A, b))


# ---------------------------------------------------------------------------
# errors
# ---------------------------------------------------------------------------


def _l2_error_closed_form(u_h: PiecewiseLinearFn, ref) -> float:
    # pointwise difference, so no cancellation; the first element is graded
    # geometrically toward the x^(s-1) singularity at 0
    mesh = u_h.mesh
    xg, wg = gauss_legendre01(DEFAULT_QUAD_ORDER)
    h = mesh.h
    x = mesh.nodes[1:-1, None] + h * xg[None, :]
    diff = ref(x) - u_h(x)
    total = float(np.sum(diff**2 * wg[None, :]) * h)
    hi = h
    for _ in range(60):
        lo = 0.5 * hi
        xs = lo + (hi - lo) * xg
        total += float(np.dot(wg, (ref(xs) - u_h(xs)) ** 2) * (hi - lo))
        hi = lo
    return math.sqrt(max(total, 0.0))


def _seminorm_error_closed_form(u_h: PiecewiseLinearFn, ref) -> float:
    """Exact-in-``u`` semi-norm error for a power-sum reference solution.

    With ``v = u_h`` and the cosine identity,
    ``cos(pi beta)|u - v|^2 = (Du, Dbar u) - (Du, Dbar v) - (Dv, Dbar u) + (Dv, Dbar v)``.
    Each pairing reduces to power-term integrals, Beta functions and values of
    ``J = Ibar^(2-s) u`` at the nodes.
    """
    mesh = u_h.mesh
    s = ref.s
    beta = 0.5 * s
    alpha = 1.0 - beta
    h = mesh.h
    v = u_h.interior_coeffs
    nodes = mesh.nodes

    # (Du, Dbar u) = -(f, u) with f = -D^s u
    t11 = -sum(
        ft.coefficient * ut.coefficient / (ft.exponent + ut.exponent + 1.0)
        for ft in ref.source_terms()
        for ut in ref.terms
    )

    # (Du, Dbar phi_k) = c sum_m b_m B(p_m+1, alpha+1) Delta^2[X^(p_m+alpha+1)](x_k)
    c = 1.0 / (h * gamma_fn(2.0 - beta))
    col = np.zeros(mesh.n_dofs)
    for dt in ref.derivative_terms(beta):
        p = dt.exponent
        bfn = gamma_fn(p + 1.0) * gamma_fn(alpha + 1.0) / gamma_fn(p + alpha + 2.0)
        col += dt.coefficient * bfn * second_difference_power(nodes[1:-1], h, p + alpha + 1.0)
    t12 = c * float(col @ v)

    # (Dv, Dbar u) = sum_k v_k (J_{k+1} - 2 J_k + J_{k-1}) / h
    J = np.zeros(mesh.n_elements + 1)
    for ut in ref.terms:
        J += right_integral_of_power(ut, 2.0 - s, nodes)
    t21 = float(v @ (J[2:] - 2.0 * J[1:-1] + J[:-2])) / h

    t22 = -float(v @ (assemble_diffusion(mesh, beta, 1.0) @ v))
    val = (t11 - t12 - t21 + t22) / math.cos(math.pi * beta)
    return math.sqrt(max(val, 0.0))


def fe_error(u_h: PiecewiseLinearFn, u_ref, norm: NormKind | str, beta: float | None = None, gram: np.ndarray | None = None) -> float:
    """Error of ``u_h`` against a discrete or closed-form reference.

    Discrete references must live on a nested finer mesh: ``u_h`` is
    prolonged and the difference is measured with the mass, semi-norm or
    combined Gram matrix of the reference mesh (``gram`` may be passed to
    reuse a precomputed matrix). Closed-form references (objects exposing
    ``terms``, ``s`` and ``source_terms``) are handled without interpolation.
    """
    norm = NormKind(norm) if not isinstance(norm, NormKind) else norm
    if isinstance(u_ref, PiecewiseLinearFn):
        fine = u_ref.mesh
        e = u_ref.interior_coeffs - u_h.prolong(fine).interior_coeffs
        if gram is None:
            if norm is NormKind.L2:
                gram = assemble_mass(fine)
            else:
                if beta is None:
                    raise ValueError("beta is required for the semi-norm")
                gram = assemble_seminorm_gram(fine, beta)
                if norm is NormKind.FULL:
                    gram = gram + assemble_mass(fine)
        return math.sqrt(max(float(e @ (gram @ e)), 0.0))
    l2 = _l2_error_closed_form(u_h, u_ref) if norm is not NormKind.SEMINORM else 0.0
    if norm is NormKind.L2:
        return l2
    semi = _seminorm_error_closed_form(u_h, u_ref)
    if norm is NormKind.SEMINORM:
        return semi
    return math.sqrt(l2**2 + semi**2)


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------


def write_matrix_csv(path, A: np.ndarray):
    np.savetxt(path, np.atleast_2d(A), delimiter=",", fmt="%.17g")


def write_matrix_market(path, A: np.ndarray):
    from scipy.io import mmwrite

    mmwrite(str(path), np.atleast_2d(A), precision=17)
