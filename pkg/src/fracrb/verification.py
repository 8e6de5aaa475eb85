"""Cross-module invariant suites with measured residuals.

Each suite returns ``(name, measured, threshold, passed)``. Random inputs are
drawn from fixed seeds so a run is reproducible.
"""

from __future__ import annotations

import math

import numpy as np

from .fem import PiecewiseLinearFn, assemble_seminorm_gram, build_mesh
from .fractional_ops import (
    PowerTerm,
    frac_deriv_pl,
    frac_deriv_power,
    frac_integral_power,
    gamma_fn,
    gauss_legendre01,
    slope_jumps,
)
from .rbm import (
    build_affine_problem,
    gauss_legendre_grid,
    greedy_train,
    random_parameters,
    rb_solve,
    residual_dual_norm,
    residual_dual_norm_direct,
)

SEED = 20240601


def _rel(a: float, b: float) -> float:
    return float(abs(a - b) / max(abs(b), 1e-300))


def semigroup_suite(trials: int = 200):
    rng = np.random.default_rng(SEED)
    worst = 0.0
    for _ in range(trials):
        t = PowerTerm(rng.uniform(-2, 2), rng.uniform(-0.45, 3.0))
        s1, s2 = rng.uniform(0.05, 2.0, size=2)
        a = frac_integral_power(frac_integral_power(t, s1), s2)
        b = frac_integral_power(t, s1 + s2)
        worst = max(worst, _rel(a.coefficient, b.coefficient), abs(a.exponent - b.exponent))
    return "semigroup", worst, 1e-12, worst <= 1e-12


def left_inverse_suite(trials: int = 200):
    rng = np.random.default_rng(SEED + 1)
    worst = 0.0
    for _ in range(trials):
        t = PowerTerm(rng.uniform(-2, 2), rng.uniform(-0.45, 3.0))
        beta = rng.uniform(0.51, 0.99)
        back = frac_deriv_power(frac_integral_power(t, beta), beta)
        worst = max(worst, _rel(back.coefficient, t.coefficient), abs(back.exponent - t.exponent))
    return "left-inverse", worst, 1e-12, worst <= 1e-12


def _truncated_power_sum(nodes, jumps, x, power, side):
    d = (x[:, None] - nodes[None, :]) if side == "left" else (nodes[None, :] - x[:, None])
    return (np.where(d > 0.0, d, 0.0) ** power) @ jumps


def adjointness_suite(trials: int = 20):
    """``int I^sigma phi psi = int phi Ibar^sigma psi`` for random hat combinations.

    A zero-trace piecewise-linear ``phi`` equals ``sum_k j_k (x - x_k)_+`` and
    ``sum_k j_k (x_k - x)_+`` (slope jumps ``j_k``), so both fractional
    integrals are truncated-power sums; the outer integral is a composite
    Gauss rule on a subdivided mesh.
    """
    rng = np.random.default_rng(SEED + 2)
    xg, wg = gauss_legendre01(20)
    worst = 0.0
    for _ in range(trials):
        n = int(rng.integers(2, 9))
        nodes = np.arange(n + 1) / n
        phi = np.concatenate(([0.0], rng.normal(size=n - 1), [0.0]))
        psi = np.concatenate(([0.0], rng.normal(size=n - 1), [0.0]))
        jp, jq = slope_jumps(nodes, phi), slope_jumps(nodes, psi)
        sigma = rng.uniform(0.1, 1.5)
        cells = np.arange(8 * n + 1) / (8 * n)
        x = (cells[:-1, None] + np.diff(cells)[:, None] * xg[None, :]).ravel()
        w = (np.diff(cells)[:, None] * wg[None, :]).ravel()
        c = 1.0 / gamma_fn(sigma + 2.0)
        i_phi = c * _truncated_power_sum(nodes, jp, x, sigma + 1.0, "left")
        ib_psi = c * _truncated_power_sum(nodes, jq, x, sigma + 1.0, "right")
        phi_x = np.interp(x, nodes, phi)
        psi_x = np.interp(x, nodes, psi)
        lhs = float(np.dot(w, i_phi * psi_x))
        rhs = float(np.dot(w, phi_x * ib_psi))
        worst = max(worst, abs(lhs - rhs) / max(abs(lhs), 1.0))
    return "adjointness", worst, 1e-8, worst <= 1e-8


def causality_suite(trials: int = 50):
    rng = np.random.default_rng(SEED + 3)
    worst = 0.0
    for _ in range(trials):
        n = int(rng.integers(4, 33))
        mesh = build_mesh(n)
        k = int(rng.integers(1, n))
        c = np.zeros(mesh.n_dofs)
        c[k - 1 :] = rng.normal(size=mesh.n_dofs - k + 1)
        f = PiecewiseLinearFn(mesh, c)
        start = mesh.nodes[k - 1]
        x = rng.uniform(0.0, start, size=10) if start > 0 else np.array([0.0])
        vals = frac_deriv_pl(f, "left", rng.uniform(0.55, 0.95), x)
        worst = max(worst, float(np.max(np.abs(vals))))
    return "causality", worst, 0.0, worst == 0.0


def mirror_suite(trials: int = 50):
    rng = np.random.default_rng(SEED + 4)
    worst = 0.0
    for _ in range(trials):
        n = int(rng.integers(2, 33))
        mesh = build_mesh(n)
        c = rng.normal(size=mesh.n_dofs)
        f = PiecewiseLinearFn(mesh, c)
        g = PiecewiseLinearFn(mesh, c[::-1].copy())
        beta = rng.uniform(0.55, 0.95)
        x = rng.uniform(0.0, 1.0, size=10)
        a = frac_deriv_pl(f, "left", beta, x)
        b = frac_deriv_pl(g, "right", beta, 1.0 - x)
        worst = max(worst, float(np.max(np.abs(a - b)) / max(np.max(np.abs(a)), 1.0)))
    return "mirror", worst, 1e-12, worst <= 1e-12


def truncated_line_seminorm(nodes, values, beta: float, T: float = 50.0) -> float:
    """``||D^beta phi||^2`` over ``(0, T)`` by quadrature plus the far-field tail.

    For ``x > 1`` the derivative of a zero-trace piecewise-linear function is
    ``sum_k j_k (x - x_k)^(1-beta) / Gamma(2-beta)``; the first two moments of
    the jumps vanish, so it decays like
    ``(1-beta)(-beta)/2 * sum_k j_k x_k^2 * x^(-1-beta) / Gamma(2-beta)``,
    whose square is integrated in closed form from ``T`` to infinity.
    """
    nodes = np.asarray(nodes, float)
    jumps = slope_jumps(nodes, np.asarray(values, float))
    xg, wg = gauss_legendre01(30)
    # fine panels on (0,1) graded toward each node, geometric panels on (1,T)
    inner = np.unique(np.concatenate([nodes, *(nodes[:-1, None] + np.diff(nodes)[:, None] * np.linspace(0, 1, 9)[None, :])]))
    outer = np.geomspace(1.0, T, 60)
    edges = np.unique(np.concatenate([inner, outer]))
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        x = a + (b - a) * xg
        d = frac_deriv_pl((nodes, np.asarray(values, float)), "left", beta, x)
        total += float(np.dot(wg, d**2)) * (b - a)
    a2 = 0.5 * (1.0 - beta) * (-beta) * float(jumps @ nodes**2) / gamma_fn(2.0 - beta)
    tail = a2**2 * T ** (-1.0 - 2.0 * beta) / (1.0 + 2.0 * beta)
    return total + tail


def cosine_identity_suite(beta: float = 0.75):
    worst = 0.0
    for n in (2, 4, 8):
        mesh = build_mesh(n)
        G = assemble_seminorm_gram(mesh, beta)
        for k in range(mesh.n_dofs):
            u = np.zeros(mesh.n_dofs)
            u[k] = 1.0
            values = np.concatenate(([0.0], u, [0.0]))
            oracle = truncated_line_seminorm(mesh.nodes, values, beta)
            worst = max(worst, _rel(float(u @ G @ u), oracle))
    return "cosine-identity", worst, 1e-2, worst <= 1e-2


def _rb_fixture(s: float = 1.5, n_elements: int = 2**6):
    problem = build_affine_problem({"name": "greedy-case-1", "s": s, "n_elements": n_elements})
    model, _ = greedy_train(problem, gauss_legendre_grid(problem.box, 3), "weak", 1e-10, 10)
    return problem, model


def affine_consistency_suite(problem, trials: int = 10):
    worst = 0.0
    for mu in random_parameters(problem.box, trials, SEED + 5):
        A, f = problem.assemble_direct(mu)
        worst = max(worst, float(np.max(np.abs(problem.operator(mu) - A)) / np.max(np.abs(A))))
        worst = max(worst, float(np.max(np.abs(problem.rhs(mu) - f)) / np.max(np.abs(f))))
    return "affine-consistency", worst, 1e-12, worst <= 1e-12


def orthonormality_suite(problem, model):
    V = model.basis
    worst = float(np.max(np.abs(V.T @ problem.gram @ V - np.eye(model.n))))
    return "orthonormality", worst, 1e-10, worst <= 1e-10


def residual_norm_suite(problem, model, trials: int = 20):
    worst = 0.0
    for n in range(0, model.n + 1, 2):
        m = model.truncated(n)
        for mu in random_parameters(problem.box, trials, SEED + 6 + n):
            c = rb_solve(m, mu).coefficients if n else np.zeros(0)
            online = residual_dual_norm(m, mu, c)
            blocks = residual_dual_norm(m, mu, c, method="blocks")
            direct = residual_dual_norm_direct(problem, mu, m.basis @ c)
            worst = max(worst, _rel(online, direct), _rel(blocks, direct) if direct > 1e-7 * max(online, 1e-300) else 0.0)
    return "offline-online-residual", worst, 1e-6, worst <= 1e-6


def certified_bound_suite(problem, model, trials: int = 100):
    """Minimum over basis sizes and random parameters of ``Delta_n + 1e-8 - error``."""
    L = problem.gram_factor
    margin = math.inf
    for n in range(1, model.n + 1):
        m = model.truncated(n)
        for mu in random_parameters(problem.box, trials, SEED + 100 + n):
            sol = rb_solve(m, mu)
            err = float(np.linalg.norm(L.T @ (problem.truth_solve(mu).interior_coeffs - m.basis @ sol.coefficients)))
            margin = min(margin, sol.delta + 1e-8 - err)
    return "certified-bound", margin, 0.0, margin >= 0.0


def run_suites():
    results = [
        semigroup_suite(),
        left_inverse_suite(),
        adjointness_suite(),
        causality_suite(),
        mirror_suite(),
        cosine_identity_suite(),
    ]
    problem, model = _rb_fixture()
    results += [
        affine_consistency_suite(problem),
        orthonormality_suite(problem, model),
        residual_norm_suite(problem, model),
        certified_bound_suite(problem, model),
    ]
    return results
