"""Experiment drivers behind the command-line front end.

Every runner takes a :class:`RunConfig` and returns an
:class:`ExperimentReport` holding CSV tables and a JSON-able summary. Report
tables carry a short hash of the configuration on every row.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .coefficients import Constant, polynomial
from .constants import coefficient_stats, constant_set, predicted_nwidth_rate
from .fem import NormKind, assemble_mass, assemble_seminorm_gram, build_mesh, fe_error, fem_solve
from .fractional_ops import FracOrder
from .rbm import (
    build_affine_problem,
    gauss_legendre_grid,
    greedy_train,
    random_parameters,
    speedup_bench,
)
from .solutions import ex1_solution, ex2_solution
from .spectra import condition_study, ex3_coefficients, ex4_coefficients

COMMANDS = ("convergence", "constants", "conditioning", "greedy", "speedup", "verify")
EXAMPLES = ("ex1", "ex2", "ex3", "ex4", "greedy-case-1", "constant-diffusion")
DEFAULT_S = (1.8, 1.5, 1.2)
REFERENCE_LEVEL = 12

# training points per dimension, truth mesh, greedy cap
PRESETS = {
    "ci": {"points": {"greedy-case-1": 4, "constant-diffusion": 32}, "n_elements": 2**7, "n_max": 12},
    "full": {"points": {"greedy-case-1": 10, "constant-diffusion": 10}, "n_elements": 2**9, "n_max": 40},
}


# reference values keyed by s; checks are only made for listed s
TABLE_TARGETS = {
    "gamma": ({1.8: 2.80, 1.5: 1.83, 1.2: 0.24}, 5e-3),
    "alpha": ({1.8: 0.2999, 1.5: 0.1631, 1.2: 0.0188}, 5e-5),
    "ex3_c": ({1.8: 1.59, 1.5: 0.54, 1.2: -0.81}, 5e-3),
    "ex3_alpha_tilde": ({1.8: 0.7969, 1.5: 0.2722, 1.2: -0.4058}, 5e-5),
    "ex4_c": ({1.8: 0.59, 1.5: -0.46, 1.2: -1.81}, 5e-3),
    "ex4_alpha_tilde": ({1.8: 0.2969, 1.5: -0.2278, 1.2: -0.9058}, 5e-5),
}
# observed semi-norm rates for the closed-form examples
SEMINORM_TARGETS = {1.8: 0.4, 1.5: 0.25, 1.2: 0.1}
GREEDY_TARGETS = {
    "constant-diffusion": ({1.8: 4.8, 1.5: 4.2, 1.2: 3.3}, 0.3),
    "greedy-case-1": ({1.8: 0.96, 1.5: 0.76, 1.2: 0.65}, 0.4),
}
SPEEDUP_FLOORS = {"solve": 10.0, "assemble_solve": 100.0}


def _lookup(table: dict, s: float):
    for key, v in table.items():
        if abs(key - s) < 1e-12:
            return v
    return None


@dataclass
class RunConfig:
    command: str = "verify"
    s_values: list[float] = field(default_factory=lambda: list(DEFAULT_S))
    example: str | None = None
    levels: list[int] = field(default_factory=lambda: list(range(4, 10)))
    preset: str = "ci"
    mode: str = "weak"
    tol: float = 1e-6
    n_max: int | None = None
    out: str | None = None
    variant: str = "alpha"

    def validate(self) -> "RunConfig":
        if self.command not in COMMANDS:
            raise ValueError(f"unknown command {self.command!r}")
        if self.example is not None and self.example not in EXAMPLES:
            raise ValueError(f"unknown example {self.example!r}")
        if self.preset not in PRESETS:
            raise ValueError(f"unknown preset {self.preset!r}")
        if self.mode not in ("weak", "strong"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.variant not in ("alpha", "alpha-tilde", "gamma"):
            raise ValueError(f"unknown variant {self.variant!r}")
        if not self.s_values:
            raise ValueError("at least one s value is required")
        for s in self.s_values:
            FracOrder(s)
        if not self.levels or min(self.levels) < 1 or sorted(self.levels) != list(self.levels):
            raise ValueError("levels must be ascending positive exponents")
        if self.tol <= 0.0:
            raise ValueError("tol must be positive")
        if self.n_max is not None and self.n_max < 1:
            raise ValueError("n_max must be >= 1")
        return self

    @property
    def effective_n_max(self) -> int:
        return self.n_max if self.n_max is not None else PRESETS[self.preset]["n_max"]

    def hash(self) -> str:
        payload = {k: v for k, v in asdict(self).items() if k != "out"}
        text = json.dumps(payload, sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()[:12]


@dataclass
class Table:
    header: list[str]
    rows: list[list] = field(default_factory=list)


def _fmt(v, digits: int = 6) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.{digits}g}"
    return "" if v is None else str(v)


@dataclass
class ExperimentReport:
    command: str
    config: RunConfig
    tables: dict[str, Table] = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    checks: dict[str, bool] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def table_csv(self, name: str) -> str:
        t = self.tables[name]
        h = self.config.hash()
        lines = [",".join([*t.header, "config_hash"])]
        for row in t.rows:
            lines.append(",".join([*(_fmt(v) for v in row), h]))
        return "\n".join(lines) + "\n"

    def write(self, out_dir) -> Path:
        d = Path(out_dir)
        d.mkdir(parents=True, exist_ok=True)
        for name in self.tables:
            (d / f"{self.command}_{name}.csv").write_text(self.table_csv(name))
        summary = {
            "command": self.command,
            "config": {k: v for k, v in asdict(self.config).items() if k != "out"},
            "config_hash": self.config.hash(),
            "summary": self.summary,
            "checks": self.checks,
            "passed": self.passed,
        }
        (d / f"{self.command}_summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True, default=float) + "\n")
        return d


# ---------------------------------------------------------------------------
# examples
# ---------------------------------------------------------------------------


def example_data(name: str):
    """``(d, r, f)`` for the FEM examples."""
    if name == "ex1":
        return Constant(1.0), Constant(0.0), Constant(1.0)
    if name == "ex2":
        return Constant(1.0), Constant(0.0), polynomial([0.0, 1.0, -1.0])
    if name == "ex3":
        d, r = ex3_coefficients()
        return d, r, Constant(1.0)
    if name == "ex4":
        d, r = ex4_coefficients()
        return d, r, Constant(1.0)
    raise ValueError(f"unknown FEM example {name!r}")


def fitted_slope(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


# ---------------------------------------------------------------------------
# runners
# ---------------------------------------------------------------------------


def run_constants(cfg: RunConfig) -> ExperimentReport:
    rep = ExperimentReport("constants", cfg)
    t = Table(["example", "s", "gamma", "c", "alpha", "alpha_tilde", "continuity", "coercive"])
    for ex in ("ex3", "ex4"):
        d, r, _ = example_data(ex)
        ds, rs = coefficient_stats(d), coefficient_stats(r)
        for s in cfg.s_values:
            cs = constant_set(s, ds, rs)
            t.rows.append([ex, s, cs.gamma_sd, cs.c_sdr, cs.alpha_sd, cs.alpha_tilde, cs.continuity, cs.coercive])
            for key, value in (("gamma", cs.gamma_sd), ("alpha", cs.alpha_sd), (f"{ex}_c", cs.c_sdr), (f"{ex}_alpha_tilde", cs.alpha_tilde)):
                targets, tol = TABLE_TARGETS[key]
                ref = _lookup(targets, s)
                if ref is not None:
                    rep.checks[f"{ex}_s{s}_{key.removeprefix(ex + '_')}"] = abs(value - ref) <= tol
            rep.summary[f"{ex}_s{s}"] = {
                "gamma": cs.gamma_sd,
                "c": cs.c_sdr,
                "alpha": cs.alpha_sd,
                "alpha_tilde": cs.alpha_tilde,
                "coercive": cs.coercive,
            }
    rep.tables["table"] = t
    rates = Table(["s", "M_s", "predicted_rate"])
    for s in cfg.s_values:
        m, rate = predicted_nwidth_rate(s, 1.0)
        rates.rows.append([s, m, rate])
    rep.tables["nwidth"] = rates
    return rep


def convergence_errors(example: str, s: float, levels, reference_level: int = REFERENCE_LEVEL):
    """Semi-norm and L2 errors on meshes ``2**levels``."""
    beta = 0.5 * s
    d, r, f = example_data(example)
    out = []
    if example in ("ex1", "ex2"):
        ref = ex1_solution(s) if example == "ex1" else ex2_solution(s)
        for k in levels:
            u_h = fem_solve(build_mesh(2**k), beta, d, r, f)
            out.append((2**k, fe_error(u_h, ref, NormKind.SEMINORM), fe_error(u_h, ref, NormKind.L2)))
        return out
    fine = build_mesh(2**reference_level)
    u_ref = fem_solve(fine, beta, d, r, f)
    G = assemble_seminorm_gram(fine, beta)
    M = assemble_mass(fine)
    for k in levels:
        u_h = fem_solve(build_mesh(2**k), beta, d, r, f)
        out.append((2**k, fe_error(u_h, u_ref, NormKind.SEMINORM, gram=G), fe_error(u_h, u_ref, NormKind.L2, gram=M)))
    return out


def run_convergence(cfg: RunConfig) -> ExperimentReport:
    examples = [cfg.example] if cfg.example else ["ex1", "ex2", "ex3", "ex4"]
    for ex in examples:
        if ex not in ("ex1", "ex2", "ex3", "ex4"):
            raise ValueError(f"convergence needs ex1..ex4, got {ex!r}")
    rep = ExperimentReport("convergence", cfg)
    t = Table(["example", "s", "N", "err_seminorm", "err_L2", "rate_seminorm", "rate_L2"])
    fits = Table(["example", "s", "coercive", "fit_seminorm", "theory_seminorm", "fit_L2", "observed_L2"])
    for ex in examples:
        d, r, _ = example_data(ex)
        for s in cfg.s_values:
            coercive = constant_set(s, coefficient_stats(d), coefficient_stats(r)).coercive
            errs = convergence_errors(ex, s, cfg.levels)
            N = [e[0] for e in errs]
            es = [e[1] for e in errs]
            el = [e[2] for e in errs]
            for i, (n, a, b) in enumerate(errs):
                ra = math.log(es[i - 1] / a) / math.log(n / N[i - 1]) if i else None
                rb = math.log(el[i - 1] / b) / math.log(n / N[i - 1]) if i else None
                t.rows.append([ex, s, n, a, b, ra, rb])
            # the coarsest level is pre-asymptotic
            fs = -fitted_slope(N[1:], es[1:]) if len(N) > 2 else float("nan")
            fl = -fitted_slope(N[1:], el[1:]) if len(N) > 2 else float("nan")
            fits.rows.append([ex, s, coercive, fs, 0.5 * s - 0.5, fl, s - 0.5])
            if ex in ("ex1", "ex2"):
                ref = _lookup(SEMINORM_TARGETS, s)
                if ref is not None:
                    rep.checks[f"{ex}_s{s}_seminorm"] = abs(fs - ref) <= 0.1
                    rep.checks[f"{ex}_s{s}_L2"] = abs(fl - (s - 0.5)) <= 0.1
            else:
                rep.checks[f"{ex}_s{s}_seminorm"] = abs(fs - (0.5 * s - 0.5)) <= 0.15
                rep.checks[f"{ex}_s{s}_monotone"] = bool(np.all(np.diff(es[1:]) < 0))
            rep.summary[f"{ex}_s{s}"] = {
                "fit_seminorm": fs,
                "fit_L2": fl,
                "coercive": coercive,
                "monotone": bool(np.all(np.diff(es) < 0)),
            }
    rep.tables["errors"] = t
    rep.tables["rates"] = fits
    return rep


def run_conditioning(cfg: RunConfig) -> ExperimentReport:
    rep = ExperimentReport("conditioning", cfg)
    t = Table(["family", "s", "N", "sigma_max", "sigma_min", "kappa"])
    fits = Table(["family", "s", "slope_sigma_max", "expected_max", "slope_sigma_min", "expected_min"])
    levels = [2**k for k in cfg.levels]
    for fam in ("A1-constant", "A2-Ex3", "A3-Ex4"):
        for s in cfg.s_values:
            sr = condition_study(fam, s, levels)
            for r in sr.records:
                t.rows.append([fam, s, r.n_elements, r.sigma_max, r.sigma_min, r.kappa])
            fits.rows.append([fam, s, sr.slope_max, s - 1.0, sr.slope_min, -1.0])
            rep.summary[f"{fam}_s{s}"] = {"slope_max": sr.slope_max, "slope_min": sr.slope_min}
            rep.checks[f"{fam}_s{s}_sigma_max"] = abs(sr.slope_max - (s - 1.0)) <= 0.15
            rep.checks[f"{fam}_s{s}_sigma_min"] = abs(sr.slope_min + 1.0) <= 0.15
    rep.tables["spectra"] = t
    rep.tables["slopes"] = fits
    return rep


def greedy_problem(example: str, s: float, preset: str, variant: str = "alpha"):
    n = PRESETS[preset]["n_elements"]
    problem = build_affine_problem({"name": example, "s": s, "n_elements": n, "variant": variant})
    training = gauss_legendre_grid(problem.box, PRESETS[preset]["points"][example])
    return problem, training


def run_greedy(cfg: RunConfig) -> ExperimentReport:
    examples = [cfg.example] if cfg.example else ["constant-diffusion", "greedy-case-1"]
    for ex in examples:
        if ex not in ("constant-diffusion", "greedy-case-1"):
            raise ValueError(f"greedy needs constant-diffusion or greedy-case-1, got {ex!r}")
    rep = ExperimentReport("greedy", cfg)
    t = Table(["example", "s", "iteration", "basis_size", "selected_mu", "max_estimator", "max_true_error", "gap"])
    fits = Table(["example", "s", "n_final", "fitted_rate", "fitted_rate_true_error", "predicted_nwidth_rate"])
    for ex in examples:
        rates = []
        for s in cfg.s_values:
            problem, training = greedy_problem(ex, s, cfg.preset, cfg.variant)
            track = cfg.mode == "strong" or cfg.preset == "ci"
            t0 = time.perf_counter()
            model, trace = greedy_train(problem, training, cfg.mode, cfg.tol, cfg.effective_n_max, track_true_error=track)
            elapsed = time.perf_counter() - t0
            for r in trace.records:
                mu = "" if r.selected is None else " ".join(f"{x:.6g}" for x in r.selected)
                gap = None if not r.max_true_error else r.max_estimator / r.max_true_error
                t.rows.append([ex, s, r.iteration, r.basis_size, mu, r.max_estimator, r.max_true_error, gap])
            rate = trace.fitted_rate()
            rate_true = trace.fitted_rate(values="true") if track else float("nan")
            predicted = predicted_nwidth_rate(s, 1.0)[1] if ex == "constant-diffusion" else None
            fits.rows.append([ex, s, model.n, rate, rate_true, predicted])
            rates.append(rate)
            targets, rel = GREEDY_TARGETS[ex]
            ref = _lookup(targets, s)
            if ref is not None:
                rep.checks[f"{ex}_s{s}_rate"] = abs(rate - ref) <= rel * ref
            rep.summary[f"{ex}_s{s}"] = {
                "fitted_rate": rate,
                "fitted_rate_true_error": rate_true,
                "basis_size": model.n,
                "max_estimators": trace.max_estimators.tolist(),
                "training_points": int(len(training)),
                "seconds": elapsed,
            }
        # rates must fall as s decreases
        order = np.argsort(cfg.s_values)[::-1]
        decreasing = bool(np.all(np.diff(np.asarray(rates)[order]) < 0)) if len(rates) > 1 else True
        rep.summary[f"{ex}_rates_decreasing"] = decreasing
        rep.checks[f"{ex}_rates_decreasing"] = decreasing
    rep.tables["trace"] = t
    rep.tables["rates"] = fits
    return rep


def run_speedup(cfg: RunConfig, n_elements: int = 2**8, n_basis: int = 11, n_params: int = 20) -> ExperimentReport:
    rep = ExperimentReport("speedup", cfg)
    s = cfg.s_values[0] if len(cfg.s_values) == 1 else 1.5
    t0 = time.perf_counter()
    problem = build_affine_problem({"name": "greedy-case-1", "s": s, "n_elements": n_elements, "variant": cfg.variant})
    # force the offline assembly of every affine component and the Gram factor
    _ = (problem.operator_matrices, problem.load_vectors, problem.gram_factor)
    t_assembly = time.perf_counter() - t0
    training = gauss_legendre_grid(problem.box, PRESETS[cfg.preset]["points"]["greedy-case-1"])
    t0 = time.perf_counter()
    model, _ = greedy_train(problem, training, "weak", 1e-300, n_basis)
    t_select = time.perf_counter() - t0
    bench = speedup_bench(model, problem, random_parameters(problem.box, n_params, seed=7), repetitions=10)
    t = Table(["quantity", "FEM", "RBM", "ratio"])
    t.rows.append(["DoF", bench.dofs_fem, bench.dofs_rb, bench.dof_ratio])
    t.rows.append(["assemble+solve [s]", bench.t_assemble_solve, bench.t_rb, bench.ratio_total])
    t.rows.append(["solve [s]", bench.t_solve, bench.t_rb, bench.ratio_solve])
    rep.tables["online"] = t
    off = Table(["quantity", "value"])
    off.rows.append(["affine_terms", bench.affine_terms])
    off.rows.append(["assembly [s]", t_assembly])
    off.rows.append(["rb_selection [s]", t_select])
    rep.tables["offline"] = off
    rep.summary.update(
        {
            "s": s,
            "dofs_fem": bench.dofs_fem,
            "dofs_rb": bench.dofs_rb,
            "affine_terms": bench.affine_terms,
            "ratio_solve": bench.ratio_solve,
            "ratio_total": bench.ratio_total,
        }
    )
    rep.checks["dof_ratio"] = bench.dofs_fem == n_elements - 1 and bench.dofs_rb == n_basis
    rep.checks["solve_speedup"] = bench.ratio_solve >= SPEEDUP_FLOORS["solve"]
    rep.checks["assemble_solve_speedup"] = bench.ratio_total >= SPEEDUP_FLOORS["assemble_solve"]
    return rep


def run_verify(cfg: RunConfig) -> ExperimentReport:
    from .verification import run_suites

    rep = ExperimentReport("verify", cfg)
    t = Table(["suite", "measured", "threshold", "passed"])
    for name, measured, threshold, ok in run_suites():
        t.rows.append([name, measured, threshold, ok])
        rep.checks[name] = bool(ok)
        rep.summary[name] = {"measured": measured, "threshold": threshold}
    rep.tables["suites"] = t
    return rep


RUNNERS = {
    "convergence": run_convergence,
    "constants": run_constants,
    "conditioning": run_conditioning,
    "greedy": run_greedy,
    "speedup": run_speedup,
    "verify": run_verify,
}


def run(cfg: RunConfig) -> ExperimentReport:
    cfg.validate()
    return RUNNERS[cfg.command](cfg)

