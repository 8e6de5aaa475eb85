"""Command-line front end: ``fracrb --command greedy --example greedy-case-1``.

Options may also come from a plain-text ``key=value`` file given with
``--config``; keys mirror the long flag names (``s`` may hold a
comma-separated list) and flags given on the command line win.

Exit codes: 0 success, 2 acceptance failure, 3 configuration error,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .experiments import COMMANDS, EXAMPLES, PRESETS, RunConfig, run
from .rbm import ConfigError, StagnationError

EXIT_OK = 0
EXIT_ACCEPTANCE = 2
EXIT_CONFIG = 3
EXIT_NUMERICAL = 4


def _levels(text: str) -> list[int]:
    """``4..9`` or ``4,5,6``: exponents of two."""
    text = text.strip()
    if ".." in text:
        lo, hi = text.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(t) for t in text.split(",") if t.strip()]


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad flags, which would read as an acceptance failure
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fracrb", description=__doc__.splitlines()[0])
    p.add_argument("--command", choices=COMMANDS)
    p.add_argument("--example", choices=EXAMPLES)
    p.add_argument("--s", action="append", type=float, dest="s", help="fractional order; repeatable")
    p.add_argument("--levels", help="mesh exponents, e.g. 4..9 or 4,6,8")
    p.add_argument("--preset", choices=tuple(PRESETS))
    p.add_argument("--mode", choices=("weak", "strong"))
    p.add_argument("--tol", type=float)
    p.add_argument("--n-max", type=int, dest="n_max")
    p.add_argument("--out", help="output directory")
    p.add_argument("--variant", choices=("alpha", "alpha-tilde", "gamma"))
    p.add_argument("--config", help="key=value file; command-line flags override it")
    return p


def read_config_file(path) -> dict:
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key, value = (t.strip() for t in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _convert(key: str, value):
    if value is None:
        return None
    if key == "s":
        if isinstance(value, str):
            return [float(t) for t in value.split(",") if t.strip()]
        return [float(v) for v in value]
    if key == "levels":
        return _levels(value) if isinstance(value, str) else list(value)
    if key == "tol":
        return float(value)
    if key == "n_max":
        return int(value)
    return value


KEYS = ("command", "example", "s", "levels", "preset", "mode", "tol", "n_max", "out", "variant")


def make_config(args: argparse.Namespace) -> RunConfig:
    merged: dict = {}
    if args.config:
        try:
            merged.update(read_config_file(args.config))
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        unknown = set(merged) - set(KEYS)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    for key in KEYS:
        v = getattr(args, key)
        if v is not None:
            merged[key] = v
    try:
        values = {k: _convert(k, v) for k, v in merged.items()}
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if "command" not in values:
        raise ConfigError("--command is required")
    cfg = RunConfig(command=values.pop("command"))
    if "s" in values:
        cfg.s_values = values.pop("s")
    for k, v in values.items():
        setattr(cfg, k, v)
    try:
        cfg.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if cfg.out is not None:
        out = Path(cfg.out)
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"output directory not writable: {exc}") from exc
    return cfg


def _print_report(rep) -> None:
    for name in rep.tables:
        print(f"== {rep.command}: {name}")
        print(rep.table_csv(name), end="")
    for name, ok in rep.checks.items():
        print(f"{'PASS' if ok else 'FAIL'} {name}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = make_config(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        rep = run(cfg)
    except (ConfigError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (np.linalg.LinAlgError, FloatingPointError, ArithmeticError, StagnationError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    if cfg.out is not None:
        rep.write(cfg.out)
    _print_report(rep)
    return EXIT_OK if rep.passed else EXIT_ACCEPTANCE


if __name__ == "__main__":
    sys.exit(main())
