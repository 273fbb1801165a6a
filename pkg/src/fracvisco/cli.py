"""Command line front end for the convergence studies.

Exit codes: 0 success, 1 configuration error, 2 solver failure,
3 check failure (--check requested and a target was missed).
"""

from __future__ import annotations

import argparse
import json
import sys

from .linalg import CgError
from .solver import SolverError
from .studies import ConfigError, StudyConfig, run_study

_FLAG_TO_FIELD = {
    "example": "example",
    "alpha": "alpha",
    "T": "t_final",
    "degree": "degree",
    "h_list": "h_list",
    "dt_list": "dt_list",
    "rho": "rho",
    "lambda_hat": "lambda_hat",
    "mu_hat": "mu_hat",
    "cg_tol": "cg_tol",
    "cg_maxiter": "cg_max_iter",
    "jacobi": "jacobi",
    "mode": "mode",
    "out": "out",
    "precision": "precision",
    "plot": "plot",
    "check": "check",
    "dump_steps": "dump_steps",
    "dump_mesh": "dump_mesh",
}

_CONFIG_KEYS = set(_FLAG_TO_FIELD.values())


def _int_list(text: str) -> tuple:
    try:
        return tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma separated integers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="fracvisco",
        description="Convergence studies for the fractional viscoelasticity solver.")
    p.add_argument("--example", choices=("example1", "example2"), default=None,
                   help="manufactured solution (default example1)")
    p.add_argument("--alpha", type=float, default=None, help="fractional order in (0, 1)")
    p.add_argument("--T", type=float, default=None, help="final time (default 1.0)")
    p.add_argument("--degree", type=int, choices=(1, 2), default=None,
                   help="polynomial degree of the elements")
    p.add_argument("--h-list", type=_int_list, default=None, metavar="M1,M2,...",
                   help="inverse mesh sizes, each m meaning an m-by-m grid (h = 1/m)")
    p.add_argument("--dt-list", type=_int_list, default=None, metavar="N1,N2,...",
                   help="inverse step sizes, each n meaning dt = T/n")
    p.add_argument("--rho", type=float, default=None, help="mass density (default 1.0)")
    p.add_argument("--lambda-hat", type=float, default=None,
                   help="first coefficient of the rescaled elasticity tensor (default 0.0)")
    p.add_argument("--mu-hat", type=float, default=None,
                   help="second coefficient of the rescaled elasticity tensor (default 0.5)")
    p.add_argument("--cg-tol", type=float, default=None,
                   help="relative CG tolerance (default 1e-10)")
    p.add_argument("--cg-maxiter", type=int, default=None,
                   help="CG iteration cap per solve (default 5000)")
    p.add_argument("--jacobi", action="store_true", default=None,
                   help="precondition CG with the matrix diagonal")
    p.add_argument("--mode", choices=("table", "rates", "diagonal", "single"),
                   default=None, help="study layout (default table)")
    p.add_argument("--out", default=None, metavar="PREFIX",
                   help="output path prefix for CSV/figure files (default 'study')")
    p.add_argument("--precision", type=int, default=None,
                   help="significant digits in emitted errors (default 4)")
    p.add_argument("--plot", action=argparse.BooleanOptionalAction, default=None,
                   help="render a log-log figure next to the CSV (default on)")
    p.add_argument("--check", action="store_true", default=None,
                   help="verify observed orders against targets; exit 3 on miss")
    p.add_argument("--config", default=None, metavar="FILE",
                   help="JSON file with configuration keys; flags override it")
    p.add_argument("--dump-steps", default=None, metavar="FILE",
                   help="write the full trajectory (single mode only)")
    p.add_argument("--dump-mesh", default=None, metavar="FILE",
                   help="write the coarsest mesh as plain text")
    return p


def parse_config(argv) -> StudyConfig:
    """Merge defaults, an optional JSON config file, and flags (in that order)."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse already printed a message; translate to ConfigError for
        # callers that want the exit-code contract without SystemExit
        if exc.code not in (0, None):
            raise ConfigError("invalid command line") from exc
        raise

    merged: dict = {}
    if args.config is not None:
        try:
            with open(args.config) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = set(data) - _CONFIG_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}; "
                              f"valid keys: {sorted(_CONFIG_KEYS)}")
        merged.update(data)
        for key in ("h_list", "dt_list"):
            if key in merged and not isinstance(merged[key], (list, tuple)):
                raise ConfigError(f"config key {key} must be a list of integers")

    for flag, fieldname in _FLAG_TO_FIELD.items():
        value = getattr(args, flag)
        if value is not None:
            merged[fieldname] = value

    for key in ("h_list", "dt_list"):
        if key in merged:
            merged[key] = tuple(merged[key])

    try:
        return StudyConfig(**merged)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def main(argv=None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    try:
        config = parse_config(argv)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except SystemExit:
        return 0

    try:
        result = run_study(config)
    except (SolverError, CgError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 2

    for path in result.files:
        print(f"wrote {path}")
    for msg in result.check_messages:
        print(msg)
    if config.check and not result.check_ok:
        print("check failed", file=sys.stderr)
        return 3
    return 0


def console() -> None:
    sys.exit(main())
