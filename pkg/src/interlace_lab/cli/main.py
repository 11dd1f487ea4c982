"""Command line entry point: ``interlace-lab``."""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np
from scipy.linalg import LinAlgError

from ..green_gauge.oracle import fourier_green_d3, watson_closed_form
from ..green_gauge.potential import EquilibriumError
from ..green_gauge.quadrature import GreenQuadratureError, green_values
from ..linalg import SolverError
from .config import ConfigError, parse_config, validate
from .runner import run

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3

NUMERICAL_ERRORS = (EquilibriumError, GreenQuadratureError, SolverError, LinAlgError, OverflowError, FloatingPointError, RuntimeError)


def _apply_overrides(cfg, args):
    raw = cfg.to_dict()
    if args.out is not None:
        raw["output_dir"] = args.out
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.threads is not None:
        raw["threads"] = args.threads
    return validate(raw)


def _cmd_run(args) -> int:
    cfg = _apply_overrides(parse_config(args.config), args)
    manifest = run(cfg)
    print(json.dumps({"output_dir": cfg["output_dir"], "files": manifest.files, "summary": manifest.summary}, sort_keys=True))
    return EXIT_OK


def _cmd_validate(args) -> int:
    cfg = parse_config(args.config)
    print(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_oracle(args) -> int:
    r = args.extent
    ax = np.arange(r + 1)
    offs = np.stack(np.meshgrid(*([ax] * args.d), indexing="ij"), axis=-1).reshape(-1, args.d)
    offs = offs[np.all(np.diff(offs, axis=1) <= 0, axis=1)]   # canonical: descending coordinates
    vals, errs = green_values(offs, d=args.d, tol=args.tol)
    records = []
    for x, v, e in zip(offs, vals, errs):
        rec = {"x": [int(c) for c in x], "g": float(v), "error_estimate": float(e)}
        if args.d == 3 and args.check:
            rec["fourier"] = fourier_green_d3(tuple(int(c) for c in x), tol=min(args.tol, 1e-9))
        records.append(rec)
    body = {"d": args.d, "tol": args.tol, "values": records}
    if args.d == 3:
        body["closed_form_origin"] = watson_closed_form()
    text = json.dumps(body, indent=2)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="interlace-lab", description="Random interlacement occupation-time laboratory")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment from a JSON config")
    p_run.add_argument("config")
    p_run.add_argument("--out", help="output directory (overrides output_dir)")
    p_run.add_argument("--seed", type=int, help="master seed (overrides seed)")
    p_run.add_argument("--threads", type=int, help="worker threads (overrides threads)")
    p_run.set_defaults(func=_cmd_run)

    p_val = sub.add_parser("validate", help="validate a config and print it with defaults filled")
    p_val.add_argument("config")
    p_val.set_defaults(func=_cmd_validate)

    p_or = sub.add_parser("oracle", help="regenerate reference values")
    or_sub = p_or.add_subparsers(dest="oracle", required=True)
    p_green = or_sub.add_parser("green", help="lattice Green function values g(0, x)")
    p_green.add_argument("--d", type=int, default=3)
    p_green.add_argument("--tol", type=float, default=1e-10)
    p_green.add_argument("--extent", type=int, default=3, help="largest coordinate of the tabulated offsets")
    p_green.add_argument("--check", action="store_true", help="add the independent Fourier value (d = 3)")
    p_green.add_argument("--out", help="write JSON here instead of stdout")
    p_green.set_defaults(func=_cmd_oracle)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_VALIDATION
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure in {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
