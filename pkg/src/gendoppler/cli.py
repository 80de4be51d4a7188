"""Command line front end: ``gendoppler run|sweep|check|catalog``.

Exit codes: 0 success, 2 validation failure, 3 numerical failure,
4 consistency-residual breach (``--strict``) or failed invariant check.
"""
from __future__ import annotations

import argparse
import json
import sys

from . import catalog
from .errors import GenDopplerError, ScenarioError
from .scenario import (DEFAULT_SEED, FORMATS, format_table, load, from_document, run, sweep,
                       check, with_overrides, RATIO_HEADER)


def _common(p):
    p.add_argument("scenario", help="scenario file (TOML)")
    p.add_argument("--format", choices=FORMATS, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--tol-abs", type=float, default=None)
    p.add_argument("--tol-rel", type=float, default=None)
    p.add_argument("--strict", action="store_true", help="exit 4 when the consistency residual exceeds 1e-7")
    p.add_argument("--solve-intersections", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gendoppler", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    _common(sub.add_parser("run", help="evaluate one scenario"))
    p = sub.add_parser("sweep", help="evaluate a scenario over values of one numeric field")
    _common(p)
    p.add_argument("--axis", help="dotted path of a numeric field, e.g. parameters.v2")
    p.add_argument("--values", help="comma separated values")
    p.add_argument("--workers", type=int, default=1)
    p = sub.add_parser("check", help="run invariant suites on a scenario")
    _common(p)
    p.add_argument("--suite", default="all")
    sub.add_parser("catalog", help="list builtin metrics")
    return parser


def _load(args):
    loaded = load(args.scenario)
    doc = with_overrides(loaded.document, tol_abs=args.tol_abs, tol_rel=args.tol_rel,
                         seed=args.seed, solve=args.solve_intersections)
    if doc != loaded.document:
        loaded = from_document(doc)
    return loaded


def _parse_values(text):
    if text is None or not text.strip():
        return []
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise ScenarioError(f"sweep: could not parse values {text!r}") from None


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "catalog":
            for name, defaults in catalog.describe():
                params = ", ".join(f"{k}={v}" for k, v in defaults.items())
                print(f"{name}({params})")
            return 0
        loaded = _load(args)
        if args.command == "run":
            result = run(loaded, args.format, args.strict)
            print(result.output)
            if result.exit_code:
                print(result.message, file=sys.stderr)
            return result.exit_code
        if args.command == "sweep":
            sweep_cfg = loaded.outputs.get("sweep", {})
            axis = args.axis or sweep_cfg.get("axis")
            if not axis:
                raise ScenarioError("sweep: no axis given (--axis or outputs.sweep.axis)")
            values = _parse_values(args.values) if args.values is not None else list(sweep_cfg.get("values", []))
            rows = sweep(loaded, axis, values, workers=args.workers)
            if args.format == "json":
                print(json.dumps(rows, indent=2))
            else:
                print(format_table(rows, header=f"sweep over {axis}\n{RATIO_HEADER}"))
            if args.strict and any(r["residual"] > 1e-7 for r in rows):
                print("consistency residual exceeds 1e-7", file=sys.stderr)
                return 4
            return 0
        if args.command == "check":
            summary = check(loaded, args.suite, args.seed if args.seed is not None else loaded.seed)
            print(summary.format())
            return summary.exit_code
    except GenDopplerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
