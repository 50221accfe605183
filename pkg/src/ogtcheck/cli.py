"""Command-line runner for the verification suites.

Exit status: 0 when every check passes, 1 when a check fails, 2 on usage
errors (unknown names, bad flags, unwritable output).
"""
from __future__ import annotations

import argparse
import sys

from .errors import UnknownName
from .models import get_model, list_catalog
from .suites import SUITES, WORKERS_ENV, SuiteConfig, run_suite

EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _steps(text: str) -> tuple:
    try:
        steps = tuple(float(s) for s in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated positive numbers, got {text!r}")
    if not steps or any(s <= 0 for s in steps):
        raise argparse.ArgumentTypeError("finite-difference steps must be positive")
    return steps


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ogtcheck",
        description="Run tensor-identity verification suites on catalog metrics.",
        epilog=f"Set {WORKERS_ENV} to choose the number of worker threads (default 1).",
    )
    parser.add_argument("--list", nargs="?", const="", default=None, metavar="FILTER",
                        help="list catalog entries (optionally only those containing FILTER)")
    parser.add_argument("--suite", choices=sorted(SUITES))
    parser.add_argument("--metric", help="catalog id of the metric")
    parser.add_argument("--field", help="catalog id of the field on that metric")
    parser.add_argument("--grid", type=int, default=8, help="sample points per axis (>= 2)")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--tol", type=float, default=None, help="tolerance (suite default if omitted)")
    parser.add_argument("--fd-step", type=_steps, default=None, metavar="H1[,H2,...]",
                        help="use central differences with these per-order base steps")
    parser.add_argument("--out", help="write the YAML report here instead of stdout")
    return parser


def _print_catalog(filter_text: str) -> None:
    for name in list_catalog(filter_text):
        entry = get_model(name)
        p, q = entry.metric.signature
        print(f"{name}\tdim={entry.metric.dim}\tsignature=({p},{q})\tfields={','.join(entry.fields)}")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_PASS

    if args.list is not None:
        _print_catalog(args.list)
        return EXIT_PASS
    if not args.suite or not args.metric:
        parser.print_usage(sys.stderr)
        print("ogtcheck: error: --suite and --metric are required (or use --list)", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = SuiteConfig(suite=args.suite, metric=args.metric, field=args.field, grid=args.grid,
                          seed=args.seed, tolerance=args.tol, fd_steps=args.fd_step, output=args.out)
        report = run_suite(cfg)
    except (UnknownName, ValueError) as exc:
        print(f"ogtcheck: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"ogtcheck: cannot write report: {exc}", file=sys.stderr)
        return EXIT_USAGE

    if args.out is None:
        sys.stdout.write(report.to_yaml())
    for check in report.checks:
        status = "PASS" if check.passed else "FAIL"
        print(f"{status} {check.check_name}: max={check.max:.6g} tol={check.tolerance:g}", file=sys.stderr)
    return EXIT_PASS if report.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
