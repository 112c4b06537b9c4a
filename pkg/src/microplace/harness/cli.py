"""Command line entry point: ``microplace run|audit|oracle``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from .audit import audit_directory
from .config import ConfigError, ScenarioConfig, load_config
from .oracle import cross_validate
from .runner import run_batch


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split(",") if x.strip())


def _str_list(text: str) -> tuple[str, ...]:
    return tuple(x.strip() for x in text.split(",") if x.strip())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="microplace", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario batch and write CSV results")
    run.add_argument("config", nargs="?", help="YAML scenario file (default: built-in reference)")
    run.add_argument("out_dir")
    run.add_argument("--seed", type=_int_list, help="seed or comma-separated seeds")
    run.add_argument("--solvers", type=_str_list, help="e.g. camp_inc,exact,epta")
    run.add_argument("--requests", type=_int_list, help="request counts, e.g. 5,10,30")

    audit = sub.add_parser("audit", help="recompute every metric of a result directory")
    audit.add_argument("out_dir")

    oracle = sub.add_parser("oracle", help="cross-check the exact solver against brute force")
    oracle.add_argument("--seed", type=int, default=0, help="first instance seed")
    oracle.add_argument("--count", type=int, default=50, help="number of instances")
    return parser


def _cmd_run(args) -> int:
    config = load_config(args.config) if args.config else ScenarioConfig()
    overrides = {}
    if args.seed:
        overrides["seeds"] = args.seed
    if args.solvers:
        overrides["solvers"] = args.solvers
    if args.requests:
        overrides["request_counts"] = args.requests
    if overrides:
        config = dataclasses.replace(config, **overrides)
    results = run_batch(config, args.out_dir)
    failed = [r for r in results if r.status == "error"]
    for r in failed:
        print(f"error: seed {r.seed}, {r.request_count} requests, {r.solver}: {r.error}", file=sys.stderr)
    print(f"{len(results)} cells written to {args.out_dir}")
    return 1 if failed else 0


def _cmd_audit(args) -> int:
    problems = audit_directory(args.out_dir)
    for p in problems:
        print(p)
    print("audit passed" if not problems else f"{len(problems)} problem(s)")
    return 1 if problems else 0


def _cmd_oracle(args) -> int:
    cases = cross_validate(range(args.seed, args.seed + args.count))
    bad = [c for c in cases if not c.agrees]
    for c in cases:
        mark = "ok " if c.agrees else "BAD"
        print(f"{mark} seed {c.seed:4d}  assignments {c.assignments:6d}  {c.exact_status:10s} "
              f"exact {c.exact_total}  brute {c.brute_total}")
    print(f"{len(cases) - len(bad)}/{len(cases)} instances agree")
    return 1 if bad else 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return {"run": _cmd_run, "audit": _cmd_audit, "oracle": _cmd_oracle}[args.command](args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
