"""Command-line driver: run experiment grids, analyze traces, list the
registry, and verify the built-in property oracles."""

from __future__ import annotations

import argparse
import os
import sys

from .acquisitions import RULE_NAMES
from .experiment import ExperimentSpec, analyze, execute, parse_config
from .objectives import list_objectives
from .simulator import MODES


def _default_out():
    return os.environ.get("ASYNCBO_OUT", "results")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="asyncbo",
        description="Asynchronous Bayesian-optimization benchmark toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute an experiment grid")
    run.add_argument("--config", help="JSON config file (overrides grid flags)")
    run.add_argument("--objective", action="append", default=None,
                     help="objective key, e.g. hartmann-6 (repeatable)")
    run.add_argument("--rule", action="append", default=None,
                     help=f"acquisition rule (repeatable): {', '.join(RULE_NAMES)}")
    run.add_argument("--workers", action="append", type=int, default=None,
                     help="worker count q (repeatable)")
    run.add_argument("--seeds", type=int, default=1, help="number of seeds")
    run.add_argument("--seed-base", type=int, default=0)
    run.add_argument("--budget-time", type=float, default=None,
                     help="simulated time budget T")
    run.add_argument("--budget-evals", type=int, default=None,
                     help="max completed evaluations per run")
    run.add_argument("--modes", nargs="+", choices=MODES, default=["async"])
    run.add_argument("--initial-points", type=int, default=None,
                     help="override the 3*d initial design size")
    run.add_argument("--out", default=None,
                     help="output directory (default $ASYNCBO_OUT or ./results)")
    run.add_argument("--jobs", type=int, default=1, help="parallel runs")

    an = sub.add_parser("analyze", help="build summary tables from traces")
    an.add_argument("--out", default=None, help="experiment directory")
    an.add_argument("--pairs", action="append", default=None,
                    help="win-rate pair as row:col, e.g. ucb:lp-ucb (repeatable)")

    sub.add_parser("list", help="list objectives and acquisition rules")
    sub.add_parser("verify", help="run the built-in property oracles")
    return parser


def _cmd_run(args):
    out_dir = args.out or _default_out()
    if args.config:
        spec = parse_config(args.config, out_dir=out_dir, jobs=args.jobs)
    else:
        if not (args.objective and args.rule and args.workers):
            raise SystemExit(
                "run needs --config or at least --objective, --rule, and --workers"
            )
        spec = ExperimentSpec(
            objectives=tuple(args.objective),
            rules=tuple(args.rule),
            workers=tuple(args.workers),
            num_seeds=args.seeds,
            seed_base=args.seed_base,
            time_budget=args.budget_time,
            max_evals=args.budget_evals,
            modes=tuple(args.modes),
            initial_points=args.initial_points,
            out_dir=out_dir,
            jobs=args.jobs,
        )
    report = execute(spec)
    for filename, status in report.statuses:
        print(f"{status:12s} {filename}")
    print(f"manifest: {report.manifest_path}")
    return 0 if report.ok else 1


def _cmd_analyze(args):
    out_dir = args.out or _default_out()
    pairs = None
    if args.pairs:
        pairs = []
        for item in args.pairs:
            row, _, col = item.partition(":")
            if not row or not col:
                raise SystemExit(f"bad pair {item!r}; expected row:col")
            pairs.append((row, col))
    analysis_dir, skipped = analyze(out_dir, pairs=pairs)
    print(f"analysis tables written to {analysis_dir}")
    for objective, q, rule_a, rule_b in skipped:
        print(f"warning: skipped {rule_a} vs {rule_b} on {objective} (q={q}): missing traces")
    return 0


def _cmd_list():
    print("objectives:")
    for key in list_objectives():
        print(f"  {key}")
    print("rules:")
    for name in RULE_NAMES:
        print(f"  {name}")
    return 0


def _cmd_verify():
    from .selfcheck import run_all

    failures = run_all()
    return 1 if failures else 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "analyze":
            return _cmd_analyze(args)
        if args.command == "list":
            return _cmd_list()
        if args.command == "verify":
            return _cmd_verify()
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    return 2


if __name__ == "__main__":
    sys.exit(main())
