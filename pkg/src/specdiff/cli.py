"""Command line entry point.

    specdiff run <config.json> [--seed N] [--replications R] [--out DIR]
    specdiff validate <config.json>
    specdiff suite <name> [--seed N] [--replications R] [--out DIR]

Exit codes: 0 success, 1 experiment ran but a pinned metric failed (or the
run itself errored), 2 configuration or usage error.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

from .errors import InvariantError, SchemaError
from .experiments import (
    SUITES,
    emit_report,
    parse_config_file,
    run_experiment,
    run_suite,
)

__all__ = ["main"]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="specdiff",
        description="Exact small-alphabet diffusion decoding experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one experiment from a JSON config")
    run_p.add_argument("config", help="path to the JSON configuration")
    _common_flags(run_p)

    val_p = sub.add_parser("validate", help="validate a JSON config and exit")
    val_p.add_argument("config", help="path to the JSON configuration")

    suite_p = sub.add_parser("suite", help="run a named suite of experiments")
    suite_p.add_argument("name", help=f"one of: {', '.join(sorted(SUITES))}")
    _common_flags(suite_p)
    return parser


def _common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--replications", type=int, default=None,
                   help="override n_replications")
    p.add_argument("--out", default=None, help="output directory")


def _print_metrics(report) -> None:
    for m in report.metrics:
        if m.passed is None:
            verdict = "info"
        else:
            verdict = "PASS" if m.passed else "FAIL"
        tol = "" if m.tolerance is None else f" (tol {m.tolerance:g})"
        note = f"  [{m.note}]" if m.note else ""
        print(f"  {verdict:>4}  {m.name} = {m.value:.6g}{tol}{note}")


def _cmd_run(args) -> int:
    cfg = parse_config_file(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if args.replications is not None:
        cfg = dataclasses.replace(cfg, n_replications=args.replications)
    outdir = args.out or cfg.out or f"specdiff-out/{cfg.kind}"
    try:
        report = run_experiment(cfg)
    except Exception as e:  # runtime failure, not a config problem
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    emit_report(report, outdir)
    print(f"{cfg.kind} (seed {cfg.seed}) -> {outdir}")
    _print_metrics(report)
    return report.exit_code


def _cmd_validate(args) -> int:
    cfg = parse_config_file(args.config)
    print(f"ok: kind={cfg.kind} seed={cfg.seed} replications={cfg.n_replications}")
    return 0


def _cmd_suite(args) -> int:
    outdir = args.out or f"specdiff-suite-{args.name}"
    code, reports = run_suite(args.name, outdir, seed=args.seed,
                              replications=args.replications)
    for name, report in reports:
        status = "ok" if report.exit_code == 0 else "FAILED"
        print(f"{status:>6}  {name} ({report.runtime_seconds:.1f}s)")
        _print_metrics(report)
    print(f"suite {args.name} -> {outdir} (exit {code})")
    return code


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "validate":
            return _cmd_validate(args)
        return _cmd_suite(args)
    except (SchemaError, InvariantError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
