"""Command-line entry point: ``tfkac-bench {convergence,bench} --config study.yaml``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .bench import (ConfigError, RungFailure, check_guardrail, emit, load_config,
                    run_convergence, run_solver_bench, to_csv, to_markdown)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tfkac-bench", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in [("convergence", "error and rate table for a refinement ladder"),
                        ("bench", "CG versus PCG iteration counts and timings")]:
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", type=Path, help="YAML study description")
        p.add_argument("--example", choices=["1", "3"])
        p.add_argument("--axis", choices=["space", "time"])
        p.add_argument("--scheme", choices=["BE", "SBD"], type=str.upper)
        p.add_argument("--method", choices=["cg", "pcg"])
        p.add_argument("--out", help="output file (stdout when omitted)")
        p.add_argument("--format", choices=["csv", "markdown"])
        p.add_argument("--tol", type=float)
        p.add_argument("--force", action="store_true", help="allow runs beyond the desk limits")
    return parser


def _write(report, cfg, out, suffix=""):
    if out is None:
        sys.stdout.write(to_csv(report) if cfg.format == "csv" else to_markdown(report))
        return
    path = Path(out)
    if suffix:
        path = path.with_name(f"{path.stem}{suffix}{path.suffix}")
    emit(report, cfg.format, path)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {k: getattr(args, k) for k in ("example", "axis", "scheme", "method", "out", "format", "tol")}
    try:
        cfg = load_config(args.config, overrides)
        check_guardrail(cfg, args.force)
    except (ConfigError, OSError) as exc:
        print(f"FAILED config: {exc}", file=sys.stderr)
        return 2
    try:
        if args.command == "convergence":
            reports = {"": run_convergence(cfg)}
        else:
            if args.method is not None:
                cfg.methods = [args.method]
            reports = {f"_{m}": r for m, r in run_solver_bench(cfg).items()}
    except ConfigError as exc:
        print(f"FAILED config: {exc}", file=sys.stderr)
        return 2
    except (RungFailure, ValueError) as exc:
        print(f"FAILED run: {exc}", file=sys.stderr)
        return 3
    status = 0
    for suffix, report in reports.items():
        _write(report, cfg, cfg.out, suffix)
        for row in report.rows:
            if not row["converged"]:
                print(f"FAILED rung={row['grid_or_tau']:.6g} method={report.metadata['solver']['method']} "
                      "reason=solver-not-converged", file=sys.stderr)
                status = 1
    return status


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
