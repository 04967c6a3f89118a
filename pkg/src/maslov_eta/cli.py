"""Command-line entry point.

    maslov-eta run <scenario-file> [--out DIR] [--seed N] [--threads N]
                                   [--format {csv,json}]
    maslov-eta sweep <scenario-file> --axis NAME [--out DIR] [...]

Exit codes: 0 success, 2 validation error, 3 verification-tolerance failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .errors import PreconditionError
from .scenarios import (canonical_report_json, convergence_sweep, load_scenario,
                        report_to_csv, run)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_TOLERANCE = 3


def _write_outputs(report: dict, out_dir: str | None, fmt: str, stem: str) -> None:
    import json

    canonical = canonical_report_json(report)
    if out_dir is None:
        sys.stdout.write(canonical + "\n")
        return
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{stem}.json").write_text(canonical + "\n")
    (out / f"{stem}.timings.json").write_text(
        json.dumps(report.get("timings", {}), sort_keys=True) + "\n")
    if fmt == "csv":
        if report.get("schema") == "sweep-report/1":
            rows = ["value,discrepancy,pass"]
            rows += [f"{r['value']},{r['discrepancy']},{r['pass']}"
                     for r in report["rows"]]
            (out / f"{stem}.csv").write_text("\n".join(rows) + "\n")
        else:
            (out / f"{stem}.csv").write_text(report_to_csv(report))


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="maslov-eta", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario file")
    p_run.add_argument("scenario")
    p_sweep = sub.add_parser("sweep", help="convergence sweep along an axis")
    p_sweep.add_argument("scenario")
    p_sweep.add_argument("--axis", required=True,
                         choices=["K", "N_x", "base", "eps", "lattice_terms"])
    for p in (p_run, p_sweep):
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--format", choices=["csv", "json"], default="json")

    args = parser.parse_args(argv)
    try:
        scenario = load_scenario(args.scenario)
        if args.command == "run":
            report = run(scenario, threads=args.threads, seed=args.seed)
        else:
            report = convergence_sweep(scenario, args.axis,
                                       threads=args.threads, seed=args.seed)
    except (PreconditionError, FileNotFoundError, KeyError, ValueError) as exc:
        sys.stderr.write(f"validation error: {exc}\n")
        return EXIT_VALIDATION

    stem = f"{scenario.name}.{args.command}"
    _write_outputs(report, args.out, args.format, stem)
    if not report.get("pass", False):
        sys.stderr.write("verification tolerance failure\n")
        return EXIT_TOLERANCE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
