"""Command line entry point: ``rvlab run | verify | report``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import RvlabError
from .harness import (
    ExperimentConfig,
    RunRecord,
    emit_report,
    load_records,
    run_experiment,
    suite_configs,
    summary_lines,
)

log = logging.getLogger("rvlab")


def _add_overrides(p: argparse.ArgumentParser):
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--workers", type=int, help="worker processes (results do not depend on it)")
    p.add_argument("--samples", type=float, help="override the sample budget")
    p.add_argument("--out", type=Path, help="directory for records and summary")
    p.add_argument("--format", choices=("csv", "json"), default="json")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rvlab", description="Heavy-tail product experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment config")
    run.add_argument("config", type=Path)
    _add_overrides(run)

    verify = sub.add_parser("verify", help="run every config in a suite directory")
    verify.add_argument("suite", help="suite directory, or the name of a bundled suite")
    _add_overrides(verify)

    report = sub.add_parser("report", help="re-emit stored records")
    report.add_argument("records", type=Path)
    report.add_argument("--format", choices=("csv", "json"), default="csv")
    report.add_argument("--out", type=Path)
    return parser


def _run_configs(paths, args) -> list[RunRecord]:
    samples = int(args.samples) if args.samples is not None else None
    records = []
    for path in paths:
        cfg = ExperimentConfig.load(path).with_overrides(args.seed, args.workers, samples)
        log.info("running %s (%s, n=%d)", cfg.id, cfg.kind, cfg.samples)
        rec = run_experiment(cfg)
        records.append(rec)
        log.info("%s: gap %.4g, %s", cfg.id, rec.relative_gap, "pass" if rec.passed else "FAIL")
    return records


def _finish(records: list[RunRecord], args) -> int:
    for line in summary_lines(records):
        print(line)
    if args.out is not None:
        # json keeps the checkpoint curves for a later ``report``
        emit_report(records, args.out, args.format)
        if args.format == "csv":
            (Path(args.out) / "records.json").write_text(json.dumps([r.to_dict() for r in records], indent=2))
    return 0 if all(r.passed for r in records) else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "run":
            return _finish(_run_configs([args.config], args), args)
        if args.command == "verify":
            paths = suite_configs(args.suite)
            if not paths:
                print(f"no configs in {args.suite}", file=sys.stderr)
                return 2
            return _finish(_run_configs(paths, args), args)
        records = load_records(args.records)
        if args.out is None:
            for line in summary_lines(records):
                print(line)
        else:
            emit_report(records, args.out, args.format)
        return 0 if all(r.passed for r in records) else 1
    except (RvlabError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
