"""Command line entry point: ``python -m nanofilter {run,list-systems,report}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import bench

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nanofilter", description="Gaussian filter benchmarks")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a benchmark described by a YAML config")
    run.add_argument("--config", required=True)
    run.add_argument("--filters", help="comma separated subset, e.g. ekf,nano")
    run.add_argument("--trials", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--out")
    run.add_argument("--strict", action="store_true", help="exit with status 3 if any trial diverged")

    sub.add_parser("list-systems", help="print systems and their noise cases")

    rep = sub.add_parser("report", help="print statistics recomputed from an output directory")
    rep.add_argument("--from", dest="source", required=True)
    return p


def _cmd_run(args) -> int:
    try:
        cfg = bench.load_config(args.config)
        changes = {}
        if args.filters:
            changes["filters"] = tuple(f.strip() for f in args.filters.split(",") if f.strip())
        if args.trials is not None:
            changes["n_trials"] = args.trials
        if args.seed is not None:
            changes["base_seed"] = args.seed
        if args.out:
            changes["out_dir"] = args.out
        if changes:
            cfg = replace(cfg, **changes)
    except bench.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    summary = bench.run_benchmark(cfg)
    files = bench.emit_report(summary, summary.results, cfg.formats, cfg.out_dir)
    _print_table(summary.filters)
    for f in files:
        print(f"wrote {f}")
    diverged = sum(s["n_diverged"] for s in summary.filters.values())
    if diverged:
        print(f"{diverged} trial(s) diverged", file=sys.stderr)
        if args.strict:
            return EXIT_DIVERGED
    return EXIT_OK


def _print_table(stats: dict) -> None:
    print(f"{'filter':<6} {'mean':>10} {'median':>10} {'q1':>10} {'q3':>10} {'diverged':>8} {'ms/step':>9}")
    for name, s in stats.items():
        cells = [s.get(k) for k in ("rmse_mean", "rmse_median", "rmse_q1", "rmse_q3")]
        text = " ".join(f"{c:>10.5g}" if c is not None else f"{'-':>10}" for c in cells)
        ms = s.get("mean_step_ms")
        print(f"{name:<6} {text} {s['n_diverged']:>8d} {ms if ms is not None else float('nan'):>9.3f}")


def _cmd_list(_args) -> int:
    for name, cases in bench.list_systems():
        print(f"{name}: {', '.join(cases)}")
    return EXIT_OK


def _cmd_report(args) -> int:
    src = Path(args.source)
    trials = src / "trials.csv"
    if not trials.exists():
        print(f"no trials.csv in {src}", file=sys.stderr)
        return EXIT_CONFIG
    _print_table(bench.summary_from_trials_csv(trials))
    meta = src / "summary.json"
    if meta.exists():
        cfg = json.loads(meta.read_text())["metadata"].get("config") or {}
        print(f"system={cfg.get('system')} noise={cfg.get('noise')} trials={cfg.get('n_trials')}")
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    handler = {"run": _cmd_run, "list-systems": _cmd_list, "report": _cmd_report}[args.command]
    return handler(args)
