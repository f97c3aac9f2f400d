#!/usr/bin/env python3
"""Run every config in configs/ and print a combined mean-RMSE table.

Usage: python3 scripts/run_all.py [--trials N] [--only growth,oscillator] [--out results]
"""

import argparse
import sys
import time
from dataclasses import replace
from pathlib import Path

from nanofilter import bench

ROOT = Path(__file__).resolve().parent.parent


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--configs", default=str(ROOT / "configs"))
    p.add_argument("--trials", type=int, help="override the trial count of every config")
    p.add_argument("--only", help="comma separated system name prefixes")
    p.add_argument("--out", default="results", help="parent directory for per-config outputs")
    args = p.parse_args(argv)

    paths = sorted(Path(args.configs).glob("*.yaml"))
    if args.only:
        prefixes = tuple(s.strip() for s in args.only.split(","))
        paths = [q for q in paths if q.stem.startswith(prefixes)]
    if not paths:
        print("no configs matched", file=sys.stderr)
        return 2

    header = f"{'config':<36}" + "".join(f"{f:>10}" for f in bench.FILTERS) + f"{'nano fb':>9}{'secs':>7}"
    print(header)
    for path in paths:
        cfg = bench.load_config(path)
        cfg = replace(cfg, out_dir=str(Path(args.out) / path.stem), **({"n_trials": args.trials} if args.trials else {}))
        start = time.perf_counter()
        summary = bench.run_benchmark(cfg)
        bench.emit_report(summary, summary.results, cfg.formats, cfg.out_dir)
        cells = []
        for f in bench.FILTERS:
            s = summary.filters.get(f)
            value = s and s["rmse_mean"]
            cells.append(f"{value:>10.4g}" if value is not None else f"{'-':>10}")
        fallbacks = summary.filters.get("nano", {}).get("fallback_steps", 0)
        print(f"{path.stem:<36}{''.join(cells)}{fallbacks:>9d}{time.perf_counter() - start:>7.0f}", flush=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
