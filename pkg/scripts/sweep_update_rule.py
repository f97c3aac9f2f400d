#!/usr/bin/env python3
"""Sweep the sigma-point spread used inside the NANO update.

Runs on tuning seeds disjoint from the benchmark seeds (default 1000..1019) and
reports, per spread value: mean RMSE, steps that fell back to the initial
belief, and updates that stopped on the KL threshold.
"""

import argparse
import sys

from nanofilter import bench

SYSTEMS = [
    ("oscillator", "gauss_a"),
    ("sequence_forecast", "gauss_a"),
    ("robot_localization", "gauss_a"),
    ("growth", "gauss_a"),
    ("satellite_attitude", "outlier_mixture"),
]


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description="NANO update spread sweep")
    p.add_argument("--spreads", default="2,3,4,5,7,10", help="comma separated lambda values")
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--seed", type=int, default=1000)
    args = p.parse_args(argv)
    spreads = [float(s) for s in args.spreads.split(",")]

    for system, noise in SYSTEMS:
        base = bench.BenchConfig(system, noise, filters=("ekf", "iekf", "plf"), n_trials=args.trials, base_seed=args.seed)
        ref = bench.run_benchmark(base, workers=1).filters
        line = [f"{system:<20}"] + [f"{f}={ref[f]['rmse_mean']:.4f}" for f in ("ekf", "iekf", "plf")]
        for lam in spreads:
            settings = {"nano": {"update_rule": {"alpha": 0.0, "beta": 1.0, "lambda": lam}}}
            cfg = bench.BenchConfig(system, noise, filters=("nano",), n_trials=args.trials, base_seed=args.seed,
                                    filter_settings=settings)
            summary = bench.run_benchmark(cfg, workers=1)
            stats = summary.filters["nano"]
            stops = sum(r.threshold_stops for r in summary.results)
            line.append(f"lam{lam:g}={stats['rmse_mean']:.4f}/fallback{stats['fallback_steps']}/threshold{stops}")
        print(" ".join(line), flush=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
