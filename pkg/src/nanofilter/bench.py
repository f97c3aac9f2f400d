"""Monte-Carlo benchmark harness: paired-seed trials, RMSE statistics, timing and reports."""

from __future__ import annotations

import csv
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np
import yaml

from . import __version__
from . import filters_baseline as fb
from . import nano
from .models import SYSTEMS, canonical_noise, canonical_system, make_system, simulate
from .unscented import MonteCarloIntegrator, SigmaPointRule, UnscentedIntegrator

log = logging.getLogger(__name__)

FILTERS = ("ekf", "ukf", "iekf", "plf", "nano")
WARMUP_STEPS = 5
QUARTILE_METHOD = "linear"
TRIALS_COLUMNS = ("seed", "filter", "rmse", "mean_step_ms", "mean_iters", "diverged")
TIMING_COLUMNS = ("mean_step_ms",)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class BenchConfig:
    system: str
    noise: str
    filters: tuple[str, ...] = FILTERS
    filter_settings: dict = field(default_factory=dict)
    n_trials: int = 100
    horizon: int = 100
    base_seed: int = 0
    out_dir: str = "results"
    formats: tuple[str, ...] = ("csv", "json")
    system_options: dict = field(default_factory=dict)

    def __post_init__(self):
        try:
            object.__setattr__(self, "system", canonical_system(self.system))
            object.__setattr__(self, "noise", canonical_noise(self.noise))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        filters = tuple(f.lower() for f in self.filters)
        unknown = [f for f in filters if f not in FILTERS]
        if unknown:
            raise ConfigError(f"unknown filters {unknown}; choose from {FILTERS}")
        if not filters:
            raise ConfigError("at least one filter is required")
        object.__setattr__(self, "filters", filters)
        object.__setattr__(self, "formats", tuple(self.formats))
        if self.n_trials < 1:
            raise ConfigError("n_trials must be at least 1")
        if self.horizon < 1:
            raise ConfigError("horizon must be at least 1")
        bad = set(self.filter_settings) - set(FILTERS)
        if bad:
            raise ConfigError(f"settings given for unknown filters {sorted(bad)}")
        try:
            make_system(self.system, self.noise, **self.system_options)
            for name in self.filters:
                _make_runner(name, self.filter_settings.get(name, {}))
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from None

    def seeds(self) -> list[int]:
        return [self.base_seed + i for i in range(self.n_trials)]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["filters"] = list(self.filters)
        d["formats"] = list(self.formats)
        return d


_CONFIG_KEYS = {
    "system": "system",
    "noise": "noise",
    "noise_case": "noise",
    "filters": "filters",
    "trials": "n_trials",
    "n_trials": "n_trials",
    "horizon": "horizon",
    "seed": "base_seed",
    "base_seed": "base_seed",
    "out": "out_dir",
    "out_dir": "out_dir",
    "formats": "formats",
    "landmarks": "landmarks",
}


def config_from_mapping(raw: dict) -> BenchConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    kwargs: dict[str, Any] = {}
    settings: dict[str, dict] = {}
    for key, value in raw.items():
        if key in FILTERS:
            if not isinstance(value, dict):
                raise ConfigError(f"settings for {key} must be a mapping")
            settings[key] = value
        elif key in _CONFIG_KEYS:
            kwargs[_CONFIG_KEYS[key]] = value
        else:
            raise ConfigError(f"unknown config key {key!r}")
    if "system" not in kwargs or "noise" not in kwargs:
        raise ConfigError("config requires 'system' and 'noise'")
    if isinstance(kwargs.get("filters"), str):
        kwargs["filters"] = [f.strip() for f in kwargs["filters"].split(",") if f.strip()]
    landmarks = kwargs.pop("landmarks", None)
    options = {} if landmarks is None else {"landmarks": [list(map(float, lm)) for lm in landmarks]}
    if "filters" in kwargs:
        kwargs["filters"] = tuple(kwargs["filters"])
    if "formats" in kwargs:
        kwargs["formats"] = tuple(kwargs["formats"])
    try:
        return BenchConfig(filter_settings=settings, system_options=options, **kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> BenchConfig:
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from None
    return config_from_mapping(raw or {})


# ---------------------------------------------------------------------------
# Filter runners
# ---------------------------------------------------------------------------


def _rule(value) -> SigmaPointRule:
    if isinstance(value, SigmaPointRule):
        return value
    if isinstance(value, str):
        return SigmaPointRule.from_name(value)
    if isinstance(value, dict):
        lam = value.get("lambda", value.get("lam", 0.0))
        return SigmaPointRule(float(value.get("alpha", 0.0)), float(value.get("beta", 1.0)), lam)
    raise ValueError(f"cannot build a sigma point rule from {value!r}")


def nano_config_from_settings(settings: dict) -> tuple[nano.NanoConfig, Optional[object]]:
    s = dict(settings)
    integrator_name = s.pop("integrator", "unscented")
    mc_samples = int(s.pop("mc_samples", 2000))
    for key in ("predict_rule", "update_rule"):
        if key in s:
            s[key] = _rule(s[key])
    cfg = nano.NanoConfig(**s)
    if integrator_name == "unscented":
        integrator = UnscentedIntegrator(cfg.update_rule)
    elif integrator_name == "monte_carlo":
        integrator = MonteCarloIntegrator(mc_samples, 0)
    else:
        raise ValueError(f"unknown integrator {integrator_name!r}")
    return cfg, integrator


class _Runner:
    """Callable (belief, u, y, sys, t) -> (FilterStep, UpdateReport | None)."""

    def __init__(self, name: str, settings: dict):
        self.name = name
        s = dict(settings)
        if name == "nano":
            self.cfg, self.integrator = nano_config_from_settings(s)
            return
        self.rule = _rule(s.pop("rule", "van_der_merwe"))
        self.max_iter = int(s.pop("max_iter", fb.DEFAULT_MAX_ITER))
        self.tol = float(s.pop("tol", fb.DEFAULT_TOL))
        if s:
            raise ValueError(f"unknown settings for {name}: {sorted(s)}")

    def __call__(self, belief, u, y, sys, t):
        if self.name == "ekf":
            return fb.ekf_step(belief, u, y, sys, t=t), None
        if self.name == "ukf":
            return fb.ukf_step(belief, u, y, sys, self.rule, t=t), None
        if self.name == "iekf":
            return fb.iekf_step(belief, u, y, sys, self.max_iter, self.tol, t=t), None
        if self.name == "plf":
            return fb.plf_step(belief, u, y, sys, self.rule, self.max_iter, self.tol, t=t), None
        return nano.nano_step_report(belief, u, y, sys, self.cfg, t=t, integrator=self.integrator)


def _make_runner(name: str, settings: dict) -> _Runner:
    if name not in FILTERS:
        raise ValueError(f"unknown filter {name!r}")
    return _Runner(name, settings)


# ---------------------------------------------------------------------------
# Trials
# ---------------------------------------------------------------------------


@dataclass
class TrialResult:
    seed: int
    filter: str
    rmse: Optional[float]
    errors: Optional[np.ndarray]  # (M, n) x_t - xhat_t
    mean_iters: float
    mean_step_s: float
    diverged: bool
    fallback_steps: int = 0
    jitter_events: int = 0
    threshold_stops: int = 0
    failure: str = ""

    def component_rmse(self, dims: Sequence[int] | None = None) -> Optional[float]:
        if self.errors is None:
            return None
        e = self.errors if dims is None else self.errors[:, list(dims)]
        return float(np.sqrt(np.mean(e**2)))


def rmse(truth, estimates) -> float:
    """Root mean square error over M steps and n state components.

    ``truth`` is a Trajectory (its states x_1..x_M are used) or an ``(M, n)``
    array aligned with ``estimates``.
    """
    states = getattr(truth, "states", None)
    x = np.asarray(states[1:] if states is not None else truth, dtype=float)
    xhat = np.asarray(estimates, dtype=float)
    if x.shape != xhat.shape:
        raise ValueError(f"length/shape mismatch: truth {x.shape} vs estimates {xhat.shape}")
    M, n = x.shape
    return float(np.sqrt(np.sum((x - xhat) ** 2) / (M * n)))


_DIVERGENCE_ERRORS = (np.linalg.LinAlgError, FloatingPointError, OverflowError)


def _run_filter(runner: _Runner, bench, traj, seed: int) -> TrialResult:
    sys = bench.system
    belief = bench.x0
    M = traj.horizon
    estimates = np.empty((M, sys.n))
    step_times = np.empty(M)
    iters = np.empty(M)
    fallbacks = jitter = thresholds = 0
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            for t in range(M):
                start = time.perf_counter()
                step, report = runner(belief, traj.inputs[t], traj.measurements[t], sys, t)
                step_times[t] = time.perf_counter() - start
                belief = step.posterior
                if not np.all(np.isfinite(belief.mean)):
                    raise FloatingPointError(f"non-finite estimate at step {t + 1}")
                estimates[t] = belief.mean
                iters[t] = step.iterations
                fallbacks += step.fallback
                if report is not None:
                    jitter += report.jitter_events
                    thresholds += report.stop_reason is nano.StopReason.THRESHOLD
    except _DIVERGENCE_ERRORS as exc:
        log.debug("%s diverged on seed %d: %s", runner.name, seed, exc)
        return TrialResult(seed, runner.name, None, None, float(np.mean(iters[:t])) if t else 0.0,
                           float(np.mean(step_times[:t])) if t else 0.0, True, fallbacks, jitter, thresholds,
                           f"step {t + 1}: {exc}")
    timed = step_times[WARMUP_STEPS:] if M > WARMUP_STEPS else step_times
    return TrialResult(
        seed=seed,
        filter=runner.name,
        rmse=rmse(traj, estimates),
        errors=traj.states[1:] - estimates,
        mean_iters=float(np.mean(iters)),
        mean_step_s=float(np.mean(timed)),
        diverged=False,
        fallback_steps=fallbacks,
        jitter_events=jitter,
        threshold_stops=thresholds,
    )


def _simulate(cfg: BenchConfig, seed: int):
    bench = make_system(cfg.system, cfg.noise, **cfg.system_options)
    traj = simulate(bench.system, bench.process_noise, bench.measurement_noise, bench.x0, bench.inputs, cfg.horizon, seed)
    return bench, traj


def run_trial(cfg: BenchConfig, filter_name: str, seed: int) -> TrialResult:
    bench, traj = _simulate(cfg, seed)
    runner = _make_runner(filter_name, cfg.filter_settings.get(filter_name, {}))
    return _run_filter(runner, bench, traj, seed)


def _run_seed(cfg: BenchConfig, seed: int) -> list[TrialResult]:
    # every filter sees the same trajectory for a given seed
    bench, traj = _simulate(cfg, seed)
    return [
        _run_filter(_make_runner(name, cfg.filter_settings.get(name, {})), bench, traj, seed) for name in cfg.filters
    ]


def worker_count() -> int:
    env = os.environ.get("NANO_BENCH_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"NANO_BENCH_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------


@dataclass
class BenchSummary:
    filters: dict[str, dict]
    metadata: dict
    results: list[TrialResult] = field(default_factory=list, repr=False)

    def mean_rmse(self, name: str) -> float:
        return self.filters[name]["rmse_mean"]

    def to_json_dict(self) -> dict:
        return {"filters": self.filters, "metadata": self.metadata}


def _stats(values: np.ndarray) -> dict:
    if values.size == 0:
        keys = ("rmse_mean", "rmse_median", "rmse_q1", "rmse_q3", "rmse_min", "rmse_max")
        return {k: None for k in keys}
    q1, med, q3 = np.percentile(values, [25, 50, 75], method=QUARTILE_METHOD)
    return {
        "rmse_mean": float(np.mean(values)),
        "rmse_median": float(med),
        "rmse_q1": float(q1),
        "rmse_q3": float(q3),
        "rmse_min": float(np.min(values)),
        "rmse_max": float(np.max(values)),
    }


def summarize(results: Sequence[TrialResult], cfg: BenchConfig | None = None) -> BenchSummary:
    ordered = sorted(results, key=lambda r: (r.filter, r.seed))
    names = list(cfg.filters) if cfg is not None else sorted({r.filter for r in ordered})
    per_filter = {}
    for name in names:
        rs = [r for r in ordered if r.filter == name]
        ok = [r for r in rs if not r.diverged]
        entry = _stats(np.array([r.rmse for r in ok], dtype=float))
        entry.update(
            n_trials=len(rs),
            n_counted=len(ok),
            n_diverged=len(rs) - len(ok),
            mean_step_ms=float(np.mean([r.mean_step_s for r in rs]) * 1e3) if rs else None,
            mean_iters=float(np.mean([r.mean_iters for r in ok])) if ok else None,
            fallback_steps=int(sum(r.fallback_steps for r in rs)),
            jitter_events=int(sum(r.jitter_events for r in rs)),
            component_rmse_mean=(
                np.mean([np.sqrt(np.mean(r.errors**2, axis=0)) for r in ok], axis=0).tolist() if ok else None
            ),
        )
        per_filter[name] = entry
    metadata = {
        "config": cfg.to_dict() if cfg is not None else None,
        "version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "quartile_method": QUARTILE_METHOD,
        "timing_warmup_steps": WARMUP_STEPS,
    }
    return BenchSummary(per_filter, metadata, ordered)


def run_benchmark(cfg: BenchConfig, workers: int | None = None) -> BenchSummary:
    workers = worker_count() if workers is None else workers
    seeds = cfg.seeds()
    if workers > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(seeds))) as pool:
            batches = list(pool.map(_run_seed, [cfg] * len(seeds), seeds))
    else:
        batches = [_run_seed(cfg, s) for s in seeds]
    results = [r for batch in batches for r in batch]
    return summarize(results, cfg)


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def _write_csv(path: Path, header: Sequence[str], rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) if not isinstance(v, str) else v for v in row])


def emit_report(summary: BenchSummary, results: Sequence[TrialResult], formats=("csv", "json"), out_dir="results") -> list[Path]:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    written = []
    ordered = sorted(results, key=lambda r: (r.filter, r.seed))
    names = list(summary.filters) or sorted({r.filter for r in ordered})
    if "csv" in formats:
        path = out / "trials.csv"
        _write_csv(
            path,
            TRIALS_COLUMNS,
            ((r.seed, r.filter, r.rmse, r.mean_step_s * 1e3, r.mean_iters, r.diverged) for r in ordered),
        )
        written.append(path)
        for name in names:
            ok = [r for r in ordered if r.filter == name and not r.diverged]
            path = out / f"errors_{name}.csv"
            if ok:
                mean_abs = np.mean([np.abs(r.errors) for r in ok], axis=0)
                n = mean_abs.shape[1]
                rows = ((t + 1, *mean_abs[t]) for t in range(len(mean_abs)))
            else:
                n = 0
                rows = ()
            _write_csv(path, ["t", *[f"abs_err_{i}" for i in range(n)]], rows)
            written.append(path)
        path = out / "timing.csv"
        system = (summary.metadata.get("config") or {}).get("system", "")
        _write_csv(
            path,
            ("system", "filter", "mean_step_ms"),
            ((system, name, summary.filters[name]["mean_step_ms"]) for name in names if name in summary.filters),
        )
        written.append(path)
    if "json" in formats:
        path = out / "summary.json"
        with open(path, "w") as fh:
            json.dump(summary.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        written.append(path)
    return written


def read_trials(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def summary_from_trials_csv(path) -> dict[str, dict]:
    """Recompute per-filter RMSE statistics from an existing trials.csv."""
    rows = read_trials(path)
    out = {}
    for name in sorted({r["filter"] for r in rows}):
        rs = [r for r in rows if r["filter"] == name]
        ok = np.array([float(r["rmse"]) for r in rs if r["diverged"] == "0"])
        entry = _stats(ok)
        entry.update(
            n_trials=len(rs),
            n_diverged=len(rs) - ok.size,
            mean_step_ms=float(np.mean([float(r["mean_step_ms"]) for r in rs])),
        )
        out[name] = entry
    return out


def list_systems() -> list[tuple[str, tuple[str, ...]]]:
    cases = {
        "satellite_attitude": ("outlier_mixture",),
    }
    return [(s, cases.get(s, ("gauss_a", "laplace_b", "beta_c"))) for s in SYSTEMS]
