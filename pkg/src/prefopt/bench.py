"""Replication benchmarking: probability-of-correct-selection curves,
stopping-time statistics, persistence.

Replication r of every method runs under seed splitmix64(base_seed, r), so
results are identical for any worker count and merge order is fixed by
replication index.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from statistics import NormalDist

import numpy as np

from .design import best_by_score, surrogate_time
from .divergence import bern_kl_binary
from .instances import PreferenceInstance, StructuredModel, best_policy, from_bt, instance_to_dict
from .rng import derive_seed
from .sampler import BUDGET_EXHAUSTED, ExperimentConfig, run_llmpo
from .unstructured import NoUniqueBestError, characteristic_time

__all__ = ["BenchConfig", "BenchResult", "BenchError", "bench", "export"]


class BenchError(RuntimeError):
    pass


@dataclass(frozen=True)
class BenchConfig:
    methods: tuple[str, ...]
    reps: int = 200
    delta: float = 0.05
    budget_cap: int = 30000
    grid_step: int = 1000
    base_seed: int = 0
    workers: int = 1
    ci_level: float = 0.95
    wilson: bool = False
    max_error_fraction: float = 0.05
    engine: ExperimentConfig = field(default_factory=ExperimentConfig)


@dataclass
class MethodSummary:
    method: str
    outcomes: list[dict]
    pcs: list[tuple[int, float, float, float]]  # (budget, pcs, ci_lo, ci_hi)
    mean_tau: float
    mean_tau_ci: tuple[float, float]
    effective_mean_tau: float  # capped runs counted at the budget cap
    effective_mean_tau_ci: tuple[float, float]
    median_tau: float
    error_rate: float
    n_capped: int
    n_errors: int
    lb_ratio: float


@dataclass
class BenchResult:
    config: dict
    truth_best: int
    grid: tuple[int, ...]
    methods: dict[str, MethodSummary]
    lower_bound: dict


def _proportion_ci(p: float, n: int, z: float, wilson: bool) -> tuple[float, float]:
    if n == 0:
        return (math.nan, math.nan)
    if wilson:
        denom = 1.0 + z * z / n
        center = (p + z * z / (2 * n)) / denom
        half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
        return (max(center - half, 0.0), min(center + half, 1.0))
    half = z * math.sqrt(p * (1.0 - p) / n)
    return (max(p - half, 0.0), min(p + half, 1.0))


def _run_one(args):
    instance, cfg, method, rep, base_seed, grid = args
    seed = derive_seed(base_seed, rep)
    run_cfg = replace(cfg, method=method, seed=seed)
    try:
        outcome = run_llmpo(instance, run_cfg, grid=grid)
        return (method, rep, None, outcome)
    except Exception as exc:  # replication errors are recorded, not fatal
        return (method, rep, f"{type(exc).__name__}: {exc}", None)


def _lower_bound_info(instance, delta: float) -> dict:
    kl = bern_kl_binary(delta, 1.0 - delta)
    if isinstance(instance, PreferenceInstance):
        try:
            tstar = characteristic_time(instance)
        except (NoUniqueBestError, ValueError):
            return {"surrogate": False, "characteristic_time": math.nan, "kl": kl, "samples": math.nan}
        return {"surrogate": False, "characteristic_time": tstar, "kl": kl, "samples": tstar * kl}
    ustar = surrogate_time(instance.theta, instance.X)
    return {"surrogate": True, "characteristic_time": ustar, "kl": kl, "samples": ustar * kl}


def bench(instance, config: BenchConfig) -> BenchResult:
    """Run `reps` independent replications of each method and aggregate."""
    if config.reps < 1:
        raise ValueError("reps must be >= 1")
    if isinstance(instance, PreferenceInstance):
        truth = best_policy(instance)
    elif isinstance(instance, StructuredModel):
        truth = best_by_score(instance.theta, instance.X)
    else:
        raise TypeError("bench requires a PreferenceInstance or StructuredModel")
    grid = tuple(range(config.grid_step, config.budget_cap + 1, config.grid_step))
    if not grid or grid[-1] != config.budget_cap:
        grid = grid + (config.budget_cap,)
    engine_cfg = replace(config.engine, delta=config.delta, budget_cap=config.budget_cap)

    tasks = [
        (instance, engine_cfg, method, rep, config.base_seed, grid)
        for method in config.methods
        for rep in range(config.reps)
    ]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            raw = list(pool.map(_run_one, tasks, chunksize=8))
    else:
        raw = [_run_one(t) for t in tasks]
    raw.sort(key=lambda r: (config.methods.index(r[0]), r[1]))

    z = NormalDist().inv_cdf(0.5 + config.ci_level / 2.0)
    lb = _lower_bound_info(instance, config.delta)
    summaries: dict[str, MethodSummary] = {}
    for method in config.methods:
        rows = [r for r in raw if r[0] == method]
        errors = [r for r in rows if r[2] is not None]
        ok = [r for r in rows if r[2] is None]
        if len(errors) > config.max_error_fraction * len(rows):
            raise BenchError(
                f"method {method}: {len(errors)}/{len(rows)} replications failed; first: {errors[0][2]}"
            )
        outcomes = []
        for _, rep, _, outcome in ok:
            rec = outcome.to_dict()
            rec["rep"] = rep
            rec["method"] = method
            rec["seed"] = derive_seed(config.base_seed, rep)
            rec["grid_recommendations"] = {str(b): v for b, v in outcome.grid_recommendations.items()}
            outcomes.append(rec)

        n = len(outcomes)
        pcs_rows = []
        for b in grid:
            hits = sum(1 for o in outcomes if o["grid_recommendations"][str(b)] == truth)
            p = hits / n
            lo, hi = _proportion_ci(p, n, z, config.wilson)
            pcs_rows.append((b, p, lo, hi))

        taus = [o["tau"] for o in outcomes if o["tau"] != BUDGET_EXHAUSTED]
        n_capped = n - len(taus)
        if taus:
            mean_tau = float(np.mean(taus))
            sd = float(np.std(taus, ddof=1)) if len(taus) > 1 else 0.0
            half = z * sd / math.sqrt(len(taus))
            ci = (mean_tau - half, mean_tau + half)
            median_tau = float(np.median(taus))
        else:
            mean_tau, ci, median_tau = math.nan, (math.nan, math.nan), math.nan
        wrong = sum(1 for o in outcomes if o["recommended"] != truth)
        eff = np.array(
            [o["tau"] if o["tau"] != BUDGET_EXHAUSTED else config.budget_cap for o in outcomes],
            dtype=float,
        )
        effective_mean = float(eff.mean())
        eff_sd = float(eff.std(ddof=1)) if len(eff) > 1 else 0.0
        eff_half = z * eff_sd / math.sqrt(len(eff))
        lb_ratio = effective_mean / lb["samples"] if lb["samples"] and not math.isnan(lb["samples"]) else math.nan
        summaries[method] = MethodSummary(
            method=method,
            outcomes=outcomes,
            pcs=pcs_rows,
            mean_tau=mean_tau,
            mean_tau_ci=ci,
            effective_mean_tau=effective_mean,
            effective_mean_tau_ci=(effective_mean - eff_half, effective_mean + eff_half),
            median_tau=median_tau,
            error_rate=wrong / n,
            n_capped=n_capped,
            n_errors=len(errors),
            lb_ratio=lb_ratio,
        )

    echo = {
        "methods": list(config.methods),
        "reps": config.reps,
        "delta": config.delta,
        "budget_cap": config.budget_cap,
        "grid_step": config.grid_step,
        "base_seed": config.base_seed,
        "workers": config.workers,
        "ci_level": config.ci_level,
        "wilson": config.wilson,
        "engine": asdict(engine_cfg),
        "instance": instance_to_dict(instance),
    }
    return BenchResult(config=echo, truth_best=truth, grid=grid, methods=summaries, lower_bound=lb)


def _fmt(x: float) -> str:
    return repr(float(x))


def _merge_csv(path: str, header: str, new_rows: list[str], new_methods: set[str]) -> None:
    """Write header + rows; existing rows for other methods are preserved."""
    kept: list[str] = []
    if os.path.exists(path):
        with open(path) as f:
            lines = [ln.rstrip("\n") for ln in f if ln.strip()]
        if lines and lines[0] != header:
            raise BenchError(f"{path}: unexpected header {lines[0]!r}")
        kept = [ln for ln in lines[1:] if ln.split(",", 1)[0] not in new_methods]
    with open(path, "w") as f:
        f.write(header + "\n")
        for ln in kept + new_rows:
            f.write(ln + "\n")


def export(result: BenchResult, out_dir: str) -> dict[str, str]:
    """Write pcs.csv, stopping.csv, runs.jsonl, config.json, lower_bound.json."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {name: os.path.join(out_dir, name) for name in
             ("pcs.csv", "stopping.csv", "runs.jsonl", "config.json", "lower_bound.json")}
    new_methods = set(result.methods)

    pcs_rows = []
    stop_rows = []
    for method, s in result.methods.items():
        for b, p, lo, hi in s.pcs:
            pcs_rows.append(f"{method},{b},{_fmt(p)},{_fmt(lo)},{_fmt(hi)}")
        stop_rows.append(
            f"{method},{_fmt(s.mean_tau)},{_fmt(s.mean_tau_ci[0])},{_fmt(s.mean_tau_ci[1])},"
            f"{_fmt(s.median_tau)},{_fmt(s.error_rate)}"
        )
    try:
        _merge_csv(paths["pcs.csv"], "method,budget,pcs,ci_lo,ci_hi", pcs_rows, new_methods)
        _merge_csv(
            paths["stopping.csv"],
            "method,mean_tau,ci_lo,ci_hi,median_tau,error_rate",
            stop_rows,
            new_methods,
        )
        with open(paths["runs.jsonl"], "a") as f:
            for s in result.methods.values():
                for o in s.outcomes:
                    f.write(json.dumps(o, sort_keys=True) + "\n")
        with open(paths["config.json"], "w") as f:
            json.dump(result.config, f, indent=2, sort_keys=True)
        with open(paths["lower_bound.json"], "w") as f:
            json.dump(
                {
                    "lower_bound": result.lower_bound,
                    "mean_tau_over_bound": {m: s.lb_ratio for m, s in result.methods.items()},
                },
                f,
                indent=2,
                sort_keys=True,
            )
    except OSError as exc:
        raise BenchError(f"export failed at {out_dir}: {exc}") from exc
    return paths
