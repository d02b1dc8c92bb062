"""Command-line interface: gen, allocate, run, bench."""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .bench import BenchConfig, bench as run_bench, export as export_bench
from .design import beta_threshold, solve_allocation, surrogate_time
from .estimation import lambda_min, log_det
from .instances import (
    PreferenceInstance,
    StructuredModel,
    gen_structured32,
    gen_unstructured16,
    instance_to_dict,
    load_instance,
)
from .rng import RngState
from .sampler import ExperimentConfig, run_llmpo
from .unstructured import characteristic_time, lower_bound_samples, optimal_allocation


def _add_engine_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--n0", type=int, default=1)
    p.add_argument("--c-prime", type=float, default=0.1)
    p.add_argument("--budget-cap", type=int, default=30000)
    p.add_argument("--threshold-mode", choices=["heuristic", "theoretical"], default="heuristic")
    p.add_argument("--threshold-C", type=float, default=1.0)
    p.add_argument("--check-every", type=int, default=1)
    p.add_argument("--refit-every", type=int, default=1)
    p.add_argument("--design-every", type=int, default=10)
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--alpha", type=float, default=0.51)


def _engine_config(args, method: str = "llm-po", seed: int = 0) -> ExperimentConfig:
    return ExperimentConfig(
        delta=args.delta,
        method=method,
        n0=args.n0,
        c_prime=args.c_prime,
        budget_cap=args.budget_cap,
        threshold_mode=args.threshold_mode,
        threshold_C=args.threshold_C,
        seed=seed,
        check_every=args.check_every,
        refit_every=args.refit_every,
        design_every=args.design_every,
        eps=args.eps,
        alpha=args.alpha,
    )


def _cmd_gen(args) -> int:
    rng = RngState(args.seed)
    if args.kind == "unstructured":
        inst = gen_unstructured16(rng, K=args.K or 16, noise_sd=args.noise_sd)
    else:
        inst = gen_structured32(rng, K=args.K or 32, d=args.d, noise_sd=args.noise_sd_structured)
    payload = json.dumps(instance_to_dict(inst))
    if args.out:
        with open(args.out, "w") as f:
            f.write(payload)
    else:
        print(payload)
    return 0


def _cmd_allocate(args) -> int:
    inst = load_instance(args.instance)
    if isinstance(inst, PreferenceInstance):
        alloc = optimal_allocation(inst)
        tstar = characteristic_time(inst)
        out = {
            "allocation": {f"{i},{j}": w for (i, j), w in sorted(alloc.weights.items())},
            "characteristic_time": tstar,
            "lower_bound_samples": lower_bound_samples(inst, args.delta),
            "delta": args.delta,
        }
    else:
        model: StructuredModel = inst
        alloc = solve_allocation(model.theta, model.X, gamma=args.gamma)
        ustar = surrogate_time(model.theta, model.X)
        betas = []
        t_grid = sorted(int(t) for t in args.t_grid)
        if t_grid:
            # Threshold samples assume counts track the design allocation:
            # V_t ~ t * sum_p omega_p z z^T, gate calibrated at the first t.
            Z = np.array([model.X[i] - model.X[j] for (i, j) in sorted(alloc.weights)])
            w = np.array([alloc.weights[p] for p in sorted(alloc.weights)])
            V1 = (Z * w[:, None]).T @ Z
            t0 = t_grid[0]
            c = 0.5 * lambda_min(t0 * V1) / np.sqrt(t0)
            for t in t_grid:
                betas.append(
                    {
                        "t": t,
                        "beta": beta_threshold(
                            args.delta, t, log_det(t * V1), model.d, c, t0,
                            t ** -0.5, model.B, model.L,
                        ),
                    }
                )
        out = {
            "allocation": {f"{i},{j}": w for (i, j), w in sorted(alloc.weights.items())},
            "surrogate_time": ustar,
            "beta_samples": betas,
            "delta": args.delta,
        }
    print(json.dumps(out, indent=2))
    return 0


def _cmd_run(args) -> int:
    inst = load_instance(args.instance)
    cfg = _engine_config(args, method=args.method, seed=args.seed)
    trace_f = open(args.trace, "w") if args.trace else None
    trace = (lambda rec: trace_f.write(json.dumps(rec) + "\n")) if trace_f else None
    try:
        outcome = run_llmpo(inst, cfg, trace=trace)
    finally:
        if trace_f:
            trace_f.close()
    print(json.dumps(outcome.to_dict()))
    return 0


def _cmd_bench(args) -> int:
    inst = load_instance(args.instance)
    cfg = BenchConfig(
        methods=tuple(args.methods.split(",")),
        reps=args.reps,
        delta=args.delta,
        budget_cap=args.budget_cap,
        grid_step=args.grid_step,
        base_seed=args.base_seed,
        workers=args.workers,
        ci_level=args.ci_level,
        wilson=args.wilson,
        engine=_engine_config(args),
    )
    result = run_bench(inst, cfg)
    paths = export_bench(result, args.out)
    summary = {
        m: {"mean_tau": s.mean_tau, "error_rate": s.error_rate, "capped": s.n_capped}
        for m, s in result.methods.items()
    }
    print(json.dumps({"out": paths, "summary": summary}, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="prefopt")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic instance")
    g.add_argument("--kind", choices=["unstructured", "structured"], required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--K", type=int, default=None)
    g.add_argument("--d", type=int, default=6)
    g.add_argument("--noise-sd", type=float, default=0.005)
    g.add_argument("--noise-sd-structured", type=float, default=0.25)
    g.add_argument("--out", default=None)
    g.set_defaults(func=_cmd_gen)

    a = sub.add_parser("allocate", help="print the optimal allocation for an instance")
    a.add_argument("--instance", required=True)
    a.add_argument("--delta", type=float, default=0.05)
    a.add_argument("--gamma", type=float, default=0.0)
    a.add_argument("--t-grid", nargs="*", type=int, default=[])
    a.set_defaults(func=_cmd_allocate)

    r = sub.add_parser("run", help="run one adaptive experiment")
    r.add_argument("--instance", required=True)
    r.add_argument("--method", default="llm-po")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--trace", default=None)
    _add_engine_flags(r)
    r.set_defaults(func=_cmd_run)

    b = sub.add_parser("bench", help="replication benchmark with CSV export")
    b.add_argument("--instance", required=True)
    b.add_argument("--methods", default="llm-po")
    b.add_argument("--reps", type=int, default=200)
    b.add_argument("--grid-step", type=int, default=1000)
    b.add_argument("--base-seed", type=int, default=0)
    b.add_argument("--workers", type=int, default=1)
    b.add_argument("--ci-level", type=float, default=0.95)
    b.add_argument("--wilson", action="store_true")
    b.add_argument("--out", required=True)
    _add_engine_flags(b)
    b.set_defaults(func=_cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
