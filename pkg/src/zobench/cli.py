"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 simulated/predicted OOM,
4 numeric or check failure.
"""

import argparse
import json
import sys
from dataclasses import replace

from .checks import grad_check
from .errors import ConfigError, NumericError, SimulatedOOMError
from .harness import RunConfig, compare_grid, parse_config_file, run_experiment
from .memmodel import GB, estimate_footprint, predict_oom
from .probes import probe_stats

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_OOM = 3
EXIT_NUMERIC = 4


def _build_parser():
    parser = argparse.ArgumentParser(prog="zobench",
                                     description="Derivative-free vs derivative-based "
                                                 "fine-tuning benchmark")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one training experiment")
    p_run.add_argument("--config", help="key=value config file")
    p_run.add_argument("--optimizer", choices=("mezo", "adam", "sgd"))
    p_run.add_argument("--batch-size", type=int)
    p_run.add_argument("--steps", type=int)
    p_run.add_argument("--probes", type=int)
    p_run.add_argument("--parallel", action="store_true", default=None)
    p_run.add_argument("--lr", type=float)
    p_run.add_argument("--epsilon", type=float)
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--data-seed", type=int)
    p_run.add_argument("--task", choices=("marker-detect", "parity"))
    p_run.add_argument("--data-size", type=int)
    p_run.add_argument("--budget-bytes", type=int)
    p_run.add_argument("--out-dir")

    p_cmp = sub.add_parser("compare", help="optimizer x batch-size grid")
    p_cmp.add_argument("--optimizers", default="mezo,adam")
    p_cmp.add_argument("--batch-sizes", default="8,64")
    p_cmp.add_argument("--steps", type=int, default=10)
    p_cmp.add_argument("--probes", type=int, default=1)
    p_cmp.add_argument("--seed", type=int, default=0)
    p_cmp.add_argument("--budget-bytes", type=int)
    p_cmp.add_argument("--out-dir")
    p_cmp.add_argument("--parallel-cells", action="store_true")

    p_mem = sub.add_parser("estimate-mem", help="analytic footprint + OOM verdict")
    p_mem.add_argument("--preset", default="toy")
    p_mem.add_argument("--optimizer", choices=("mezo", "adam", "sgd"), default="mezo")
    p_mem.add_argument("--batch-size", type=int, default=8)
    p_mem.add_argument("--dtype", default="f32")
    p_mem.add_argument("--probes", type=int, default=1)
    p_mem.add_argument("--workers", type=int, default=1)
    p_mem.add_argument("--budget-gb", type=float)
    p_mem.add_argument("--budget-bytes", type=int)
    p_mem.add_argument("--json", action="store_true")

    p_grad = sub.add_parser("grad-check", help="backward vs finite differences")
    p_grad.add_argument("--samples", type=int, default=200)
    p_grad.add_argument("--h", type=float, default=1e-4)
    p_grad.add_argument("--seed", type=int, default=0)
    p_grad.add_argument("--tolerance", type=float, default=1e-4)

    p_probe = sub.add_parser("probe-stats", help="SPSA estimator quality report")
    p_probe.add_argument("--dim", type=int, default=50)
    p_probe.add_argument("--probes", type=int, default=1000)
    p_probe.add_argument("--epsilon", type=float, default=1e-3)
    p_probe.add_argument("--seed", type=int, default=0)
    return parser


def _cmd_run(args):
    config = parse_config_file(args.config) if args.config else RunConfig()
    overrides = {
        "opt_kind": args.optimizer, "batch_size": args.batch_size,
        "steps": args.steps, "probes": args.probes, "parallel": args.parallel,
        "lr": args.lr, "epsilon": args.epsilon, "seed": args.seed,
        "data_seed": args.data_seed, "task": args.task, "data_size": args.data_size,
        "simulated_budget": args.budget_bytes, "out_dir": args.out_dir,
    }
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if overrides.get("opt_kind") and "lr" not in overrides:
        overrides["lr"] = None  # re-derive the per-optimizer default
    config = replace(config, **overrides)
    report = run_experiment(config)
    print(json.dumps(report.to_dict(), indent=2))
    if report.verdict == "oom":
        return EXIT_OOM
    if report.verdict == "numeric-error":
        return EXIT_NUMERIC
    return EXIT_OK


def _cmd_compare(args):
    base = RunConfig(steps=args.steps, probes=args.probes, seed=args.seed,
                     simulated_budget=args.budget_bytes)
    optimizers = [s.strip() for s in args.optimizers.split(",") if s.strip()]
    batch_sizes = [int(s) for s in args.batch_sizes.split(",") if s.strip()]
    cells = compare_grid(base, optimizers, batch_sizes, out_dir=args.out_dir,
                         parallel_cells=args.parallel_cells)
    for cell in cells:
        mem = "OOM" if cell.verdict != "ok" else f"{cell.peak_total} B"
        tme = "OOM" if cell.verdict != "ok" else f"{cell.mean_step_ms:.2f} ms/step"
        print(f"{cell.optimizer:>5s}  B={cell.batch_size:<4d} {mem:>14s}  {tme}")
    return EXIT_OK


def _cmd_estimate_mem(args):
    budget = args.budget_bytes
    if args.budget_gb is not None:
        budget = int(args.budget_gb * GB)
    est = estimate_footprint(args.preset, args.optimizer, args.batch_size,
                             dtype=args.dtype, probes=args.probes,
                             parallel_workers=args.workers)
    if budget is not None:
        predict_oom(est, budget)
    if args.json:
        print(json.dumps(est.to_dict(), indent=2))
    else:
        for cat, nbytes in est.categories.items():
            print(f"{cat:>11s}: {nbytes / GB:10.4f} GB  ({nbytes} B)")
        print(f"{'total':>11s}: {est.total / GB:10.4f} GB  ({est.total} B)")
        if budget is not None:
            print(f"{'budget':>11s}: {est.budget / GB:10.4f} GB  "
                  f"verdict={est.verdict}  headroom={est.headroom} B")
    if est.verdict == "oom":
        return EXIT_OOM
    return EXIT_OK


def _cmd_grad_check(args):
    max_rel, checked = grad_check(samples=args.samples, h=args.h, seed=args.seed)
    ok = max_rel <= args.tolerance
    print(f"grad-check: {checked} coordinates, max relative error {max_rel:.3e} "
          f"(tolerance {args.tolerance:.0e}) -> {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_NUMERIC


def _cmd_probe_stats(args):
    report = probe_stats(args.dim, args.probes, epsilon=args.epsilon, seed=args.seed)
    print(f"dim={report.dim} probes={report.probes} epsilon={report.epsilon}")
    print(f"cosine(probe-mean direction, true gradient) = {report.cosine:.6f}")
    print("squared-error vs probe count (expect ~1/n):")
    for n, var in report.variance_by_count.items():
        print(f"  n={n:>7d}  mse={var:.6e}")
    return EXIT_OK


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {"run": _cmd_run, "compare": _cmd_compare,
                "estimate-mem": _cmd_estimate_mem, "grad-check": _cmd_grad_check,
                "probe-stats": _cmd_probe_stats}
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulatedOOMError as exc:
        print(f"simulated OOM: {exc}", file=sys.stderr)
        return EXIT_OOM
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
