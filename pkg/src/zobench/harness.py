"""Experiment runner: config parsing, training loops, reports, grids."""

import json
import os
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .data import generate_dataset
from .deriv import AdamConfig, AdamState, derivative_train_step
from .errors import ConfigError, NumericError, SimulatedOOMError
from .ledger import AllocationLedger
from .memmodel import PRESETS, resolve_config
from .model import ModelConfig, forward_loss, init_model
from .zo import ZoConfig, zo_step

CSV_HEADER = ("step,loss,loss_evaluations,elapsed_ms,peak_weights,peak_grads,"
              "peak_optstate,peak_activation,peak_transient,peak_total")

OPT_KINDS = ("mezo", "adam", "sgd")

# frozen defaults for the toy fine-tuning task
DEFAULT_LR = {"mezo": 2e-2, "adam": 1e-4, "sgd": 1e-1}
DEFAULT_EPSILON = 1e-3


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=lambda: PRESETS["toy"])
    opt_kind: str = "mezo"
    lr: float | None = None          # None -> per-optimizer default
    epsilon: float = DEFAULT_EPSILON
    probes: int = 1
    parallel: bool = False
    workers: int | None = None
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 8
    steps: int = 10
    seed: int = 0                    # model init + optimizer seed base
    task: str = "marker-detect"
    data_size: int = 512
    data_seed: int = 1
    simulated_budget: int | None = None
    out_dir: str | None = None

    def __post_init__(self):
        if self.opt_kind not in OPT_KINDS:
            raise ConfigError(f"unknown optimizer {self.opt_kind!r}; known: {OPT_KINDS}")
        if self.steps < 1 or self.batch_size < 1:
            raise ConfigError("steps and batch_size must be >= 1")
        if self.data_size < self.batch_size:
            raise ConfigError("data.size must be >= train.batch_size")
        if self.lr is None:
            self.lr = DEFAULT_LR[self.opt_kind]

    def echo(self):
        d = {k: v for k, v in self.__dict__.items() if k != "model"}
        d["model"] = self.model.__dict__.copy()
        return d


_CONFIG_KEYS = {
    "model.preset": str, "model.vocab": int, "model.dim": int,
    "model.layers": int, "model.heads": int, "model.seq_len": int,
    "model.classes": int, "model.dtype": str,
    "opt.kind": str, "opt.lr": float, "opt.epsilon": float,
    "opt.probes": int, "opt.parallel": bool, "opt.workers": int,
    "opt.beta1": float, "opt.beta2": float, "opt.eps": float,
    "train.batch_size": int, "train.steps": int, "train.seed": int,
    "data.task": str, "data.size": int, "data.seed": int,
    "budget.bytes": int,
    "report.out_dir": str,
}


def _parse_bool(text):
    if text.lower() in ("true", "1", "yes", "on"):
        return True
    if text.lower() in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def parse_config_text(text):
    """Flat key=value config with dotted keys; unknown keys are errors."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        kind = _CONFIG_KEYS[key]
        try:
            values[key] = _parse_bool(val) if kind is bool else kind(val)
        except ValueError:
            raise ConfigError(f"line {lineno}: bad value for {key}: {val!r}") from None
    return config_from_keys(values)


def parse_config_file(path):
    with open(path) as fh:
        return parse_config_text(fh.read())


def config_from_keys(values):
    values = dict(values)
    if "model.preset" in values:
        model = resolve_config(values.pop("model.preset"))
        for k in list(values):
            if k.startswith("model."):
                raise ConfigError(f"{k} conflicts with model.preset")
    else:
        base = PRESETS["toy"]
        model = ModelConfig(
            vocab_size=values.pop("model.vocab", base.vocab_size),
            dim=values.pop("model.dim", base.dim),
            layers=values.pop("model.layers", base.layers),
            heads=values.pop("model.heads", base.heads),
            seq_len=values.pop("model.seq_len", base.seq_len),
            classes=values.pop("model.classes", base.classes),
            dtype=values.pop("model.dtype", base.dtype),
        )
    kw = dict(model=model)
    mapping = {
        "opt.kind": "opt_kind", "opt.lr": "lr", "opt.epsilon": "epsilon",
        "opt.probes": "probes", "opt.parallel": "parallel", "opt.workers": "workers",
        "opt.beta1": "beta1", "opt.beta2": "beta2", "opt.eps": "adam_eps",
        "train.batch_size": "batch_size", "train.steps": "steps", "train.seed": "seed",
        "data.task": "task", "data.size": "data_size", "data.seed": "data_seed",
        "budget.bytes": "simulated_budget", "report.out_dir": "out_dir",
    }
    for key, attr in mapping.items():
        if key in values:
            kw[attr] = values.pop(key)
    if values:
        raise ConfigError(f"unknown keys: {sorted(values)}")
    return RunConfig(**kw)


@dataclass
class StepRecord:
    step: int
    loss: float
    loss_evaluations: int
    elapsed_ms: float
    peaks: dict  # ledger peak snapshot (bytes per category + total)

    def csv_row(self):
        p = self.peaks
        return (f"{self.step},{self.loss!r},{self.loss_evaluations},"
                f"{self.elapsed_ms!r},{p['weights']},{p['grads']},{p['optstate']},"
                f"{p['activation']},{p['transient']},{p['total']}")


@dataclass
class RunReport:
    config: dict
    records: list
    verdict: str          # "ok" | "oom" | "numeric-error"
    oom_step: int | None
    peaks: dict
    wall_time_ms: float
    final_loss: float | None
    timing_ms: dict       # min/mean/max over steps (first step excluded)
    environment: dict

    def to_dict(self):
        return {
            "config": self.config,
            "verdict": self.verdict,
            "oom_step": self.oom_step,
            "steps_completed": len(self.records),
            "final_loss": self.final_loss,
            "wall_time_ms": self.wall_time_ms,
            "timing_ms": self.timing_ms,
            "peaks": self.peaks,
            "environment": self.environment,
            "records": [r.__dict__ for r in self.records],
        }


def _timing_summary(records):
    # first step excluded as warm-up when there is more than one
    times = [r.elapsed_ms for r in records]
    if len(times) > 1:
        times = times[1:]
    if not times:
        return {"min": None, "mean": None, "max": None}
    return {"min": min(times), "mean": sum(times) / len(times), "max": max(times)}


def run_experiment(config, write_files=True):
    """Run the training loop for one configuration and report on it."""
    ledger = AllocationLedger(config.simulated_budget)
    records = []
    verdict, oom_step, final_loss = "ok", None, None
    wall_start = time.perf_counter()
    try:
        params = init_model(config.model, config.seed, ledger)
        batches = generate_dataset(config.task, config.data_size,
                                   config.model.vocab_size, config.model.seq_len,
                                   config.data_seed, batch_size=config.batch_size,
                                   classes=config.model.classes)
        if config.opt_kind == "mezo":
            zcfg = ZoConfig(epsilon=config.epsilon, lr=config.lr,
                            probes=config.probes, parallel=config.parallel,
                            seed_base=config.seed, workers=config.workers)
        elif config.opt_kind == "adam":
            acfg = AdamConfig(lr=config.lr, beta1=config.beta1,
                              beta2=config.beta2, eps=config.adam_eps)
            state = AdamState(params.param_count, config.model.np_dtype, ledger)
        else:
            acfg = AdamConfig(lr=config.lr)
            state = None
        for step in range(config.steps):
            batch = batches[step % len(batches)]
            t0 = time.perf_counter()
            if config.opt_kind == "mezo":
                def loss_fn(p, _b=batch):
                    return forward_loss(p, _b, ledger)
                res = zo_step(params, loss_fn, zcfg, step, ledger)
                loss, evals = res.loss, res.loss_evaluations
            else:
                loss, evals = derivative_train_step(params, state, batch, acfg, ledger)
            elapsed_ms = (time.perf_counter() - t0) * 1e3
            records.append(StepRecord(step, loss, evals, elapsed_ms,
                                      ledger.peak_snapshot()))
            final_loss = loss
    except SimulatedOOMError:
        verdict = "oom"
        oom_step = len(records) + 1
    except NumericError:
        verdict = "numeric-error"
        oom_step = None
    wall_time_ms = (time.perf_counter() - wall_start) * 1e3
    report = RunReport(
        config=config.echo(), records=records, verdict=verdict, oom_step=oom_step,
        peaks=ledger.peak_snapshot() if verdict == "ok" else {},
        wall_time_ms=wall_time_ms, final_loss=final_loss,
        timing_ms=_timing_summary(records),
        environment={"threads": os.cpu_count(), "dtype": config.model.dtype},
    )
    if write_files and config.out_dir:
        write_report_files(report, config.out_dir)
    return report


def write_report_files(report, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "steps.csv"), "w") as fh:
        fh.write(CSV_HEADER + "\n")
        for rec in report.records:
            fh.write(rec.csv_row() + "\n")
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(report.to_dict(), fh, indent=2)
        fh.write("\n")
    # gnuplot-compatible loss trajectory: "step loss"
    with open(os.path.join(out_dir, "loss.dat"), "w") as fh:
        for rec in report.records:
            fh.write(f"{rec.step} {rec.loss!r}\n")


@dataclass
class GridCell:
    optimizer: str
    batch_size: int
    verdict: str
    oom_step: int | None
    peak_total: int | None
    mean_step_ms: float | None
    final_loss: float | None

    def csv_row(self):
        if self.verdict != "ok":
            return (f"{self.optimizer},{self.batch_size},OOM,OOM,OOM,"
                    f"{self.oom_step}")
        return (f"{self.optimizer},{self.batch_size},{self.peak_total},"
                f"{self.mean_step_ms!r},{self.final_loss!r},")


GRID_CSV_HEADER = "optimizer,batch_size,peak_total,mean_step_ms,final_loss,oom_step"


def compare_grid(base_config, optimizers, batch_sizes, out_dir=None,
                 parallel_cells=False):
    """One run per (optimizer, batch size) cell; OOM cells render as the
    literal string OOM with the failing step, never partial numbers."""
    cells_cfg = [(opt, bsz) for bsz in batch_sizes for opt in optimizers]

    def run_cell(opt_bsz):
        opt, bsz = opt_bsz
        cfg = replace(base_config, opt_kind=opt, batch_size=bsz,
                      lr=None if opt != base_config.opt_kind else base_config.lr,
                      out_dir=None)
        report = run_experiment(cfg, write_files=False)
        if report.verdict != "ok":
            return GridCell(opt, bsz, report.verdict, report.oom_step,
                            None, None, None)
        return GridCell(opt, bsz, "ok", None, report.peaks["total"],
                        report.timing_ms["mean"], report.final_loss)

    if parallel_cells:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor() as pool:
            cells = list(pool.map(run_cell, cells_cfg))
    else:
        cells = [run_cell(c) for c in cells_cfg]
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "grid.csv"), "w") as fh:
            fh.write(GRID_CSV_HEADER + "\n")
            for cell in cells:
                fh.write(cell.csv_row() + "\n")
        with open(os.path.join(out_dir, "grid.json"), "w") as fh:
            json.dump([c.__dict__ for c in cells], fh, indent=2)
            fh.write("\n")
    return cells
