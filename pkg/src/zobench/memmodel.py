"""Analytic memory footprint model and OOM prediction.

Predicts per-category peak bytes from the architecture and optimizer
choice, using the same parameter layout as the real model, and compares
the total against a device budget. The activation term uses calibrated
constants ALPHA (per-token hidden-state buffers per layer) and BETA
(attention-probability buffers per layer); the seed-replay optimizer is
charged two live layers (streaming evaluation) instead of all L.
"""

from dataclasses import dataclass

from .errors import ConfigError
from .model import ModelConfig, param_count, toy_config

ALPHA = 10  # s*d-sized buffers retained per layer
BETA = 2    # h*s*s-sized attention buffers per layer

BYTES_PER_ELEMENT = {"f16": 2, "f32": 4, "f64": 8}

OPTIMIZERS = ("mezo", "adam", "sgd")


PRESETS = {
    "toy": toy_config(),
    # sequence length 128 assumed for both device-scale presets
    "roberta-large": ModelConfig(vocab_size=50265, dim=1024, layers=24,
                                 heads=16, seq_len=128, classes=2),
    "opt-1.3b": ModelConfig(vocab_size=50272, dim=2048, layers=24,
                            heads=32, seq_len=128, classes=2),
}

GB = 1024 ** 3


@dataclass
class MemoryEstimate:
    categories: dict
    total: int
    budget: int | None = None
    verdict: str | None = None   # "fits" | "oom" when a budget is set
    headroom: int | None = None

    def to_dict(self):
        return {"categories": dict(self.categories), "total": self.total,
                "budget": self.budget, "verdict": self.verdict,
                "headroom": self.headroom}


def resolve_config(preset_or_config):
    if isinstance(preset_or_config, ModelConfig):
        return preset_or_config
    try:
        return PRESETS[preset_or_config]
    except KeyError:
        raise ConfigError(f"unknown preset {preset_or_config!r}; "
                          f"known: {sorted(PRESETS)}") from None


def activation_bytes(config, batch_size, dtype, live_layers):
    e = BYTES_PER_ELEMENT[dtype]
    s, d, h = config.seq_len, config.dim, config.heads
    return e * batch_size * live_layers * (s * d * ALPHA + s * s * h * BETA)


def estimate_footprint(preset_or_config, optimizer, batch_size, dtype="f32",
                       probes=1, parallel_workers=1, budget=None):
    """Per-category byte prediction for one training configuration."""
    config = resolve_config(preset_or_config)
    if optimizer not in OPTIMIZERS:
        raise ConfigError(f"unknown optimizer {optimizer!r}; known: {OPTIMIZERS}")
    if dtype not in BYTES_PER_ELEMENT:
        raise ConfigError(f"unknown dtype {dtype!r}")
    if batch_size < 1:
        raise ConfigError("batch_size must be >= 1")
    e = BYTES_PER_ELEMENT[dtype]
    p = param_count(config)
    cats = {"weights": e * p, "grads": 0, "optstate": 0,
            "activation": 0, "transient": 0, "other": 0}
    if optimizer == "mezo":
        cats["activation"] = activation_bytes(config, batch_size, dtype, 2)
        if parallel_workers > 1:
            cats["transient"] = (parallel_workers - 1) * e * p
    else:
        cats["grads"] = e * p
        if optimizer == "adam":
            cats["optstate"] = 2 * e * p
        cats["activation"] = activation_bytes(config, batch_size, dtype, config.layers)
    total = sum(cats.values())
    est = MemoryEstimate(categories=cats, total=total)
    if budget is not None:
        predict_oom(est, budget)
    return est


def predict_oom(estimate, budget):
    """Fill in and return (verdict, headroom) against a byte budget."""
    if budget <= 0:
        raise ValueError("budget must be > 0")
    estimate.budget = int(budget)
    estimate.headroom = int(budget) - estimate.total
    estimate.verdict = "oom" if estimate.total > budget else "fits"
    return estimate.verdict, estimate.headroom
