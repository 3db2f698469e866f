"""Memory-instrumented benchmark of seed-replay zeroth-order fine-tuning
against SGD/Adam baselines on a tiny transformer classifier."""

from .deriv import AdamConfig, AdamState, adam_step, derivative_train_step, sgd_step
from .errors import ConfigError, LedgerError, NumericError, SimulatedOOMError
from .harness import RunConfig, StepRecord, compare_grid, run_experiment
from .ledger import AllocationLedger, NullLedger
from .memmodel import MemoryEstimate, PRESETS, estimate_footprint, predict_oom
from .model import (Batch, ModelConfig, ParameterVector, backward,
                    finite_diff_gradient, forward_loss, init_model, toy_config)
from .rng import mix64, mix_probe_seed, normal_stream, normal_stream_fill
from .zo import ProbeResult, ZoConfig, perturb_in_place, spsa_estimate, zo_step

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
