"""Self-check routines surfaced on the CLI."""

import numpy as np

from .data import generate_dataset
from .model import backward, finite_diff_gradient, init_model, toy_config


def grad_check(samples=200, h=1e-4, seed=0, batch_size=4, config=None):
    """Backward vs central finite differences on sampled coordinates.

    Runs the toy model in f64. Returns (max_rel_err, checked) where the
    relative error uses a 1e-6 floor so exactly-zero gradients (unused
    embedding rows) compare cleanly."""
    if config is None:
        config = toy_config(dtype="f64")
    params = init_model(config, seed)
    batches = generate_dataset("marker-detect", batch_size, config.vocab_size,
                               config.seq_len, seed + 1, batch_size=batch_size)
    batch = batches[0]
    _, grad = backward(params, batch)
    rng = np.random.default_rng(seed)
    coords = rng.choice(params.param_count, size=samples, replace=False)
    fd = finite_diff_gradient(params, batch, h, coords=coords)
    bp = grad[coords]
    denom = np.maximum(np.maximum(np.abs(fd), np.abs(bp)), 1e-6)
    rel = np.abs(fd - bp) / denom
    return float(rel.max()), len(coords)
