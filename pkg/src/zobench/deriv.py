"""Derivative-based baselines: SGD and Adam over the backward pass.

These carry the full memory cost the seed-replay method avoids: a flat
gradient buffer (ledger category=grads), Adam's two moment vectors
(category=optstate), and the retained activations of backpropagation
(category=activation, linear in batch size).
"""

from dataclasses import dataclass

import numpy as np

from .ledger import ensure_ledger
from .model import backward


@dataclass
class AdamConfig:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def validate(self):
        if self.lr < 0:
            raise ValueError("lr must be >= 0")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("betas must lie in [0, 1)")
        if self.eps <= 0:
            raise ValueError("eps must be > 0")


class AdamState:
    """First/second moments plus step counter; 2P extra floats."""

    def __init__(self, param_count, dtype=np.float32, ledger=None):
        led = ensure_ledger(ledger)
        itemsize = np.dtype(dtype).itemsize
        self._ledger = led
        self._token = led.acquire("optstate", 2 * param_count * itemsize)
        self.m = np.zeros(param_count, dtype=dtype)
        self.v = np.zeros(param_count, dtype=dtype)
        self.t = 0

    def release(self):
        if self._token is not None:
            self._ledger.release(self._token)
            self._token = None


def adam_step(state, params, grad, config):
    """Standard Adam with bias correction; mutates state and params."""
    values = params.values if hasattr(params, "values") else params
    if len(grad) != len(values):
        raise ValueError("gradient length does not match param count")
    config.validate()
    b1, b2 = config.beta1, config.beta2
    state.t += 1
    state.m += (1.0 - b1) * (grad - state.m)
    state.v += (1.0 - b2) * (grad * grad - state.v)
    mhat = state.m / (1.0 - b1 ** state.t)
    vhat = state.v / (1.0 - b2 ** state.t)
    values -= np.asarray(config.lr * mhat / (np.sqrt(vhat) + config.eps),
                         dtype=values.dtype)


def sgd_step(params, grad, lr):
    values = params.values if hasattr(params, "values") else params
    if len(grad) != len(values):
        raise ValueError("gradient length does not match param count")
    values -= np.asarray(lr * grad, dtype=values.dtype)


def derivative_train_step(params, state, batch, config, ledger=None):
    """One forward+backward plus optimizer update.

    `state` is an AdamState for Adam, None for SGD (config then needs
    only .lr). The gradient buffer lives for the whole step under
    category=grads; a simulated budget can fail the acquire, which is
    the OOM path. Returns (loss, loss_evaluations)."""
    led = ensure_ledger(ledger)
    dtype = params.config.np_dtype
    grad_bytes = params.param_count * np.dtype(dtype).itemsize
    with led.scoped("grads", grad_bytes):
        loss, grad = backward(params, batch, ledger=ledger)
        if state is not None:
            adam_step(state, params, grad, config)
        else:
            sgd_step(params, grad, config.lr)
    return loss, 2  # one forward + one backward
