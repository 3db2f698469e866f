"""Seed-replay SPSA optimizer.

One probe perturbs the parameters in place along a random direction z
regenerated chunk-by-chunk from a 64-bit seed, evaluates the loss at
theta + eps*z and theta - eps*z, and restores. Extra memory is one chunk
buffer regardless of parameter count; no gradient or optimizer state is
ever materialized. Multi-probe averaging reduces estimator variance and
can run probes on a worker pool (one parameter replica per worker).
"""

import os
import threading
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .ledger import ensure_ledger
from .rng import mix_probe_seed, normal_chunks

CHUNK = 8192


@dataclass
class ZoConfig:
    epsilon: float = 1e-3
    lr: float = 1e-3
    probes: int = 1
    parallel: bool = False
    seed_base: int = 0
    workers: int | None = None  # parallel mode only; None = min(probes, cpus)
    chunk: int = CHUNK

    def validate(self):
        if self.epsilon <= 0:
            raise ConfigError("epsilon must be > 0")
        if self.lr < 0:
            raise ConfigError("lr must be >= 0")
        if self.probes < 1:
            raise ConfigError("probes must be >= 1")
        if self.chunk < 1:
            raise ConfigError("chunk must be >= 1")


@dataclass
class ProbeResult:
    seed: int
    projected_grad: float
    loss_plus: float
    loss_minus: float


@dataclass
class ZoStepResult:
    loss: float                 # mean of (l+ + l-)/2 over probes
    loss_evaluations: int       # exactly 2 * probes
    probes: list


def _values(params):
    return params.values if hasattr(params, "values") else params


def perturb_in_place(params, seed, scale, chunk=CHUNK, ledger=None, direction=None):
    """theta_i += scale * z_i with z regenerated in fixed-size chunks.

    `direction` overrides the seeded stream with an explicit z (tests)."""
    values = _values(params)
    if scale == 0:
        return
    led = ensure_ledger(ledger)
    n = len(values)
    itemsize = values.dtype.itemsize
    with led.scoped("transient", min(chunk, n) * itemsize):
        if direction is None:
            for start, z in normal_chunks(seed, n, chunk):
                z *= scale
                values[start:start + len(z)] += np.asarray(z, dtype=values.dtype)
        else:
            for start in range(0, n, chunk):
                stop = min(start + chunk, n)
                z = scale * direction[start:stop]
                values[start:stop] += np.asarray(z, dtype=values.dtype)


def spsa_estimate(params, loss_fn, epsilon, seed, chunk=CHUNK, ledger=None,
                  direction=None):
    """Two-point projected-gradient estimate g = (l+ - l-) / (2 eps).

    Runs perturb(+eps) -> l+ -> perturb(-2 eps) -> l- -> perturb(+eps);
    exactly two loss evaluations, parameters restored up to float
    rounding. On error the perturbation applied so far is undone."""
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    applied = 0.0
    try:
        perturb_in_place(params, seed, +epsilon, chunk, ledger, direction)
        applied = +epsilon
        loss_plus = loss_fn(params)
        perturb_in_place(params, seed, -2.0 * epsilon, chunk, ledger, direction)
        applied = -epsilon
        loss_minus = loss_fn(params)
        perturb_in_place(params, seed, +epsilon, chunk, ledger, direction)
        applied = 0.0
    except Exception:
        if applied != 0.0:
            perturb_in_place(params, seed, -applied, chunk, ledger, direction)
        raise
    g = (loss_plus - loss_minus) / (2.0 * epsilon)
    return ProbeResult(seed=seed, projected_grad=g,
                       loss_plus=loss_plus, loss_minus=loss_minus)


def _drift_cycle(params, seed, epsilon, chunk, ledger):
    """Replay the perturb/restore arithmetic of one probe without
    evaluating the loss; reproduces the rounding drift bit for bit."""
    perturb_in_place(params, seed, +epsilon, chunk, ledger)
    perturb_in_place(params, seed, -2.0 * epsilon, chunk, ledger)
    perturb_in_place(params, seed, +epsilon, chunk, ledger)


def _apply_update(params, results, lr, probes, chunk, ledger):
    """theta -= (lr/n) * sum_k g_k * z_k, streaming z in chunks with a
    fixed (chunk outer, probe inner) order shared by both modes."""
    values = _values(params)
    n = len(values)
    led = ensure_ledger(ledger)
    steps = [(lr / probes) * res.projected_grad for res in results]
    streams = [normal_chunks(res.seed, n, chunk) for res in results]
    with led.scoped("transient", min(chunk, n) * values.dtype.itemsize):
        for start in range(0, n, chunk):
            for step, stream in zip(steps, streams):
                _, z = next(stream)
                z *= -step
                values[start:start + len(z)] += np.asarray(z, dtype=values.dtype)


def zo_step(params, loss_fn, config, step_index, ledger=None,
            directions=None):
    """One optimizer step: n probes, averaged seed-replay update.

    `directions` (tests only) supplies explicit z vectors per probe.
    Returns a ZoStepResult; on a numeric failure the parameters are left
    restored to their pre-step values and the error propagates."""
    config.validate()
    if config.parallel:
        return zo_step_parallel(params, loss_fn, config, step_index, ledger)
    if config.probes == 1 and directions is None:
        return _zo_step_single(params, loss_fn, config, step_index, ledger)
    results = []
    for k in range(config.probes):
        seed = mix_probe_seed(config.seed_base, step_index, k)
        direction = directions[k] if directions is not None else None
        results.append(spsa_estimate(params, loss_fn, config.epsilon, seed,
                                     config.chunk, ledger, direction))
    if directions is None:
        _apply_update(params, results, config.lr, config.probes, config.chunk, ledger)
    else:
        values = _values(params)
        for k, res in enumerate(results):
            values -= np.asarray((config.lr / config.probes) * res.projected_grad
                                 * directions[k], dtype=values.dtype)
    loss = float(np.mean([(r.loss_plus + r.loss_minus) / 2.0 for r in results]))
    return ZoStepResult(loss=loss, loss_evaluations=2 * config.probes, probes=results)


def _zo_step_single(params, loss_fn, config, step_index, ledger):
    """Single-probe step with the restore and the update fused.

    After l- the parameters sit at theta - eps*z, so restore plus update
    collapse into one pass theta += (eps - lr*g) * z, saving one full
    regeneration of z per step without changing the estimate."""
    eps = config.epsilon
    seed = mix_probe_seed(config.seed_base, step_index, 0)
    applied = 0.0
    try:
        perturb_in_place(params, seed, +eps, config.chunk, ledger)
        applied = +eps
        loss_plus = loss_fn(params)
        perturb_in_place(params, seed, -2.0 * eps, config.chunk, ledger)
        applied = -eps
        loss_minus = loss_fn(params)
        g = (loss_plus - loss_minus) / (2.0 * eps)
        perturb_in_place(params, seed, eps - config.lr * g, config.chunk, ledger)
    except Exception:
        if applied != 0.0:
            perturb_in_place(params, seed, -applied, config.chunk, ledger)
        raise
    probe = ProbeResult(seed=seed, projected_grad=g,
                        loss_plus=loss_plus, loss_minus=loss_minus)
    loss = (loss_plus + loss_minus) / 2.0
    return ZoStepResult(loss=loss, loss_evaluations=2, probes=[probe])


class _ArrayReplica:
    """Ledger-tracked private copy of a bare parameter array."""

    def __init__(self, values, ledger):
        self._ledger = ensure_ledger(ledger)
        self._token = self._ledger.acquire("transient", values.nbytes)
        self.values = values.copy()

    def release(self):
        self._ledger.release(self._token)


def _make_replica(params, ledger):
    if hasattr(params, "clone"):
        return params.clone(ledger=ledger, category="transient")
    return _ArrayReplica(_values(params), ledger)


def zo_step_parallel(params, loss_fn, config, step_index, ledger=None):
    """Parallel probes, numerically identical to the serial step.

    W worker threads each hold one private parameter replica (ledger
    category=transient) for the whole step and share the probes round
    robin. Serial probes see the tiny rounding drift left by earlier
    restores, so a replica replays the perturb/restore arithmetic of all
    earlier probes before evaluating its own; results combine in seed
    order on the caller's thread, matching serial bit for bit."""
    config.validate()
    if config.probes < 2:
        raise ValueError("parallel mode needs probes >= 2")
    n = config.probes
    seeds = [mix_probe_seed(config.seed_base, step_index, k) for k in range(n)]
    workers = min(config.workers or (os.cpu_count() or 1), n)
    results = [None] * n
    failures = []
    # all replicas must coexist before any evaluation so the transient
    # footprint is exactly one replica per worker, not schedule-dependent
    ready = threading.Barrier(workers)

    def worker(w):
        try:
            replica = _make_replica(params, ledger)
        except Exception as exc:
            failures.append(exc)
            ready.abort()
            return
        try:
            ready.wait()
            done_through = -1  # last probe whose drift the replica carries
            for k in range(w, n, workers):
                for j in range(done_through + 1, k):
                    _drift_cycle(replica, seeds[j], config.epsilon, config.chunk, ledger)
                results[k] = spsa_estimate(replica, loss_fn, config.epsilon,
                                           seeds[k], config.chunk, ledger)
                done_through = k
        except threading.BrokenBarrierError:
            pass
        except Exception as exc:  # surfaced after join
            failures.append(exc)
            ready.abort()
        finally:
            replica.release()

    threads = [threading.Thread(target=worker, args=(w,)) for w in range(workers)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if failures:
        raise failures[0]
    # bring the caller's params to the same drifted state serial ends in
    for seed in seeds:
        _drift_cycle(params, seed, config.epsilon, config.chunk, ledger)
    _apply_update(params, results, config.lr, n, config.chunk, ledger)
    loss = float(np.mean([(r.loss_plus + r.loss_minus) / 2.0 for r in results]))
    return ZoStepResult(loss=loss, loss_evaluations=2 * n, probes=results)
