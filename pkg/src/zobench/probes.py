"""Estimator-quality diagnostics for the two-point projected gradient.

Runs the SPSA estimate on a seeded random quadratic, where the true
gradient is known in closed form, and reports how well the probe-mean
direction tracks it and how the estimator variance decays with the
number of probes.
"""

from dataclasses import dataclass

import numpy as np

from .rng import mix64, normal_matrix


@dataclass
class ProbeStatsReport:
    dim: int
    probes: int
    epsilon: float
    cosine: float            # probe-mean direction vs true gradient
    variance_by_count: dict  # n -> mean squared error of an n-probe estimate

    def to_dict(self):
        d = self.__dict__.copy()
        d["variance_by_count"] = {str(k): v for k, v in d["variance_by_count"].items()}
        return d


def cosine(a, b):
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))


def _quadratic(dim, seed):
    """Seeded diagonal quadratic: L(x) = 0.5 * sum a_i (x_i - t_i)^2."""
    rng = np.random.default_rng(mix64(seed, dim))
    scales = rng.uniform(0.5, 2.0, dim)
    theta = rng.normal(size=dim)
    target = rng.normal(size=dim)
    grad = scales * (theta - target)
    return scales, theta, target, grad


def probe_stats(dim, probes, epsilon=1e-3, seed=0):
    """Monte-Carlo consistency report on a seeded random quadratic.

    Each probe really evaluates the loss twice at theta +- eps*z; the
    probe contributions g_k * z_k are then grouped to show the 1/n decay
    of the estimator's squared error."""
    if dim < 2 or probes < 1:
        raise ValueError("need dim >= 2 and probes >= 1")
    scales, theta, target, grad = _quadratic(dim, seed)
    seeds = [mix64(seed, k) for k in range(probes)]
    z = normal_matrix(seeds, dim)                       # [N, dim]
    dp = theta + epsilon * z - target
    dm = theta - epsilon * z - target
    loss_plus = 0.5 * (dp * dp) @ scales                # [N]
    loss_minus = 0.5 * (dm * dm) @ scales
    g = (loss_plus - loss_minus) / (2.0 * epsilon)
    contributions = g[:, None] * z                      # g_k * z_k
    estimate = contributions.mean(axis=0)
    variance_by_count = {}
    n = 1
    while n <= probes:
        groups = probes // n
        grouped = contributions[:groups * n].reshape(groups, n, dim).mean(axis=1)
        err = grouped - grad
        variance_by_count[n] = float((err * err).sum(axis=1).mean())
        n *= 10
    return ProbeStatsReport(dim=dim, probes=probes, epsilon=epsilon,
                            cosine=cosine(estimate, grad),
                            variance_by_count=variance_by_count)
