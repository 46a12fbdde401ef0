"""Small statistics helpers for cross-engine comparison."""

from __future__ import annotations

import math

import numpy as np


def ks_distance(samples: np.ndarray, cdf) -> float:
    """Kolmogorov-Smirnov distance between an empirical sample and a CDF.

    ``cdf`` is a vectorized callable. Classic one-sample statistic:
    sup over the sorted sample of |F_hat - F|, checking both step sides.
    """
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    if n == 0:
        raise ValueError("ks_distance: empty sample")
    f = np.asarray(cdf(x), dtype=float)
    grid = np.arange(n, dtype=float)
    lower = np.max(f - grid / n)
    upper = np.max((grid + 1.0) / n - f)
    return float(max(lower, upper))


def tv_distance(p, q) -> float:
    """Total-variation distance between two finite distributions."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError("tv_distance: shape mismatch")
    return 0.5 * float(np.abs(p - q).sum())


def binomial_ci(successes: int, trials: int,
                z: float = 1.959963984540054) -> tuple[float, float]:
    """Normal-approximation confidence interval for a binomial proportion
    (default 95%)."""
    if trials <= 0:
        raise ValueError("binomial_ci: trials must be positive")
    p = successes / trials
    half = z * math.sqrt(max(p * (1.0 - p), 0.0) / trials)
    return max(p - half, 0.0), min(p + half, 1.0)
