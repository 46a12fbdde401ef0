"""Numerical kernels shared by the analytical engine.

Everything here is pure: no global state, caller-owned RNG streams. The
Lambert W evaluator is written out in full (Halley iteration with a
branch-point series start) so the analytical engine carries no special
function dependency.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

INV_E = math.exp(-1.0)

# Branch-point series for W0(x) around x = -1/e, in powers of
# p = sqrt(2*(e*x + 1)).  Corless et al. style coefficients.
_BRANCH_SERIES = (-1.0, 1.0, -1.0 / 3.0, 11.0 / 72.0, -43.0 / 540.0,
                  769.0 / 17280.0, -221.0 / 8505.0)


def _branch_series(p: float) -> float:
    acc = 0.0
    for c in reversed(_BRANCH_SERIES):
        acc = acc * p + c
    return acc


def lambert_w0(x: float) -> float:
    """Principal-branch Lambert W: the w >= -1 with w * exp(w) = x.

    Valid for x >= -1/e; raises ValueError below the branch point. The
    result satisfies |w*exp(w) - x| <= 1e-12 * max(1, |x|).
    """
    x = float(x)
    if math.isnan(x):
        raise ValueError("lambert_w0: NaN input")
    if x < -INV_E:
        if x < -INV_E - 1e-12 * max(1.0, abs(x)):
            raise ValueError(f"lambert_w0: x={x!r} is below the branch point -1/e")
        x = -INV_E
    if x == 0.0:
        return 0.0

    # Initial guess: series near the branch point, log asymptote for large x.
    p2 = 2.0 * (math.e * x + 1.0)
    if p2 < 0.0:
        p2 = 0.0
    p = math.sqrt(p2)
    if p < 1e-4:
        # So close to the branch point that Halley's denominator is ill
        # conditioned; the series alone is already beyond double precision.
        return _branch_series(p)
    if x < -0.2:
        w = _branch_series(p)
    elif x < 1.0:
        w = x * (1.0 - x)      # two-term Taylor, enough to seed Halley
    elif x < math.e:
        w = 0.5
    else:
        l1 = math.log(x)
        l2 = math.log(l1)
        w = l1 - l2 + l2 / l1

    for _ in range(100):
        ew = math.exp(w)
        f = w * ew - x
        if abs(f) <= 1e-13 * max(1.0, abs(x)):
            return w
        wp1 = w + 1.0
        # Halley step; wp1 cannot hit zero here because the branch-point
        # neighbourhood was handled by the series above.
        denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1)
        w -= f / denom
    raise ArithmeticError(f"lambert_w0 failed to converge for x={x!r}")


def discrete_conv(a: Sequence[float], b: Sequence[float]) -> np.ndarray:
    """Full linear convolution of two pmf-like vectors.

    Output length is len(a) + len(b) - 1 and total mass is the product of
    the input masses.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise ValueError("discrete_conv: inputs must be nonempty")
    return np.convolve(a, b)


@dataclass
class FixedPointResult:
    vector: np.ndarray
    iterations: int
    converged: bool
    residual: float


def fixed_point(update: Callable[[np.ndarray], np.ndarray],
                init: Sequence[float],
                tol: float = 1e-7,
                max_iter: int = 100_000) -> FixedPointResult:
    """Iterate v <- update(v) until the max-abs difference drops below tol.

    Non-convergence is reported through the result flag, never silently.
    The returned vector is renormalized to unit sum (it is meant to be a
    probability vector throughout).
    """
    if tol <= 0.0:
        raise ValueError("fixed_point: tol must be positive")
    v = np.asarray(init, dtype=float).copy()
    residual = math.inf
    iterations = 0
    converged = False
    for iterations in range(1, max_iter + 1):
        nxt = np.asarray(update(v), dtype=float)
        residual = float(np.max(np.abs(nxt - v)))
        v = nxt
        if residual <= tol:
            converged = True
            break
    total = v.sum()
    if total > 0.0:
        v = v / total
    return FixedPointResult(vector=v, iterations=iterations,
                            converged=converged, residual=residual)


def sample_exponential(rate: float, rng: np.random.Generator) -> float:
    """One exponential draw by inverse CDF: -ln(u)/rate with u = 1 - rng.random().

    u lies in (0, 1], so the sample is finite and nonnegative; identical
    seeds give identical streams.
    """
    if rate <= 0.0:
        raise ValueError(f"sample_exponential: rate must be positive, got {rate!r}")
    u = 1.0 - rng.random()
    return -math.log(u) / rate


def require_distribution(v: Sequence[float], tol: float = 1e-9) -> np.ndarray:
    """Validate that v is a probability vector (entries in [0,1], unit sum)."""
    v = np.asarray(v, dtype=float)
    if v.size == 0:
        raise ValueError("empty probability vector")
    if np.any(v < -tol) or np.any(v > 1.0 + tol):
        raise ValueError("probability vector has entries outside [0, 1]")
    if abs(float(v.sum()) - 1.0) > tol:
        raise ValueError(f"probability vector sums to {v.sum()!r}, not 1")
    return v
