"""Transmitter-state and accumulator transition matrices, and their joint
fixed point.

The destination combines eligible past copies of the in-flight packet
(generalized selection combining): a copy is kept only if its SNR is at
least z * gamma_th, and kept copies add. The accumulated SNR is
quantized onto a bin grid; a row-stochastic matrix over the bins models
its slot-to-slot evolution during failed slots, a 2x2 matrix models the
transmitter state (source-only vs source+relay), and the relay's
energy-availability probability couples the two. The coupled system is
resolved by nested fixed-point iteration with a damped outer loop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import LinkParams, NetworkConfig, link_params, snr_outage_cdf
from .energy import discharge_split
from .errors import NonConvergenceError, StabilityError
from .numerics import discrete_conv, fixed_point

FIXED_POINT_TOL = 1e-7
MAX_INNER_ITER = 100_000
MAX_OUTER_ITER = 10_000


@dataclass(frozen=True)
class BinGrid:
    """Quantization grid for the accumulated SNR.

    Bin 0 covers [0, z*gamma_th), the sub-threshold region where selection
    combining keeps nothing; bins 1..N-1 split [z*gamma_th, gamma_th] into
    equal slices. Upper edges are affine in the bin index including bin 0:
    upper[j] = z*gamma_th + j*delta.
    """

    selection_fraction: float
    snr_threshold: float
    n_bins: int
    lower: np.ndarray
    upper: np.ndarray

    @property
    def delta(self) -> float:
        return (self.snr_threshold - self.selection_fraction * self.snr_threshold) \
            / (self.n_bins - 1)

    def bin_index(self, value: float) -> int:
        """Bin holding an accumulated-SNR value (values >= threshold clamp
        to the top bin)."""
        lo = self.selection_fraction * self.snr_threshold
        if value < lo:
            return 0
        return min(1 + int((value - lo) / self.delta), self.n_bins - 1)


def build_bins(selection_fraction: float, snr_threshold: float,
               n_bins: int) -> BinGrid:
    if n_bins < 2:
        raise ValueError(f"build_bins: need at least 2 bins, got {n_bins}")
    if not 0.0 <= selection_fraction < 1.0:
        raise ValueError("build_bins: selection fraction must lie in [0, 1)")
    if snr_threshold <= 0.0:
        raise ValueError("build_bins: snr threshold must be positive")
    lo = selection_fraction * snr_threshold
    delta = (snr_threshold - lo) / (n_bins - 1)
    upper = lo + delta * np.arange(n_bins, dtype=float)
    upper[-1] = snr_threshold
    lower = np.concatenate(([0.0], upper[:-1]))
    return BinGrid(selection_fraction=selection_fraction,
                   snr_threshold=snr_threshold, n_bins=n_bins,
                   lower=lower, upper=upper)


def marginal_bin_probs(grid: BinGrid, rate: float) -> np.ndarray:
    """Bin masses of one exponential SNR on the grid, plus a tail entry.

    Entry j (j < N) is P{lower[j] <= snr < upper[j]}; the appended entry
    is the mass at or above the threshold, so the vector sums to one and
    convolution bookkeeping stays exact.
    """
    if rate <= 0.0:
        raise ValueError("marginal_bin_probs: rate must be positive")
    body = np.exp(-rate * grid.lower) - np.exp(-rate * grid.upper)
    tail = math.exp(-rate * grid.snr_threshold)
    return np.concatenate((body, [tail]))


def accumulator_stm(grid: BinGrid, links: LinkParams,
                    energy_ready: float) -> np.ndarray:
    """Transition matrix of the accumulated-SNR bin across one failed slot.

    Row i is assembled from two factors: the probability that neither the
    fresh direct copy nor (with probability ``energy_ready``) the fresh
    relay copy completes the packet from the bin's upper level, times the
    landing distribution of the surviving direct copy over the bins
    (conditioned below the threshold). The diagonal additionally receives
    the ineligible-copy mass (a copy below z*gamma_th is discarded, so the
    accumulator stays put). Rows are renormalized to sum one; the shared
    no-completion factor cancels row-wise, and the top bin, whose
    no-completion factor vanishes, takes the common renormalized shape.
    """
    if not 0.0 <= energy_ready <= 1.0:
        raise ValueError("accumulator_stm: energy_ready must lie in [0, 1]")
    n = grid.n_bins
    landing = marginal_bin_probs(grid, links.sd)
    below = float(landing[:n].sum())
    if below <= 0.0:
        raise ValueError(
            "accumulator_stm: degenerate rows, no direct-copy mass below the "
            "SNR threshold")
    m = landing[:n] / below

    gap = np.maximum(grid.snr_threshold - grid.upper, 0.0)
    sd_fail = -np.expm1(-links.sd * gap)
    relay_miss = 1.0 - energy_ready * np.exp(-links.rd * gap)
    no_complete = sd_fail * relay_miss

    rows = no_complete[:, None] * m[None, :]
    rows[np.diag_indices(n)] += no_complete * m[0]
    sums = rows.sum(axis=1)
    limit = np.tile(m, (n, 1))
    limit[np.diag_indices(n)] += m[0]
    limit /= 1.0 + m[0]
    ok = sums > 0.0
    rows[ok] /= sums[ok, None]
    rows[~ok] = limit[~ok]
    return rows


def transmitter_stm(shortfall_sd: float, shortfall_rd: float,
                    energy_ready: float, links: LinkParams,
                    snr_threshold: float) -> np.ndarray:
    """2x2 transition matrix over the transmitter states.

    State 0: only the source holds the packet; state 1: source and relay
    both do. Leaving state 1 happens when the source's combined attempt
    succeeds, or it falls short while the energized relay's attempt
    succeeds.
    """
    fail_sd = snr_outage_cdf(links.sd, snr_threshold)
    fail_sr = snr_outage_cdf(links.sr, snr_threshold)
    to_s2 = fail_sd * (1.0 - fail_sr)
    leave_s2 = (1.0 - shortfall_sd) \
        + energy_ready * shortfall_sd * (1.0 - shortfall_rd)
    return np.array([[1.0 - to_s2, to_s2],
                     [leave_s2, 1.0 - leave_s2]])


def combining_shortfalls(acc_dist: np.ndarray, sd_probs: np.ndarray,
                         rd_probs: np.ndarray,
                         grid: BinGrid) -> tuple[float, float]:
    """P{accumulated + fresh copy < threshold} for the direct and relay links.

    Convolves the accumulator-bin distribution with a fresh copy's bin
    distribution and keeps the mass of cells whose combined upper edge is
    at or below the threshold. Accumulator bin 0 is special: selection
    combining admits no copy below z*gamma_th, so its mass is an atom at
    level zero and pairs with every fresh cell below the threshold.
    """
    n = grid.n_bins
    acc = np.asarray(acc_dist, dtype=float)
    if acc.size not in (n, n + 1):
        raise ValueError(
            f"combining_shortfalls: accumulator vector length {acc.size} "
            f"does not match the {n}-bin grid")
    out = []
    for fresh in (sd_probs, rd_probs):
        fresh = np.asarray(fresh, dtype=float)
        if fresh.size != n + 1:
            raise ValueError(
                f"combining_shortfalls: fresh-copy vector length {fresh.size} "
                f"does not match the {n}-bin grid")
        total = float(acc[0] * fresh[:n].sum())
        if n >= 2:
            body = discrete_conv(acc[1:n], fresh[:n])
            # Pair (i >= 1, j): combined upper edge = 2*z*g + (i + j)*delta,
            # affine in the convolution index k = (i - 1) + j.
            lo = grid.selection_fraction * grid.snr_threshold
            budget = (grid.snr_threshold - 2.0 * lo) / grid.delta
            kmax = int(math.floor(budget + 1e-9)) - 1
            if kmax >= 0:
                total += float(body[:kmax + 1].sum())
        out.append(min(max(total, 0.0), 1.0))
    return out[0], out[1]


@dataclass(frozen=True)
class StateProbs:
    """Stationary transmitter-state probabilities."""

    p_s: float    # only the source holds the packet
    p_sr: float   # source and relay both hold it

    def __post_init__(self):
        if abs(self.p_s + self.p_sr - 1.0) > 1e-9:
            raise ValueError("StateProbs: probabilities must sum to 1")


@dataclass(frozen=True)
class GscSolution:
    """Converged output of the joint fixed point."""

    state_probs: StateProbs
    accumulator_dist: np.ndarray   # over the N bins
    shortfall_sd: float            # P{accumulated + fresh direct copy < threshold}
    shortfall_rd: float            # P{accumulated + fresh relay copy < threshold}
    direct_outage: float           # P{fresh direct copy alone < threshold}
    energy_ready: float            # P{relay buffer holds a quantum}
    discharge_prob: float          # per-slot relay discharge demand
    outer_iterations: int


def solve_joint(cfg: NetworkConfig, *, check_stability: bool = True) -> GscSolution:
    """Nested fixed point coupling the accumulator chain, the transmitter
    chain, and the relay's energy availability.

    Inner loop: accumulator distribution to stationarity; middle loop:
    transmitter-state vector to stationarity; outer loop: refresh the
    energy-availability probability from the implied discharge demand,
    damped 50/50 against the previous value, until it moves by less than
    the tolerance. Deterministic for a given config.

    When the converged discharge demand cannot keep up with harvesting
    (stability parameter <= 1) the energy-availability formula is invalid;
    that condition is reported as StabilityError unless ``check_stability``
    is disabled, in which case the solution is returned with the
    availability clamped to 1.
    """
    links = link_params(cfg)
    grid = build_bins(cfg.z, cfg.gamma_th, cfg.n_bins)
    sd_probs = marginal_bin_probs(grid, links.sd)
    rd_probs = marginal_bin_probs(grid, links.rd)
    n = grid.n_bins
    uniform = np.full(n, 1.0 / n)

    energy_ready = 0.5
    p = np.array([0.5, 0.5])

    def stage(pu1, p_init):
        t1 = accumulator_stm(grid, links, pu1)
        acc_res = fixed_point(lambda v: v @ t1, uniform,
                              tol=FIXED_POINT_TOL, max_iter=MAX_INNER_ITER)
        if not acc_res.converged:
            raise NonConvergenceError(
                "accumulator chain did not reach stationarity "
                f"(residual {acc_res.residual:.3e})")
        e, g = combining_shortfalls(acc_res.vector, sd_probs, rd_probs, grid)
        t = transmitter_stm(e, g, pu1, links, cfg.gamma_th)
        p_res = fixed_point(lambda v: v @ t, p_init,
                            tol=FIXED_POINT_TOL, max_iter=MAX_INNER_ITER)
        if not p_res.converged:
            raise NonConvergenceError(
                "transmitter chain did not reach stationarity "
                f"(residual {p_res.residual:.3e})")
        return acc_res.vector, e, g, p_res.vector

    outer = 0
    for outer in range(1, MAX_OUTER_ITER + 1):
        acc, e, g, p = stage(energy_ready, p)
        _, demand = discharge_split(p[0], p[1], e, g, cfg.relay_policy)
        if demand > 0.0:
            implied = min(1.0 / (demand * cfg.lambda1 * cfg.M_R), 1.0)
        else:
            implied = 1.0   # never discharged: the buffer only fills
        refreshed = 0.5 * energy_ready + 0.5 * implied
        done = abs(refreshed - energy_ready) < FIXED_POINT_TOL
        energy_ready = refreshed
        if done:
            break
    else:
        raise NonConvergenceError(
            "energy-availability coupling did not converge "
            f"within {MAX_OUTER_ITER} outer iterations")

    acc, e, g, p = stage(energy_ready, p)
    _, demand = discharge_split(p[0], p[1], e, g, cfg.relay_policy)
    psi = cfg.lambda1 * cfg.M_R * demand
    if check_stability and psi <= 1.0:
        raise StabilityError(
            f"relay buffer is not stationary at this config: "
            f"stability parameter {psi:.6g} <= 1")
    return GscSolution(
        state_probs=StateProbs(p_s=float(p[0]), p_sr=float(p[1])),
        accumulator_dist=acc,
        shortfall_sd=e,
        shortfall_rd=g,
        direct_outage=snr_outage_cdf(links.sd, cfg.gamma_th),
        energy_ready=energy_ready,
        discharge_prob=demand,
        outer_iterations=outer,
    )
