"""Closed-form failure probability and the assembled analytical report."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .channel import LinkParams, NetworkConfig, link_params
from .energy import (BufferPdf, buffer_distribution, discharge_split,
                     energy_ready_probability, stability_parameter)
from .errors import NonConvergenceError, StabilityError
from .stm import GscSolution, solve_joint


def failure_probability(p_s: float, p_sr: float, shortfall_sd: float,
                        shortfall_rd: float, energy_ready: float,
                        rate_sd: float, snr_threshold: float) -> float:
    """Per-slot probability that no packet reaches the destination.

    Source-only slots fail when the fresh direct copy is below threshold.
    Source+relay slots fail when the source's combined attempt falls short
    and the relay either lacks energy or its combined attempt falls short
    too.
    """
    direct_outage = -math.expm1(-rate_sd * snr_threshold)
    relay_term = shortfall_rd * energy_ready + 1.0 - energy_ready
    return p_s * direct_outage + p_sr * shortfall_sd * relay_term


@dataclass(frozen=True)
class TheoryReport:
    """Every analytical quantity for one config, in one auditable bundle."""

    config: NetworkConfig
    links: LinkParams
    solution: GscSolution
    hold_prob: float        # complement of the discharge demand
    discharge_prob: float
    stability: float        # lambda1 * M_R * discharge_prob
    energy_ready: float     # stationary P{buffer >= M_R}
    buffer: BufferPdf
    fp: float               # per-slot failure probability


def theory_report(cfg: NetworkConfig) -> TheoryReport:
    """Run the full analytical chain. Instability and non-convergence
    propagate with the failing stage named."""
    try:
        solution = solve_joint(cfg)
    except (StabilityError, NonConvergenceError) as err:
        raise type(err)(f"state analysis: {err}") from err

    links = link_params(cfg)
    hold, discharge = discharge_split(
        solution.state_probs.p_s, solution.state_probs.p_sr,
        solution.shortfall_sd, solution.shortfall_rd, cfg.relay_policy)
    psi = stability_parameter(cfg.lambda1, cfg.M_R, discharge)
    try:
        buffer = buffer_distribution(discharge, cfg.lambda1, cfg.M_R)
        ready = energy_ready_probability(discharge, cfg.lambda1, cfg.M_R)
    except StabilityError as err:
        raise StabilityError(f"buffer analysis: {err}") from err

    fp = failure_probability(
        solution.state_probs.p_s, solution.state_probs.p_sr,
        solution.shortfall_sd, solution.shortfall_rd, ready,
        links.sd, cfg.gamma_th)
    return TheoryReport(config=cfg, links=links, solution=solution,
                        hold_prob=hold, discharge_prob=discharge,
                        stability=psi, energy_ready=ready, buffer=buffer,
                        fp=fp)
