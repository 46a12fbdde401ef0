"""Limiting distribution of the relay's energy buffer.

The buffer is a discrete-time continuous-state Markov chain: every slot it
gains an Exp(lambda1) harvest and, with per-slot demand probability b1,
loses one transmission quantum M_R (only possible when the level is at
least M_R). When the stability parameter lambda1 * M_R * b1 exceeds one,
the level admits a limiting density that rises as (1 - exp(Q1*x))/M_R
below the quantum and decays as k1*exp(Q1*x) above it, with Q1 < 0 the
nonzero root of a transcendental equation solved via Lambert W.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import POLICY_TRANSMIT_ALWAYS, POLICY_TRANSMIT_WHEN_SUCCESSFUL
from .errors import DegeneracyError, StabilityError
from .numerics import lambert_w0


def discharge_split(p_s: float, p_sr: float, shortfall_sd: float,
                    shortfall_rd: float, policy: str) -> tuple[float, float]:
    """Per-slot (hold, discharge) probabilities of the relay buffer.

    ``transmit-always``: the relay spends a quantum whenever it holds the
    packet and the source's combined attempt falls short, win or lose.
    ``transmit-when-successful``: with full CSI the relay stays silent when
    its own combined attempt would also fall short, so only winning
    transmissions discharge. The two probabilities always sum to one
    exactly.
    """
    if policy == POLICY_TRANSMIT_ALWAYS:
        discharge = p_sr * shortfall_sd
    elif policy == POLICY_TRANSMIT_WHEN_SUCCESSFUL:
        discharge = p_sr * shortfall_sd * (1.0 - shortfall_rd)
    else:
        raise ValueError(f"discharge_split: unknown policy {policy!r}")
    return 1.0 - discharge, discharge


def stability_parameter(harvest_rate: float, quantum: float,
                        discharge_prob: float) -> float:
    """lambda1 * M_R * b1; the buffer has a limiting distribution iff > 1."""
    return harvest_rate * quantum * discharge_prob


def buffer_exponent(discharge_prob: float, harvest_rate: float,
                    quantum: float) -> float:
    """Negative decay exponent Q1 of the limiting buffer density.

    Q1 solves b1*lambda1*exp(Q1*M_R) = b1*lambda1 + Q1. Writing
    y = b1*lambda1*M_R, the nonzero root is

        Q1 = -(W0(-y*exp(-y)) + y) / M_R,

    and it exists (strictly negative) only for y > 1. The principal
    branch is essential: the other real branch returns -y and therefore
    the trivial root Q1 = 0.
    """
    y = discharge_prob * harvest_rate * quantum
    if y <= 1.0:
        raise StabilityError(
            f"buffer is not stationary: stability parameter {y:.6g} <= 1")
    if y < 1.0 + 1e-9:
        raise DegeneracyError(
            f"stability parameter {y!r} is numerically at the branch point")
    w = lambert_w0(-y * math.exp(-y))
    q1 = -(w + y) / quantum
    if q1 >= 0.0:
        raise DegeneracyError(
            f"buffer exponent degenerated to {q1!r} at y={y!r}")
    return q1


def energy_ready_probability(discharge_prob: float, harvest_rate: float,
                             quantum: float) -> float:
    """Stationary P{buffer >= M_R} = 1 / (b1 * lambda1 * M_R)."""
    y = discharge_prob * harvest_rate * quantum
    if y <= 1.0:
        raise StabilityError(
            f"energy_ready_probability undefined: stability parameter {y:.6g} <= 1")
    return 1.0 / y


@dataclass(frozen=True)
class BufferPdf:
    """Closed-form limiting density of the relay buffer level (mJ)."""

    discharge_prob: float   # b1, per-slot demand probability
    harvest_rate: float     # lambda1, 1/mJ
    quantum: float          # M_R, mJ
    exponent: float         # Q1 < 0, 1/mJ
    tail_coeff: float       # k1 > 0, 1/mJ

    def pdf(self, x):
        """Density at x (vectorized)."""
        x = np.asarray(x, dtype=float)
        below = (1.0 - np.exp(self.exponent * x)) / self.quantum
        above = self.tail_coeff * np.exp(self.exponent * x)
        out = np.where(x < self.quantum, below, above)
        return np.where(x < 0.0, 0.0, out)

    def cdf(self, x):
        """Cumulative distribution at x (vectorized, closed form)."""
        x = np.asarray(x, dtype=float)
        q1 = self.exponent
        xb = np.minimum(x, self.quantum)
        body = (xb - np.expm1(q1 * xb) / q1) / self.quantum
        at_quantum = (self.quantum - math.expm1(q1 * self.quantum) / q1) / self.quantum
        tail = at_quantum + self.tail_coeff / q1 * (
            np.exp(q1 * np.maximum(x, self.quantum)) - math.exp(q1 * self.quantum))
        out = np.where(x < self.quantum, body, tail)
        return np.clip(np.where(x < 0.0, 0.0, out), 0.0, 1.0)

    def tail_mass(self) -> float:
        """Mass above the quantum; equals the energy-ready probability."""
        return -self.tail_coeff / self.exponent * math.exp(self.exponent * self.quantum)


def buffer_distribution(discharge_prob: float, harvest_rate: float,
                        quantum: float) -> BufferPdf:
    """Assemble the limiting buffer density; requires stability parameter > 1."""
    q1 = buffer_exponent(discharge_prob, harvest_rate, quantum)
    k1 = -q1 / (quantum * (discharge_prob * harvest_rate + q1))
    return BufferPdf(discharge_prob=discharge_prob, harvest_rate=harvest_rate,
                     quantum=quantum, exponent=q1, tail_coeff=k1)
