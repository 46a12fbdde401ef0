"""Slot-by-slot Monte Carlo simulation of the full relay protocol.

Each slot has an implicit four-phase structure: CSI acquisition and the
energy check are free and perfect, at most one transmission attempt chain
runs, receivers acknowledge, and the slot's harvest lands in the staging
buffer and migrates to the primary buffer at the slot edge (so energy
harvested in slot i is never spent before slot i+1).

Channel realizations for all three links exist in every slot whether the
protocol uses them or not; the engine pre-draws them per replication from
counter-based streams derived from (seed, replication), which makes runs
reproducible and lets the independently coded maximal-ratio reference
walk the identical randomness.
"""

from __future__ import annotations

import math
from collections import namedtuple
from dataclasses import dataclass, replace

import numpy as np

from .channel import (POLICY_TRANSMIT_ALWAYS, POLICY_TRANSMIT_WHEN_SUCCESSFUL,
                      TIMING_NEXT_SLOT, NetworkConfig, link_params)
from .numerics import sample_exponential
from .stm import build_bins

_BLOCK = 1 << 16
HIST_BINS_PER_QUANTUM = 50
HIST_QUANTA = 40

STATE_SOURCE_ONLY = "s1"
STATE_SOURCE_RELAY = "s2"


@dataclass(frozen=True)
class EnergyBuffer:
    """Harvest-store-use buffer pair at the relay (mJ).

    Harvested energy enters the staging buffer (seb) during a slot and
    moves to the primary buffer (peb) at the slot edge; only the primary
    buffer can fund a transmission.
    """

    peb: float = 0.0
    seb: float = 0.0

    def __post_init__(self):
        if self.peb < 0.0 or self.seb < 0.0:
            raise ValueError("EnergyBuffer: levels must be nonnegative")


@dataclass(frozen=True)
class EpisodeState:
    """Protocol state carried across slots for the in-flight packet."""

    transmitter_state: str = STATE_SOURCE_ONLY
    gsc_accumulated: float = 0.0   # summed SNR of kept copies
    slots_elapsed: int = 0
    relay_turn: bool = False       # next-slot timing only

    def __post_init__(self):
        if self.gsc_accumulated < 0.0:
            raise ValueError("EpisodeState: accumulated SNR must be nonnegative")
        if self.transmitter_state not in (STATE_SOURCE_ONLY, STATE_SOURCE_RELAY):
            raise ValueError(
                f"EpisodeState: unknown state {self.transmitter_state!r}")


@dataclass(frozen=True)
class SlotOutcome:
    delivered: bool
    delivered_by_relay: bool
    discharged: bool
    demanded: bool          # relay would have spent a quantum had it held one
    harvest: float          # mJ added to the staging buffer this slot
    state_start: str
    acc_start: float
    buffer_start: float     # primary buffer at the slot start


_Params = namedtuple("_Params", "gamma zgamma quantum transmit_always next_slot")


def _params(cfg: NetworkConfig) -> _Params:
    return _Params(gamma=cfg.gamma_th, zgamma=cfg.z * cfg.gamma_th,
                   quantum=cfg.M_R,
                   transmit_always=cfg.relay_policy == POLICY_TRANSMIT_ALWAYS,
                   next_slot=cfg.relay_timing == TIMING_NEXT_SLOT)


def _advance(state, acc, relay_turn, peb, gsd, gsr, grd, pr):
    """One slot of the protocol, without the harvest update.

    ``state`` is 0 for source-only, 1 for source+relay. Success checks
    compare against the accumulator as it stood at the slot start; copies
    that failed but cleared the selection threshold join it at the slot
    end. Returns the new (state, acc, relay_turn) plus the outcome flags
    (delivered, by_relay, discharged, demanded).
    """
    delivered = False
    by_relay = False
    discharged = False
    demanded = False
    if state == 0:
        if gsd >= pr.gamma:
            delivered = True
        else:
            if gsd >= pr.zgamma:
                acc += gsd
            if gsr >= pr.gamma:
                state = 1
    elif pr.next_slot and relay_turn:
        # Relay's own slot: the source stays silent this round.
        relay_turn = False
        if pr.transmit_always:
            demanded = True
            if peb >= pr.quantum:
                discharged = True
                if acc + grd >= pr.gamma:
                    delivered = True
                    by_relay = True
                elif grd >= pr.zgamma:
                    acc += grd
        elif acc + grd >= pr.gamma:
            demanded = True
            if peb >= pr.quantum:
                discharged = True
                delivered = True
                by_relay = True
    else:
        # Source transmits first; the relay only acts on its shortfall.
        if acc + gsd >= pr.gamma:
            delivered = True
        else:
            s_copy = gsd if gsd >= pr.zgamma else 0.0
            if pr.next_slot:
                acc += s_copy
                relay_turn = True
            else:
                r_copy = 0.0
                if pr.transmit_always:
                    demanded = True
                    if peb >= pr.quantum:
                        discharged = True
                        if acc + grd >= pr.gamma:
                            delivered = True
                            by_relay = True
                        elif grd >= pr.zgamma:
                            r_copy = grd
                elif acc + grd >= pr.gamma:
                    demanded = True
                    if peb >= pr.quantum:
                        discharged = True
                        delivered = True
                        by_relay = True
                if not delivered:
                    acc += s_copy + r_copy
    if delivered:
        state = 0
        acc = 0.0
        relay_turn = False
    return state, acc, relay_turn, delivered, by_relay, discharged, demanded


def step_slot(state: EpisodeState, buffers: EnergyBuffer, cfg: NetworkConfig,
              rng: np.random.Generator):
    """Advance one slot using a caller-owned generator.

    Draw order is fixed (direct, source-relay, relay-destination SNRs,
    then the harvest), so a seeded generator replays identically. The
    harvest and any staged energy migrate to the primary buffer at the
    slot edge.
    """
    links = link_params(cfg)
    gsd = sample_exponential(links.sd, rng)
    gsr = sample_exponential(links.sr, rng)
    grd = sample_exponential(links.rd, rng)
    harvest = sample_exponential(cfg.lambda1, rng)
    pr = _params(cfg)
    s0 = 0 if state.transmitter_state == STATE_SOURCE_ONLY else 1
    s1, acc, turn, delivered, by_relay, discharged, demanded = _advance(
        s0, state.gsc_accumulated, state.relay_turn, buffers.peb,
        gsd, gsr, grd, pr)
    peb = buffers.peb + buffers.seb
    if discharged:
        peb -= pr.quantum
    peb += harvest
    outcome = SlotOutcome(delivered=delivered, delivered_by_relay=by_relay,
                          discharged=discharged, demanded=demanded,
                          harvest=harvest,
                          state_start=state.transmitter_state,
                          acc_start=state.gsc_accumulated,
                          buffer_start=buffers.peb)
    new_state = EpisodeState(
        transmitter_state=STATE_SOURCE_ONLY if s1 == 0 else STATE_SOURCE_RELAY,
        gsc_accumulated=acc,
        slots_elapsed=0 if delivered else state.slots_elapsed + 1,
        relay_turn=turn)
    return new_state, EnergyBuffer(peb=peb, seb=0.0), outcome


@dataclass
class SimReport:
    """Empirical counterpart of the analytical report.

    Rates are pooled over replications; buffer statistics exclude the
    burn-in window of each replication.
    """

    seed: int
    n_slots: int
    n_replications: int
    burn_in: int
    config: NetworkConfig
    n_delivered: int
    failure_rate: float
    throughput: float
    mean_slots_per_packet: float
    occupancy_s1: float
    occupancy_s2: float
    pr_energy_sufficient: float
    demand_rate: float
    n_discharges: int
    n_relay_deliveries: int
    mean_buffer: float
    buffer_decile_means: np.ndarray
    hist_bin_width: float
    hist_counts: np.ndarray
    hist_overflow: int
    shortfall_sd_hat: float
    shortfall_rd_hat: float
    acc_occupancy: np.ndarray
    failure_rate_per_rep: np.ndarray
    failure_rate_var: float
    delivered_slots: tuple | None = None
    buffer_samples: np.ndarray | None = None


def _streams(seed: int, replication: int):
    """Five counter-based child streams for one replication.

    Layout (fixed): direct SNR, source-relay SNR, relay-destination SNR,
    harvest, relay-link probe. Derivation is SeedSequence((seed, r)), so
    replications are independent and reproducible in parallel.
    """
    ss = np.random.SeedSequence((seed, replication))
    return [np.random.Generator(np.random.Philox(child))
            for child in ss.spawn(5)]


def _exp_block(gen, rate, size):
    return -np.log1p(-gen.random(size)) / rate


def _run_replication(cfg: NetworkConfig, seed: int, replication: int,
                     n_slots: int, burn_in: int, keep_samples: bool,
                     keep_deliveries: bool) -> dict:
    links = link_params(cfg)
    pr = _params(cfg)
    gen_sd, gen_sr, gen_rd, gen_hv, gen_pb = _streams(seed, replication)
    grid = build_bins(cfg.z, cfg.gamma_th, cfg.n_bins) if cfg.gamma_th > 0 else None
    zgam = pr.zgamma
    delta = grid.delta if grid is not None else 1.0
    nbins = cfg.n_bins

    hist_width = cfg.M_R / HIST_BINS_PER_QUANTUM
    hist_edges = np.arange(HIST_BINS_PER_QUANTUM * HIST_QUANTA + 1) * hist_width
    hist_counts = np.zeros(hist_edges.size - 1, dtype=np.int64)
    hist_overflow = 0

    n_post = n_slots - burn_in
    decile_sums = np.zeros(10)
    decile_counts = np.zeros(10, dtype=np.int64)

    state = 0
    acc = 0.0
    relay_turn = False
    peb = 0.0
    delivered_total = 0
    last_delivery = -1
    s2_slots = 0
    e_hits = 0
    g_hits = 0
    occupancy = np.zeros(nbins, dtype=np.int64)
    demand_post = 0
    ready_post = 0
    discharges = 0
    relay_deliveries = 0
    delivered_slots = [] if keep_deliveries else None
    samples = np.empty(n_post) if keep_samples else None

    slot = 0
    buf_block = np.empty(_BLOCK)
    while slot < n_slots:
        m = min(_BLOCK, n_slots - slot)
        gsd_b = _exp_block(gen_sd, links.sd, m)
        gsr_b = _exp_block(gen_sr, links.sr, m)
        grd_b = _exp_block(gen_rd, links.rd, m)
        hv_b = _exp_block(gen_hv, cfg.lambda1, m)
        pb_b = _exp_block(gen_pb, links.rd, m)
        for i in range(m):
            buf_block[i] = peb
            if state == 1:
                s2_slots += 1
                if acc + gsd_b[i] < pr.gamma:
                    e_hits += 1
                if acc + pb_b[i] < pr.gamma:
                    g_hits += 1
                if grid is not None:
                    if acc < zgam:
                        occupancy[0] += 1
                    else:
                        j = 1 + int((acc - zgam) / delta)
                        occupancy[j if j < nbins else nbins - 1] += 1
            state, acc, relay_turn, delivered, by_relay, discharged, demanded = \
                _advance(state, acc, relay_turn, peb,
                         gsd_b[i], gsr_b[i], grd_b[i], pr)
            g_slot = slot + i
            if g_slot >= burn_in:
                if demanded:
                    demand_post += 1
                if peb >= pr.quantum:
                    ready_post += 1
            if delivered:
                delivered_total += 1
                last_delivery = g_slot
                if by_relay:
                    relay_deliveries += 1
                if delivered_slots is not None:
                    delivered_slots.append(g_slot)
            if discharged:
                discharges += 1
                peb -= pr.quantum
            peb += hv_b[i]
        # buffer statistics on the post-burn-in part of the block
        lo = max(burn_in - slot, 0)
        if lo < m:
            post = buf_block[lo:m]
            counts, _ = np.histogram(post, bins=hist_edges)
            hist_counts += counts
            hist_overflow += int(post.size - counts.sum())
            idx = (np.arange(slot + lo, slot + m) - burn_in) * 10 // n_post
            decile_sums += np.bincount(idx, weights=post, minlength=10)[:10]
            decile_counts += np.bincount(idx, minlength=10)[:10]
            if samples is not None:
                samples[slot + lo - burn_in: slot + m - burn_in] = post
        slot += m

    return {
        "delivered": delivered_total,
        "last_delivery": last_delivery,
        "s2_slots": s2_slots,
        "e_hits": e_hits,
        "g_hits": g_hits,
        "occupancy": occupancy,
        "demand_post": demand_post,
        "ready_post": ready_post,
        "discharges": discharges,
        "relay_deliveries": relay_deliveries,
        "decile_sums": decile_sums,
        "decile_counts": decile_counts,
        "hist_counts": hist_counts,
        "hist_overflow": hist_overflow,
        "hist_width": hist_width,
        "delivered_slots": delivered_slots,
        "samples": samples,
        "n_post": n_post,
    }


def run_simulation(cfg: NetworkConfig, seed: int, n_slots: int,
                   n_replications: int = 1, *, keep_buffer_samples: bool = False,
                   record_deliveries: bool = False) -> SimReport:
    """Run ``n_replications`` independent replications and merge them.

    Replication r draws its streams from (seed, r). The first
    min(10^4, n_slots // 10) slots of each replication are excluded from
    buffer statistics. Merging walks replications in index order, so a
    merged report is bitwise reproducible.
    """
    if n_slots < 1:
        raise ValueError("run_simulation: n_slots must be at least 1")
    if n_replications < 1:
        raise ValueError("run_simulation: n_replications must be at least 1")
    burn_in = min(10_000, n_slots // 10)
    reps = [_run_replication(cfg, seed, r, n_slots, burn_in,
                             keep_buffer_samples, record_deliveries)
            for r in range(n_replications)]

    total_slots = n_slots * n_replications
    delivered = sum(r["delivered"] for r in reps)
    fr_per_rep = np.array([1.0 - r["delivered"] / n_slots for r in reps])
    s2 = sum(r["s2_slots"] for r in reps)
    post = sum(r["n_post"] for r in reps)
    decile_counts = sum(r["decile_counts"] for r in reps)
    decile_sums = sum(r["decile_sums"] for r in reps)
    decile_means = np.divide(decile_sums, decile_counts,
                             out=np.full(10, math.nan),
                             where=decile_counts > 0)
    hist_counts = sum(r["hist_counts"] for r in reps)
    occupancy = sum(r["occupancy"] for r in reps)
    slots_to_last = sum(r["last_delivery"] + 1 for r in reps
                        if r["delivered"] > 0)

    return SimReport(
        seed=seed,
        n_slots=n_slots,
        n_replications=n_replications,
        burn_in=burn_in,
        config=cfg,
        n_delivered=delivered,
        failure_rate=1.0 - delivered / total_slots,
        throughput=cfg.R0 * delivered / total_slots,
        mean_slots_per_packet=(slots_to_last / delivered
                               if delivered else math.nan),
        occupancy_s1=1.0 - s2 / total_slots,
        occupancy_s2=s2 / total_slots,
        pr_energy_sufficient=sum(r["ready_post"] for r in reps) / post,
        demand_rate=sum(r["demand_post"] for r in reps) / post,
        n_discharges=sum(r["discharges"] for r in reps),
        n_relay_deliveries=sum(r["relay_deliveries"] for r in reps),
        mean_buffer=float(decile_sums.sum() / max(decile_counts.sum(), 1)),
        buffer_decile_means=decile_means,
        hist_bin_width=reps[0]["hist_width"],
        hist_counts=hist_counts,
        hist_overflow=sum(r["hist_overflow"] for r in reps),
        shortfall_sd_hat=(sum(r["e_hits"] for r in reps) / s2
                          if s2 else math.nan),
        shortfall_rd_hat=(sum(r["g_hits"] for r in reps) / s2
                          if s2 else math.nan),
        acc_occupancy=(occupancy / s2 if s2 else occupancy.astype(float)),
        failure_rate_per_rep=fr_per_rep,
        failure_rate_var=(float(np.var(fr_per_rep, ddof=1))
                          if n_replications > 1 else 0.0),
        delivered_slots=(tuple(np.asarray(r["delivered_slots"], dtype=np.int64)
                               for r in reps) if record_deliveries else None),
        buffer_samples=(np.concatenate([r["samples"] for r in reps])
                        if keep_buffer_samples else None),
    )


def mrc_reference_run(cfg: NetworkConfig, seed: int, n_slots: int) -> SimReport:
    """Independently coded maximal-ratio reference: keep every failed copy.

    Only valid at z = 0, where threshold selection keeps everything and the
    two engines must produce identical delivered-packet slot sequences when
    driven by the same seed. The loop below deliberately re-implements the
    protocol rather than delegating to the selection-combining engine.
    """
    if cfg.z != 0.0:
        raise ValueError("mrc_reference_run: requires z = 0")
    if n_slots < 1:
        raise ValueError("mrc_reference_run: n_slots must be at least 1")
    links = link_params(cfg)
    gamma = cfg.gamma_th
    quantum = cfg.M_R
    always = cfg.relay_policy == POLICY_TRANSMIT_ALWAYS
    if cfg.relay_timing == TIMING_NEXT_SLOT:
        raise ValueError("mrc_reference_run: only same-slot timing is supported")
    gen_sd, gen_sr, gen_rd, gen_hv, gen_pb = _streams(seed, 0)

    state = 0
    combined = 0.0     # running sum of every received copy's SNR
    peb = 0.0
    delivered_total = 0
    relay_deliveries = 0
    discharges = 0
    delivered_slots = []
    last_delivery = -1

    slot = 0
    while slot < n_slots:
        m = min(_BLOCK, n_slots - slot)
        gsd_b = _exp_block(gen_sd, links.sd, m)
        gsr_b = _exp_block(gen_sr, links.sr, m)
        grd_b = _exp_block(gen_rd, links.rd, m)
        hv_b = _exp_block(gen_hv, cfg.lambda1, m)
        _exp_block(gen_pb, links.rd, m)   # keep stream consumption aligned
        for i in range(m):
            delivered = False
            by_relay = False
            discharged = False
            if state == 0:
                if gsd_b[i] >= gamma:
                    delivered = True
                else:
                    combined += gsd_b[i]
                    if gsr_b[i] >= gamma:
                        state = 1
            else:
                if combined + gsd_b[i] >= gamma:
                    delivered = True
                else:
                    if always:
                        if peb >= quantum:
                            discharged = True
                            if combined + grd_b[i] >= gamma:
                                delivered = True
                                by_relay = True
                            else:
                                combined += grd_b[i]
                    elif combined + grd_b[i] >= gamma and peb >= quantum:
                        discharged = True
                        delivered = True
                        by_relay = True
                    if not delivered:
                        combined += gsd_b[i]
            if delivered:
                state = 0
                combined = 0.0
                delivered_total += 1
                last_delivery = slot + i
                delivered_slots.append(slot + i)
                if by_relay:
                    relay_deliveries += 1
            if discharged:
                discharges += 1
                peb -= quantum
            peb += hv_b[i]
        slot += m

    nan = math.nan
    empty = np.zeros(0)
    return SimReport(
        seed=seed, n_slots=n_slots, n_replications=1, burn_in=0, config=cfg,
        n_delivered=delivered_total,
        failure_rate=1.0 - delivered_total / n_slots,
        throughput=cfg.R0 * delivered_total / n_slots,
        mean_slots_per_packet=((last_delivery + 1) / delivered_total
                               if delivered_total else nan),
        occupancy_s1=nan, occupancy_s2=nan,
        pr_energy_sufficient=nan, demand_rate=nan,
        n_discharges=discharges, n_relay_deliveries=relay_deliveries,
        mean_buffer=nan, buffer_decile_means=np.full(10, nan),
        hist_bin_width=cfg.M_R / HIST_BINS_PER_QUANTUM,
        hist_counts=np.zeros(HIST_BINS_PER_QUANTUM * HIST_QUANTA,
                             dtype=np.int64),
        hist_overflow=0,
        shortfall_sd_hat=nan, shortfall_rd_hat=nan,
        acc_occupancy=empty,
        failure_rate_per_rep=np.array([1.0 - delivered_total / n_slots]),
        failure_rate_var=0.0,
        delivered_slots=(np.asarray(delivered_slots, dtype=np.int64),),
        buffer_samples=None,
    )
