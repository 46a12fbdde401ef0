"""Experiment orchestration and CSV assembly.

All file contents (CSV text and PNG bytes) are built in memory first and
written in one pass at the end, so a failing run never leaves partial
output behind. Every file opens with comment lines echoing the config,
the applied defaults, and the seed, making any row independently
re-runnable. Numbers are written with repr, which round-trips exactly.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from ..channel import (POLICY_TRANSMIT_ALWAYS, POLICY_TRANSMIT_WHEN_SUCCESSFUL,
                       NetworkConfig)
from ..errors import ConfigError, NonConvergenceError, StabilityError
from ..performance import TheoryReport, theory_report
from ..simulate import SimReport, run_simulation
from ..stats import binomial_ci, ks_distance, tv_distance
from .config import ParsedConfig, load_config

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_UNSTABLE = 3
EXIT_NO_CONVERGENCE = 4

MODES = ("theory", "simulate", "compare", "sweep")

# Config keys a sweep may vary, with the cast applied to grid values.
SWEEP_KEYS = {
    "z": float, "P_S": float, "M_R": float, "alpha": float,
    "lambda1": float, "N0": float, "R0": float, "n_bins": int,
    "harvest_mean_dB": float,
}


@dataclass(frozen=True)
class ExperimentSpec:
    mode: str
    config_path: str
    slots: int = 200_000
    reps: int = 1
    seed: int = 1
    sweep: tuple | None = None        # (key, (v1, v2, ...))
    out_dir: str = "results"
    policy: str | None = None
    figures: bool = True
    workers: int = 1

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.slots < 1:
            raise ConfigError("slots must be at least 1")
        if self.reps < 1:
            raise ConfigError("reps must be at least 1")
        if self.mode == "sweep":
            if not self.sweep or not self.sweep[1]:
                raise ConfigError("sweep mode needs --sweep key=v1,v2,...")
            if self.sweep[0] not in SWEEP_KEYS:
                raise ConfigError(
                    f"cannot sweep {self.sweep[0]!r}; pick one of "
                    + ", ".join(sorted(SWEEP_KEYS)))


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (np.floating,)):
        return repr(float(value))
    if isinstance(value, (np.integer,)):
        return str(int(value))
    return str(value)


def _comments(spec: ExperimentSpec, parsed: ParsedConfig,
              cfg: NetworkConfig) -> list[str]:
    out = [f"# ehrelay {spec.mode} report",
           f"# seed = {spec.seed}",
           f"# slots = {spec.slots}",
           f"# reps = {spec.reps}"]
    for key, value in cfg.echo().items():
        out.append(f"# config {key} = {_fmt(value)}")
    for key, value in parsed.applied_defaults.items():
        out.append(f"# applied_default {key} = {_fmt(value)}")
    return out


def _csv(comments: list[str], headers: list[str], rows: list[list]) -> bytes:
    lines = list(comments)
    lines.append(",".join(headers))
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    return ("\n".join(lines) + "\n").encode()


def _density_curve(report: TheoryReport) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    pdf = report.buffer
    x_max = pdf.quantum + 9.0 / abs(pdf.exponent)
    x = np.linspace(0.0, x_max, 1001)
    return x, pdf.pdf(x), pdf.cdf(x)


def _theory_row_header() -> list[str]:
    return ["policy", "rate_sd", "rate_sr", "rate_rd", "direct_outage",
            "shortfall_sd", "shortfall_rd", "p_s", "p_sr", "hold_prob",
            "discharge_prob", "stability", "energy_ready",
            "buffer_exponent", "buffer_tail_coeff", "failure_probability",
            "outer_iterations"]


def _theory_row(report: TheoryReport) -> list:
    sol = report.solution
    return [report.config.relay_policy, report.links.sd, report.links.sr,
            report.links.rd, sol.direct_outage, sol.shortfall_sd,
            sol.shortfall_rd, sol.state_probs.p_s, sol.state_probs.p_sr,
            report.hold_prob, report.discharge_prob, report.stability,
            report.energy_ready, report.buffer.exponent,
            report.buffer.tail_coeff, report.fp, sol.outer_iterations]


def _histogram_rows(sim: SimReport) -> tuple[list[str], list[list]]:
    width = sim.hist_bin_width
    total = int(sim.hist_counts.sum()) + sim.hist_overflow
    headers = ["bin_lo", "bin_hi", "count", "density"]
    rows = []
    for j, count in enumerate(sim.hist_counts):
        rows.append([j * width, (j + 1) * width, int(count),
                     count / (total * width) if total else 0.0])
    return headers, rows


def _hist_density(sim: SimReport) -> tuple[np.ndarray, np.ndarray]:
    width = sim.hist_bin_width
    total = int(sim.hist_counts.sum()) + sim.hist_overflow
    edges = np.arange(sim.hist_counts.size + 1) * width
    dens = sim.hist_counts / (total * width) if total else sim.hist_counts * 0.0
    return edges, dens


def _sim_summary(sim: SimReport) -> tuple[list[str], list[list]]:
    headers = ["scope", "failure_rate", "throughput", "mean_slots_per_packet",
               "occupancy_s1", "occupancy_s2", "pr_energy_sufficient",
               "demand_rate", "n_discharges", "n_relay_deliveries",
               "mean_buffer", "failure_rate_var", "shortfall_sd_hat",
               "shortfall_rd_hat", "n_delivered", "burn_in"]
    rows = [["pooled", sim.failure_rate, sim.throughput,
             sim.mean_slots_per_packet, sim.occupancy_s1, sim.occupancy_s2,
             sim.pr_energy_sufficient, sim.demand_rate, sim.n_discharges,
             sim.n_relay_deliveries, sim.mean_buffer, sim.failure_rate_var,
             sim.shortfall_sd_hat, sim.shortfall_rd_hat, sim.n_delivered,
             sim.burn_in]]
    for r, fr in enumerate(sim.failure_rate_per_rep):
        rows.append([f"rep{r}", fr] + [""] * (len(headers) - 2))
    return headers, rows


def _build_theory(cfg, parsed, spec):
    report = theory_report(cfg)
    comments = _comments(spec, parsed, cfg)
    files = [("theory_summary.csv",
              _csv(comments, _theory_row_header(), [_theory_row(report)]))]
    x, pdf, cdf = _density_curve(report)
    files.append(("buffer_density.csv",
                  _csv(comments, ["x_mj", "density", "cdf"],
                       [[xi, pi, ci] for xi, pi, ci in zip(x, pdf, cdf)])))
    if spec.figures:
        from . import figures
        files.append(("buffer_density.png",
                      figures.buffer_density(x, pdf, cfg.M_R)))
    return files


def _build_simulate(cfg, parsed, spec):
    sim = run_simulation(cfg, spec.seed, spec.slots, spec.reps)
    comments = _comments(spec, parsed, cfg)
    headers, rows = _sim_summary(sim)
    files = [("simulation_summary.csv", _csv(comments, headers, rows))]
    h_headers, h_rows = _histogram_rows(sim)
    hist_comments = comments + [f"# overflow_count = {sim.hist_overflow}"]
    files.append(("buffer_histogram.csv", _csv(hist_comments, h_headers, h_rows)))
    if spec.figures:
        from . import figures
        edges, dens = _hist_density(sim)
        files.append(("buffer_histogram.png",
                      figures.buffer_histogram(edges, dens, cfg.M_R)))
    return files


def _build_compare(cfg, parsed, spec):
    """Theory vs simulation, run for each relay policy (or just the
    requested one), with each closed-form discharge variant reported
    against every simulated policy."""
    policies = ((cfg.relay_policy,) if spec.policy
                else (POLICY_TRANSMIT_ALWAYS, POLICY_TRANSMIT_WHEN_SUCCESSFUL))
    theory = {}
    for pol in (POLICY_TRANSMIT_ALWAYS, POLICY_TRANSMIT_WHEN_SUCCESSFUL):
        try:
            theory[pol] = theory_report(replace(cfg, relay_policy=pol))
        except StabilityError:
            theory[pol] = None

    comments = _comments(spec, parsed, cfg)
    headers = ["policy", "fp_sim", "fp_sim_ci_lo", "fp_sim_ci_hi",
               "fp_theory_transmit_always", "fp_theory_transmit_when_successful",
               "rel_err_transmit_always", "rel_err_transmit_when_successful",
               "matched_rel_err", "p_s_theory", "p_s_sim", "p_sr_theory",
               "p_sr_sim", "shortfall_sd_theory", "shortfall_sd_sim",
               "shortfall_rd_theory", "shortfall_rd_sim",
               "energy_ready_theory", "pr_energy_sufficient_sim",
               "energy_ready_rel_err", "stability", "ks_buffer",
               "tv_occupancy", "n_discharges", "n_relay_deliveries"]
    rows = []
    files = []
    nan = math.nan
    for pol in policies:
        matched = theory[pol]
        if matched is None:
            raise StabilityError(
                f"compare: the closed form matching policy {pol} is not "
                "stationary at this config")
        sim = run_simulation(replace(cfg, relay_policy=pol), spec.seed,
                             spec.slots, spec.reps, keep_buffer_samples=True)
        n_total = spec.slots * spec.reps
        failed = n_total - sim.n_delivered
        ci_lo, ci_hi = binomial_ci(failed, n_total)
        fp_variant = {p: (theory[p].fp if theory[p] is not None else nan)
                      for p in theory}
        rel = {p: (abs(sim.failure_rate - fp_variant[p]) / fp_variant[p]
                   if theory[p] is not None else nan) for p in theory}
        ks = ks_distance(sim.buffer_samples, matched.buffer.cdf)
        tv = tv_distance(sim.acc_occupancy, matched.solution.accumulator_dist)
        ready_rel = (abs(sim.pr_energy_sufficient - matched.energy_ready)
                     / matched.energy_ready)
        rows.append([
            pol, sim.failure_rate, ci_lo, ci_hi,
            fp_variant[POLICY_TRANSMIT_ALWAYS],
            fp_variant[POLICY_TRANSMIT_WHEN_SUCCESSFUL],
            rel[POLICY_TRANSMIT_ALWAYS],
            rel[POLICY_TRANSMIT_WHEN_SUCCESSFUL],
            rel[pol],
            matched.solution.state_probs.p_s, sim.occupancy_s1,
            matched.solution.state_probs.p_sr, sim.occupancy_s2,
            matched.solution.shortfall_sd, sim.shortfall_sd_hat,
            matched.solution.shortfall_rd, sim.shortfall_rd_hat,
            matched.energy_ready, sim.pr_energy_sufficient, ready_rel,
            matched.stability, ks, tv, sim.n_discharges,
            sim.n_relay_deliveries])

        x, pdf, cdf = _density_curve(matched)
        files.append((f"buffer_density_{pol}.csv",
                      _csv(comments, ["x_mj", "density", "cdf"],
                           [[xi, pi, ci] for xi, pi, ci in zip(x, pdf, cdf)])))
        h_headers, h_rows = _histogram_rows(sim)
        files.append((f"buffer_histogram_{pol}.csv",
                      _csv(comments + [f"# overflow_count = {sim.hist_overflow}"],
                           h_headers, h_rows)))
        if spec.figures:
            from . import figures
            edges, dens = _hist_density(sim)
            files.append((f"buffer_fit_{pol}.png",
                          figures.buffer_density(x, pdf, cfg.M_R,
                                                 hist=(edges, dens))))
    files.insert(0, ("compare.csv", _csv(comments, headers, rows)))
    return files


def _sweep_point(args):
    cfg, key, value, seed, slots, reps = args
    if key == "harvest_mean_dB":
        cfg_v = replace(cfg, lambda1=1.0 / (10.0 ** (value / 10.0)))
    else:
        cfg_v = replace(cfg, **{key: SWEEP_KEYS[key](value)})
    nan = math.nan
    try:
        theory = theory_report(cfg_v)
        stable = 1
    except StabilityError:
        theory = None
        stable = 0
    sim = run_simulation(cfg_v, seed, slots, reps)
    n_total = slots * reps
    ci_lo, ci_hi = binomial_ci(n_total - sim.n_delivered, n_total)
    row = {
        "value": value, "stable": stable,
        "fp_theory": theory.fp if theory else nan,
        "fp_sim": sim.failure_rate,
        "fp_rel_err": (abs(sim.failure_rate - theory.fp) / theory.fp
                       if theory else nan),
        "fp_sim_ci_lo": ci_lo, "fp_sim_ci_hi": ci_hi,
        "stability": theory.stability if theory else nan,
        "energy_ready_theory": theory.energy_ready if theory else nan,
        "pr_energy_sufficient_sim": sim.pr_energy_sufficient,
        "p_s_theory": theory.solution.state_probs.p_s if theory else nan,
        "p_sr_theory": theory.solution.state_probs.p_sr if theory else nan,
        "p_s_sim": sim.occupancy_s1, "p_sr_sim": sim.occupancy_s2,
        "shortfall_sd_theory": theory.solution.shortfall_sd if theory else nan,
        "shortfall_sd_sim": sim.shortfall_sd_hat,
        "shortfall_rd_theory": theory.solution.shortfall_rd if theory else nan,
        "shortfall_rd_sim": sim.shortfall_rd_hat,
        "throughput_sim": sim.throughput,
        "mean_slots_per_packet_sim": sim.mean_slots_per_packet,
    }
    return row


def _build_sweep(cfg, parsed, spec):
    key, values = spec.sweep
    args = [(cfg, key, v, spec.seed, spec.slots, spec.reps) for v in values]
    if spec.workers > 1 and len(values) > 1:
        with ProcessPoolExecutor(max_workers=min(spec.workers, len(values))) as pool:
            rows = list(pool.map(_sweep_point, args))
    else:
        rows = [_sweep_point(a) for a in args]

    headers = ["sweep_key"] + list(rows[0].keys())
    table = [[key] + list(r.values()) for r in rows]
    comments = _comments(spec, parsed, cfg)
    files = [("sweep.csv", _csv(comments, headers, table))]
    if spec.figures:
        from . import figures
        files.append((f"failure_vs_{key}.png", figures.failure_sweep(
            key, np.array([r["value"] for r in rows]),
            np.array([r["fp_theory"] for r in rows]),
            np.array([r["fp_sim"] for r in rows]),
            np.array([r["fp_sim_ci_lo"] for r in rows]),
            np.array([r["fp_sim_ci_hi"] for r in rows]))))
    return files


_BUILDERS = {"theory": _build_theory, "simulate": _build_simulate,
             "compare": _build_compare, "sweep": _build_sweep}


def run_experiment(spec: ExperimentSpec) -> int:
    """Run one experiment; returns the process exit code.

    0 on success; 2 for config problems, 3 for an unstable buffer on the
    analytical path, 4 for solver non-convergence, 1 otherwise. No output
    files are written unless the whole run succeeded.
    """
    import sys

    try:
        parsed = load_config(spec.config_path)
        cfg = parsed.config
        if spec.policy:
            cfg = replace(cfg, relay_policy=spec.policy)
        files = _BUILDERS[spec.mode](cfg, parsed, spec)
    except ConfigError as err:
        print(f"ehrelay: config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as err:
        print(f"ehrelay: cannot read config: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except StabilityError as err:
        print(f"ehrelay: unstable buffer: {err}", file=sys.stderr)
        return EXIT_UNSTABLE
    except NonConvergenceError as err:
        print(f"ehrelay: solver did not converge: {err}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE

    os.makedirs(spec.out_dir, exist_ok=True)
    written = []
    try:
        for name, payload in files:
            path = os.path.join(spec.out_dir, name)
            with open(path, "wb") as fh:
                fh.write(payload)
            written.append(path)
    except OSError as err:
        for path in written:
            try:
                os.unlink(path)
            except OSError:
                pass
        print(f"ehrelay: write failed, outputs removed: {err}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK
