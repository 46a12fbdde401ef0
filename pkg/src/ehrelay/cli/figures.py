"""Figure rendering for the report path.

Everything renders headlessly (Agg) straight to PNG bytes so the writer
can stage figures next to the delimited output and keep the
no-partial-files guarantee.
"""

from __future__ import annotations

import io

import matplotlib
matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_DPI = 150


def _to_png(fig) -> bytes:
    buf = io.BytesIO()
    fig.tight_layout()
    fig.savefig(buf, format="png", dpi=_DPI)
    plt.close(fig)
    return buf.getvalue()


def buffer_density(x: np.ndarray, density: np.ndarray, quantum: float,
                   hist: tuple | None = None) -> bytes:
    """Analytical buffer density, optionally overlaid on a simulated
    histogram. ``hist`` is (bin_edges, densities)."""
    fig, ax = plt.subplots(figsize=(7.0, 4.4))
    if hist is not None:
        edges, dens = hist
        ax.stairs(dens, edges, fill=True, alpha=0.35, color="tab:orange",
                  label="simulation")
    ax.plot(x, density, color="tab:blue", lw=1.6, label="closed form")
    ax.axvline(quantum, color="gray", ls="--", lw=1.0,
               label="discharge quantum")
    ax.set_xlabel("buffer level (mJ)")
    ax.set_ylabel("density (1/mJ)")
    ax.set_title("Limiting distribution of the relay energy buffer")
    ax.legend(frameon=False)
    ax.grid(alpha=0.3)
    return _to_png(fig)


def buffer_histogram(edges: np.ndarray, densities: np.ndarray,
                     quantum: float) -> bytes:
    fig, ax = plt.subplots(figsize=(7.0, 4.4))
    ax.stairs(densities, edges, fill=True, alpha=0.5, color="tab:orange")
    ax.axvline(quantum, color="gray", ls="--", lw=1.0)
    ax.set_xlabel("buffer level (mJ)")
    ax.set_ylabel("density (1/mJ)")
    ax.set_title("Simulated relay energy buffer")
    ax.grid(alpha=0.3)
    return _to_png(fig)


def failure_sweep(key: str, values: np.ndarray, fp_theory: np.ndarray,
                  fp_sim: np.ndarray, ci_lo: np.ndarray,
                  ci_hi: np.ndarray) -> bytes:
    fig, ax = plt.subplots(figsize=(7.0, 4.4))
    order = np.argsort(values)
    v = np.asarray(values)[order]
    ax.plot(v, np.asarray(fp_theory)[order], "o-", color="tab:blue",
            label="closed form")
    err = np.vstack([np.asarray(fp_sim)[order] - np.asarray(ci_lo)[order],
                     np.asarray(ci_hi)[order] - np.asarray(fp_sim)[order]])
    ax.errorbar(v, np.asarray(fp_sim)[order], yerr=err, fmt="s",
                color="tab:orange", capsize=3, label="simulation")
    ax.set_xlabel(key)
    ax.set_ylabel("per-slot failure probability")
    ax.set_title(f"Failure probability vs {key}")
    ax.legend(frameon=False)
    ax.grid(alpha=0.3)
    return _to_png(fig)
