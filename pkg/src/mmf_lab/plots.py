"""Figure rendering for the command-line report paths.

Every writer takes already-computed results and a target path, renders
with the Agg backend (no display needed), and closes its figure so batch
runs do not accumulate state.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .harness import SemicircleFit, SweepResult, _semicircle_density

__all__ = ["save_mdl_figure", "save_sweep_figure", "save_comparison_figure"]

SCENARIO_STYLE = {
    "intrinsic_all_modes": ("all modes", "tab:blue", "-"),
    "controlled": ("channel-aware coupling", "tab:green", "-"),
    "random_coupling": ("random coupling", "tab:red", "--"),
    "nmode_baseline": ("small-fiber baseline", "tab:orange", "-."),
    "ideal_fiber": ("lossless reference", "black", ":"),
}


def save_mdl_figure(pooled_rho: np.ndarray, fit: SemicircleFit | None, path: str,
                    bins: int = 60) -> None:
    """Standardized MDL density with the fitted semicircle overlaid."""
    z = np.asarray(pooled_rho, dtype=float).ravel()
    std = float(np.std(z))
    if std > 0:
        z = (z - np.mean(z)) / std
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.hist(z, bins=bins, density=True, alpha=0.6, color="tab:blue",
            label="simulated")
    if fit is not None:
        x = np.linspace(z.min(), z.max(), 400)
        ax.plot(x, _semicircle_density(x, fit.radius), "k-", lw=2,
                label=f"semicircle fit (R$^2$={fit.r_squared:.3f})")
    ax.set_xlabel("end-to-end MDL (standardized)")
    ax.set_ylabel("density")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_sweep_figure(sweep: SweepResult, path: str) -> None:
    """Ergodic capacity vs SNR with Monte-Carlo error bars."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.errorbar(sweep.snrs(), sweep.capacities(), yerr=sweep.stderrs(),
                fmt="o-", ms=3, capsize=2)
    ax.set_xlabel("SNR (dB)")
    ax.set_ylabel("ergodic capacity (b/s/Hz)")
    ax.set_title(sweep.scenario.kind.replace("_", " "))
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_comparison_figure(sweeps: list[SweepResult], path: str) -> None:
    """All comparison arms on one axis."""
    fig, ax = plt.subplots(figsize=(6.5, 4.5))
    for sweep in sweeps:
        label, color, style = SCENARIO_STYLE[sweep.scenario.kind]
        ax.plot(sweep.snrs(), sweep.capacities(), style, color=color, label=label)
    ax.set_xlabel("SNR (dB)")
    ax.set_ylabel("ergodic capacity (b/s/Hz)")
    ax.grid(alpha=0.3)
    ax.legend(frameon=False, fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
