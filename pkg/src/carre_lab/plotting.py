"""Report figures, written to files only."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .energies import EnergyTrajectory, polynomial_bound  # noqa: E402


def plot_energies(traj: EnergyTrajectory, path, show_bounds: bool = True) -> None:
    """Log-log plot of every positive ``e_n(t)``; dashed lines are the polynomial bounds (normal ``A``)."""
    t = traj.times
    pos_t = t > 0
    fig, ax = plt.subplots(figsize=(6.4, 4.4))
    colors = plt.rcParams["axes.prop_cycle"].by_key()["color"]
    normal = traj.normality is not None and traj.normality.is_normal
    e00 = traj.table[0, 0]
    for n in range(traj.N + 1):
        row = traj.table[n]
        keep = pos_t & (row > 0)
        if not keep.any():
            continue
        c = colors[n % len(colors)]
        ax.loglog(t[keep], row[keep], color=c, label=f"e{n}")
        if show_bounds and normal and n >= 1 and row[0] > 0 and e00 > 0:
            ax.loglog(t[pos_t], polynomial_bound(row[0], e00, n, t[pos_t]),
                      color=c, ls="--", lw=0.8)
    ax.set_xlabel("t")
    ax.set_ylabel("energy")
    ax.legend(fontsize=8, ncol=2)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_trajectory(times, values, path) -> None:
    """State values ``g_i(t)`` against ``t`` on a log time axis."""
    times = np.asarray(times)
    values = np.asarray(values)
    keep = times > 0
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for i in range(values.shape[1]):
        ax.semilogx(times[keep], values[keep, i], label=f"state {i}")
    ax.set_xlabel("t")
    ax.set_ylabel("g(t)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
