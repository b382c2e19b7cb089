"""Matplotlib figures for evaluation reports (written to files, Agg backend)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _title(name) -> str:
    return f"generator {name}" if str(name).isdigit() else str(name)


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_profiles(groups: dict, path, n_show: int = 5, site: int = 0):
    """A few example day profiles per group (one panel each)."""
    n = len(groups)
    fig, axes = plt.subplots(1, n, figsize=(3.2 * n, 2.8), sharey=True, squeeze=False)
    for ax, (name, batch) in zip(axes[0], groups.items()):
        t = np.arange(batch.timesteps)
        for k in range(min(n_show, batch.n_samples)):
            ax.plot(t, batch.samples[k, site], lw=1)
        ax.set_title(_title(name), fontsize=10)
        ax.set_xlabel("timestep")
        ax.set_ylim(0, 1)
    axes[0][0].set_ylabel("power (p.u.)")
    _save(fig, path)


def plot_correlations(mats: dict, path):
    n = len(mats)
    fig, axes = plt.subplots(1, n, figsize=(3.0 * n, 2.9), squeeze=False)
    im = None
    for ax, (name, c) in zip(axes[0], mats.items()):
        im = ax.imshow(c, vmin=-1, vmax=1, cmap="RdBu_r")
        ax.set_title(_title(name), fontsize=10)
        ax.set_xticks(range(c.shape[0]))
        ax.set_yticks(range(c.shape[0]))
    fig.colorbar(im, ax=axes[0].tolist(), shrink=0.8)
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_stats(stats: dict, path):
    """Boxplots of per-scenario means and variances, one box per generator."""
    names = [_title(k) for k in stats]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8, 3))
    ax1.boxplot([s.means for s in stats.values()], whis=1.5)
    ax1.set_xticks(range(1, len(names) + 1), names)
    ax1.set_title("scenario mean")
    ax2.boxplot([s.variances for s in stats.values()], whis=1.5)
    ax2.set_xticks(range(1, len(names) + 1), names)
    ax2.set_title("scenario variance")
    _save(fig, path)
