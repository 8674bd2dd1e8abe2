"""Figure rendering for the CLI's ``--plot`` flag (headless, PNG files)."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def segmentation_figure(block, seg, path: str) -> None:
    """Data as a step trace with the fitted segment means drawn on top.

    ``block`` is the ingested :class:`~fpseg.cli.SequenceBlock`; ``seg``
    any solution with ``means``/``ends`` (and optional peak states, which
    get shaded).
    """
    bounds = np.asarray(block.boundaries, dtype=float)
    values = block.data.values
    fig, ax = plt.subplots(figsize=(9, 3.2), constrained_layout=True)
    ax.stairs(values, bounds, color="0.55", lw=0.8, label="data")
    states = seg.states or (None,) * len(seg.means)
    prev = 0
    for i, end in enumerate(seg.ends):
        x0, x1 = bounds[prev], bounds[end]
        ax.hlines(seg.means[i], x0, x1, color="tab:red", lw=2.0)
        if states[i] == "peak":
            ax.axvspan(x0, x1, color="tab:orange", alpha=0.15, lw=0)
        prev = end
    ax.set_xlabel("position")
    ax.set_ylabel("value")
    title = f"{len(seg.means)} segments"
    if block.name:
        title = f"{block.name}: {title}"
    ax.set_title(title, fontsize="medium")
    fig.savefig(path, dpi=120)
    plt.close(fig)


def bench_figure(rows, path: str) -> None:
    """Log-log scaling of wall time and stored intervals vs n."""
    ns = [r[0] for r in rows]
    secs = [r[1] for r in rows]
    medians = [r[2] for r in rows]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8, 3.2),
                                   constrained_layout=True)
    ax1.loglog(ns, secs, "o-", color="tab:blue")
    ax1.set_xlabel("data points n")
    ax1.set_ylabel("wall seconds")
    ax2.semilogx(ns, medians, "s-", color="tab:green")
    ax2.set_xlabel("data points n")
    ax2.set_ylabel("median stored intervals")
    ax2.set_ylim(bottom=0)
    fig.savefig(path, dpi=120)
    plt.close(fig)
