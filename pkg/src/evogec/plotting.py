"""Figures written next to the CSV/markdown reports."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

plt.rcParams.update(
    {
        "axes.labelsize": 11,
        "axes.spines.top": False,
        "axes.spines.right": False,
        "xtick.labelsize": 9,
        "ytick.labelsize": 9,
        "legend.fontsize": 9,
        "legend.frameon": False,
        "savefig.dpi": 150,
    }
)


def plot_trajectory(log, path) -> None:
    """Every candidate's WER by iteration, with the best-so-far line on top."""
    fig, ax = plt.subplots(figsize=(5.5, 3.8))
    xs = [c.iteration for c in log.population]
    ys = [100.0 * c.score for c in log.population]
    ax.scatter(xs, ys, s=22, color="0.55", label="candidate", zorder=2)

    best_x = [b["iteration"] for b in log.best_so_far]
    best_y = [100.0 * b["score"] for b in log.best_so_far]
    ax.plot(best_x, best_y, marker="o", color="C3", lw=1.8, label="best so far", zorder=3)

    ax.set_xlabel("iteration")
    ax.set_ylabel("WER (%)")
    ax.set_xticks(sorted(set(xs)))
    ax.legend(loc="upper right")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_utterance_wer(results, path, bins: int = 20) -> None:
    wers = [100.0 * r.stats.wer for r in results if r.stats is not None and r.stats.ref_len]
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    ax.hist(wers, bins=bins, color="C0", edgecolor="white")
    ax.set_xlabel("utterance WER (%)")
    ax.set_ylabel("utterances")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_table(rows, path) -> None:
    """Horizontal bars, one per results-table row."""
    fig, ax = plt.subplots(figsize=(5.5, 0.35 * len(rows) + 1.2))
    labels = [f"{r.label} {r.prompt}" for r in rows]
    values = [r.wer_percent for r in rows]
    ax.barh(range(len(rows)), values, color="C0")
    ax.set_yticks(range(len(rows)))
    ax.set_yticklabels(labels)
    ax.invert_yaxis()
    ax.set_xlabel("WER (%)")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
