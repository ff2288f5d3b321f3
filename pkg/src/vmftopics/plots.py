"""Report figures, rendered to files next to the JSON/CSV outputs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "save_loss_curves",
    "save_topic_bars",
    "save_latent_scatter",
    "save_ablation_curves",
]


def save_loss_curves(report, path) -> None:
    """Per-epoch loss components from a TrainReport."""
    epochs = report.epochs if hasattr(report, "epochs") else report["epochs"]
    if not epochs:
        return
    keys = [k for k in epochs[0] if k != "epoch"]
    fig, ax = plt.subplots(figsize=(7, 4))
    xs = range(len(epochs))
    for key in keys:
        ax.plot(xs, [e.get(key, np.nan) for e in epochs], label=key)
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_topic_bars(summaries, path, max_words: int = 10) -> None:
    """Horizontal probability bars for each topic's top words."""
    n = len(summaries)
    cols = min(3, n)
    rows = (n + cols - 1) // cols
    fig, axes = plt.subplots(rows, cols, figsize=(4 * cols, 2.6 * rows), squeeze=False)
    for t, summ in enumerate(summaries):
        ax = axes[t // cols][t % cols]
        words = summ.words[:max_words][::-1]
        probs = summ.probs[:max_words][::-1]
        ax.barh(range(len(words)), probs, color="tab:blue")
        ax.set_yticks(range(len(words)), words, fontsize=7)
        ax.set_title(f"topic {summ.topic}", fontsize=9)
    for t in range(n, rows * cols):
        axes[t // cols][t % cols].axis("off")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_latent_scatter(z: np.ndarray, labels, path) -> None:
    """2-D PCA of topic proportions, colored by label (or argmax topic)."""
    z = np.asarray(z, dtype=np.float64)
    centered = z - z.mean(axis=0, keepdims=True)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    xy = centered @ vt[:2].T
    color = np.asarray(labels) if labels is not None else np.argmax(z, axis=1)
    fig, ax = plt.subplots(figsize=(5, 4.5))
    sc = ax.scatter(xy[:, 0], xy[:, 1], c=color, s=6, cmap="tab10", alpha=0.7)
    ax.set_xlabel("pc 1")
    ax.set_ylabel("pc 2")
    fig.colorbar(sc, ax=ax, shrink=0.8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_ablation_curves(rows: list[dict], x_key: str, path) -> None:
    """Metric curves against the swept parameter (one line per metric)."""
    if not rows:
        return
    metric_keys = [k for k in rows[0] if k not in (x_key, "seed") and rows[0][k] is not None]
    xs = [row[x_key] for row in rows]
    fig, ax = plt.subplots(figsize=(7, 4))
    for key in metric_keys:
        ax.plot(xs, [row.get(key) for row in rows], marker="o", label=key)
    ax.set_xlabel(x_key)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
