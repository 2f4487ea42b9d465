"""Figures written to files: length histogram, training curves, t-SNE scatter, attention heatmaps."""

from __future__ import annotations

import math
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .corpus import CorpusStats  # noqa: E402
from .trainer import TrainResult  # noqa: E402

# Keep emitted SVG stable across runs.
matplotlib.rcParams["svg.hashsalt"] = "gpcrbert"
matplotlib.rcParams["svg.fonttype"] = "none"
_SVG_META = {"Date": None, "Creator": None}


def _save(fig, path) -> None:
    kwargs = {"metadata": _SVG_META} if str(path).endswith(".svg") else {}
    fig.savefig(path, **kwargs)
    plt.close(fig)


def length_histogram(stats: CorpusStats, path, max_len: int | None = None) -> None:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    lo = np.asarray([b[0] for b in stats.histogram], dtype=float)
    width = np.asarray([b[1] - b[0] for b in stats.histogram], dtype=float)
    ax.bar(lo, [b[2] for b in stats.histogram], width=width, align="edge", color="0.45", edgecolor="white")
    if max_len is not None:
        ax.axvline(max_len, color="crimson", linestyle="--", label=f"length cutoff {max_len}")
        ax.legend(frameon=False)
    ax.set_xlabel("sequence length")
    ax.set_ylabel("sequences")
    fig.tight_layout()
    _save(fig, path)


def training_curves(result: TrainResult, path) -> None:
    fig, (ax_loss, ax_acc) = plt.subplots(1, 2, figsize=(9, 3.5))
    for run in result.runs:
        epochs = [e.epoch for e in run.history]
        ax_loss.plot(epochs, [e.train_loss for e in run.history], label=f"run {run.run}")
        ax_acc.plot(epochs, [e.train_acc for e in run.history], label=f"run {run.run}")
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("train loss")
    ax_acc.set_xlabel("epoch")
    ax_acc.set_ylabel("train accuracy")
    ax_acc.set_ylim(0, 1.02)
    ax_acc.legend(frameon=False)
    fig.tight_layout()
    _save(fig, path)


def tsne_scatter(coords: np.ndarray, classes: Sequence[str], path, max_labels: int = 20) -> None:
    fig, ax = plt.subplots(figsize=(6, 5))
    names = sorted(set(classes))
    cmap = plt.get_cmap("tab20", max(len(names), 1))
    labels = np.asarray(classes)
    for i, name in enumerate(names):
        pts = coords[labels == name]
        ax.scatter(pts[:, 0], pts[:, 1], s=14, color=cmap(i), label=name if len(names) <= max_labels else None)
    if len(names) <= max_labels:
        ax.legend(frameon=False, fontsize=7, loc="best")
    ax.set_xticks([])
    ax.set_yticks([])
    fig.tight_layout()
    _save(fig, path)


def attention_heatmap_svg(matrices: np.ndarray, path, title: str = "") -> None:
    """One panel per head; darker is larger, and zero weight renders white.

    Each panel is a single mesh with one path per cell, grouped under the id
    ``head<n>``.
    """
    n_heads, seq, _ = matrices.shape
    cols = min(n_heads, 4)
    rows = math.ceil(n_heads / cols)
    fig, axes = plt.subplots(rows, cols, figsize=(3 * cols, 3 * rows), squeeze=False)
    for h, ax in enumerate(axes.flat):
        if h >= n_heads:
            ax.axis("off")
            continue
        mesh = ax.pcolormesh(matrices[h], cmap="Greys", vmin=0.0, vmax=1.0, edgecolors="none", rasterized=False)
        mesh.set_gid(f"head{h + 1}")
        ax.set_xlim(0, seq)
        ax.set_ylim(seq, 0)
        ax.set_title(f"head {h + 1}", fontsize=8)
        ax.set_xticks([])
        ax.set_yticks([])
    if title:
        fig.suptitle(title, fontsize=9)
    fig.tight_layout()
    _save(fig, path)
