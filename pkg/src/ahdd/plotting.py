"""Figures written next to the TSV/JSON outputs of the CLI."""

from __future__ import annotations

import math
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
}


def figsize(width: float = 6.0, ratio: float = None) -> tuple[float, float]:
    if ratio is None:
        ratio = (math.sqrt(5) - 1.0) / 2.0
    return width, width * ratio


def _save(fig, path) -> None:
    fig.tight_layout()
    # no Software tag: keeps PNG bytes identical across library versions
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


def plot_loss_curves(rows: Sequence[dict], path) -> None:
    """Loss components and dev micro-F1 per epoch."""
    with plt.rc_context(STYLE):
        fig, (ax_loss, ax_f1) = plt.subplots(1, 2, figsize=figsize(8.0, 0.38))
        epochs = [r["epoch"] for r in rows]
        for key in ("bce_doc", "bce_assoc", "l_sim", "l_dis", "total"):
            ax_loss.plot(epochs, [r[key] for r in rows], marker="o", markersize=2.5, label=key)
        ax_loss.set_xlabel("epoch")
        ax_loss.set_ylabel("mean loss per document")
        ax_loss.set_yscale("symlog", linthresh=1e-2)
        ax_loss.legend(frameon=False)
        ax_f1.plot(epochs, [r["dev_micro_f1"] for r in rows], color="k", marker="o", markersize=2.5)
        ax_f1.set_xlabel("epoch")
        ax_f1.set_ylabel("dev micro-F1")
        ax_f1.set_ylim(0, 1.02)
        _save(fig, path)


def plot_group_f1(groups: dict[str, dict[str, tuple[float, float]]], path) -> None:
    """Side-by-side bars of macro/micro F1 for each grouping (frequency, length)."""
    panels = [(title, g) for title, g in groups.items() if g]
    if not panels:
        return
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, len(panels), figsize=figsize(4.0 * len(panels), 0.7 / len(panels) * 1.3),
                                 squeeze=False)
        for ax, (title, g) in zip(axes[0], panels):
            names = list(g)
            xs = range(len(names))
            ax.bar([x - 0.2 for x in xs], [g[n][0] for n in names], width=0.4, label="macro F1")
            ax.bar([x + 0.2 for x in xs], [g[n][1] for n in names], width=0.4, label="micro F1")
            ax.set_xticks(list(xs))
            ax.set_xticklabels(names, rotation=30)
            ax.set_ylim(0, 1.05)
            ax.set_title(title)
            ax.legend(frameon=False)
        _save(fig, path)


def plot_attention(words: Sequence[str], weights: Sequence[float], path, title: str = "") -> None:
    """Bar chart of one code's attention over the note's tokens."""
    with plt.rc_context(STYLE):
        width = min(max(6.0, 0.12 * len(words)), 30.0)
        fig, ax = plt.subplots(figsize=(width, 2.8))
        ax.bar(range(len(words)), weights, color="#c0392b")
        if len(words) <= 250:
            ax.set_xticks(range(len(words)))
            ax.set_xticklabels(words, rotation=90, fontsize=6)
        ax.set_ylabel("attention weight")
        ax.set_xlim(-0.5, len(words) - 0.5)
        if title:
            ax.set_title(title)
        _save(fig, path)
