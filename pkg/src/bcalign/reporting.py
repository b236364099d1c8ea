"""Report rendering: markdown/JSON/CSV tables plus matplotlib figures written
to files next to the delimited output."""

from __future__ import annotations

import csv
import json
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .features import AFFECTIVE_DIMS

LEXEME_COLORS = plt.cm.tab20.colors


def write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_csv(path, headers: Sequence[str], rows: Sequence[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(headers)
        writer.writerows(rows)


def markdown_table(headers: Sequence[str], rows: Sequence[Sequence]) -> str:
    def fmt(v):
        if isinstance(v, float):
            return f"{v:.3f}"
        return str(v)

    lines = [
        "| " + " | ".join(headers) + " |",
        "| " + " | ".join("---" for _ in headers) + " |",
    ]
    lines += ["| " + " | ".join(fmt(v) for v in row) + " |" for row in rows]
    return "\n".join(lines) + "\n"


def plot_history(history: Sequence[Mapping], path) -> None:
    """Training loss and validation metric per epoch."""
    epochs = [h["epoch"] for h in history]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax1.plot(epochs, [h["train_loss"] for h in history], marker="o")
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("train loss")
    ax1.grid(alpha=0.3)
    ax2.plot(epochs, [100 * h["val_topk"] for h in history], marker="o", color="tab:green")
    ax2.set_xlabel("epoch")
    ax2.set_ylabel("val top-k% accuracy")
    ax2.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_perplexity(turns: Sequence[int], trained: Mapping, baseline: Mapping, path) -> None:
    """Backchannel perplexity versus context length, with the untrained baseline."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(list(turns), [trained[k] for k in turns], marker="o", label="trained")
    ax.plot(list(turns), [baseline[k] for k in turns], marker="s", linestyle="--",
            color="tab:gray", label="uniform baseline")
    ax.set_xlabel("context length (turns)")
    ax.set_ylabel("backchannel perplexity")
    ax.set_xticks(list(turns))
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_rating_distributions(medians: Mapping[str, Mapping[str, float]],
                              pairwise_r2: Mapping[str, float], path) -> None:
    """Histogram of per-backchannel median ratings per affective dimension,
    with the pairwise mean-rating correlations inset as text."""
    fig, axes = plt.subplots(1, len(AFFECTIVE_DIMS), figsize=(10, 3), sharey=True)
    bins = np.arange(0.75, 5.76, 0.5)
    for ax, dim in zip(axes, AFFECTIVE_DIMS):
        values = list(medians[dim].values())
        ax.hist(values, bins=bins, color="tab:blue", edgecolor="white")
        ax.set_title(dim)
        ax.set_xlabel("median rating")
    axes[0].set_ylabel("backchannels")
    text = "\n".join(f"{k}: $R^2$={v:.2f}" for k, v in pairwise_r2.items())
    axes[-1].text(0.97, 0.95, text, transform=axes[-1].transAxes, fontsize=8,
                  va="top", ha="right",
                  bbox=dict(boxstyle="round", facecolor="white", alpha=0.8))
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_bundle_scatter(points: Sequence[Mapping], xdim: str, ydim: str, path,
                        lexemes: Sequence[str] | None = None) -> None:
    """Scatter of bundle points on two affective axes, colored by lexeme."""
    visible = [p for p in points if lexemes is None or p["lexeme"] in lexemes]
    fig, ax = plt.subplots(figsize=(6, 5))
    order = sorted({p["lexeme"] for p in visible})
    for i, lexeme in enumerate(order):
        pts = [p for p in visible if p["lexeme"] == lexeme]
        ax.scatter(
            [p["coords"][xdim] for p in pts],
            [p["coords"][ydim] for p in pts],
            s=14, alpha=0.7, label=lexeme,
            color=LEXEME_COLORS[i % len(LEXEME_COLORS)],
        )
    ax.set_xlabel(xdim)
    ax.set_ylabel(ydim)
    if order:
        ax.legend(fontsize=7, markerscale=1.2, ncols=2)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
