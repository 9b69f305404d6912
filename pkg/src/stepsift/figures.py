"""Render diagnostic histograms to image files next to their CSV twins.

All figures use the Agg backend and fixed metadata so that re-running
diagnostics on identical inputs writes identical bytes.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402 - backend must be set first

from .analytics import CategoryHistogram, DeltaDistribution, Histogram

_SAVE_KW = {"dpi": 120, "metadata": {"Software": "stepsift"}}


def _bar_edges(histogram: Histogram) -> tuple[list[float], list[float]]:
    edges = histogram.bin_edges
    centers = [(edges[i] + edges[i + 1]) / 2.0 for i in range(len(edges) - 1)]
    widths = [edges[i + 1] - edges[i] for i in range(len(edges) - 1)]
    return centers, widths


def save_histogram_figure(
    histogram: Histogram | CategoryHistogram,
    path: str | Path,
    title: str,
    xlabel: str,
) -> Path:
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    if isinstance(histogram, Histogram):
        centers, widths = _bar_edges(histogram)
        ax.bar(centers, histogram.counts, width=widths, edgecolor="black", linewidth=0.4)
    else:
        positions = range(len(histogram.categories))
        ax.bar(positions, histogram.counts, edgecolor="black", linewidth=0.4)
        ax.set_xticks(list(positions))
        ax.set_xticklabels(histogram.categories, rotation=45, ha="right", fontsize=8)
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("count")
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return path


def save_delta_distribution_figure(distribution: DeltaDistribution, path: str | Path) -> Path:
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    for histogram, label, fraction in (
        (
            distribution.correct,
            "correct",
            distribution.negative_fraction_correct,
        ),
        (
            distribution.incorrect,
            "incorrect",
            distribution.negative_fraction_incorrect,
        ),
    ):
        if histogram.total == 0:
            continue
        centers, _ = _bar_edges(histogram)
        ax.step(
            centers,
            histogram.counts,
            where="mid",
            label=f"{label} (negative fraction {fraction:.2%})",
        )
    ax.axvline(0.0, color="gray", linewidth=0.8, linestyle="--")
    ax.set_title("Step-deletion score deltas by prediction correctness")
    ax.set_xlabel("delta")
    ax.set_ylabel("count")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return path
