"""File-based figure rendering for CLI reports.

Uses the Agg backend so rendering works headless; every function writes a PNG
next to the delimited data it visualizes and returns the path.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def render_curve(path, x, y, xlabel: str, ylabel: str, title: str = ""):
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.plot(x, y, lw=1.5)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def render_sweep(path, grid, series: dict, best, xlabel: str, ylabel: str):
    """Per-profile sojourn curves with the lower envelope highlighted.

    ``series`` maps profile labels to value arrays over ``grid``; ``best`` is
    the envelope.
    """
    fig, ax = plt.subplots(figsize=(8, 5))
    for label, values in series.items():
        ax.plot(grid, values, lw=0.9, alpha=0.7, label=label)
    ax.plot(grid, best, "k--", lw=2.0, label="optimal")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3)
    if len(series) <= 12:
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path
