"""Figure rendering for the CLI report paths.

Figures are written next to the delimited output; they are a convenience
view and are not part of the byte-reproducible artifacts.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .analytics import TransformationRecord
from .knn import ConvergenceCurve


def save_convergence_figure(
    curves: Mapping[int, ConvergenceCurve], path: str | Path
) -> None:
    """Mean test error vs training size, one line per k, with 95% CI bands."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for k in sorted(curves):
        pts = curves[k].points
        sizes = [p.size for p in pts]
        means = [p.mean for p in pts]
        low = [p.mean - p.ci95 for p in pts]
        high = [p.mean + p.ci95 for p in pts]
        ax.plot(sizes, means, marker="o", label=f"k={k}")
        ax.fill_between(sizes, low, high, alpha=0.2)
    ax.set_xlabel("training size")
    ax.set_ylabel("test error")
    ax.set_xscale("log")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_correlation_figure(
    records: Sequence[TransformationRecord], k: int, path: str | Path
) -> None:
    """Two panels: error vs dimension, and error vs mse with marker size
    proportional to the weight norm."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11, 4.5))
    errs = [rec.knn_error[k] for rec in records]
    dims = [rec.dim for rec in records]
    mses = [rec.mse for rec in records]
    norms = [rec.frobenius_norm for rec in records]
    max_norm = max(norms) or 1.0
    sizes = [30 + 170 * n / max_norm for n in norms]
    ax1.scatter(dims, errs)
    ax1.set_xlabel("dimension")
    ax1.set_ylabel(f"kNN error (k={k})")
    ax1.grid(True, alpha=0.3)
    ax2.scatter(mses, errs, s=sizes, alpha=0.7)
    for rec, x, y in zip(records, mses, errs):
        ax2.annotate(rec.name, (x, y), fontsize=7, alpha=0.8)
    ax2.set_xlabel("mse")
    ax2.set_ylabel(f"kNN error (k={k})")
    ax2.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
