"""Static images for run artifacts: heatmaps with annotated ranges, curves.

Rendering is deterministic: fixed figure sizes, dpi, colormap, and pinned
PNG metadata, so re-rendering the same data yields byte-identical files.
"""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

DPI = 110
CMAP = "viridis"
_PNG_META = {"Software": "stfield"}


def save_heatmap(path, grid2d, title, xlabel="", ylabel="", extent=None) -> None:
    """One annotated heatmap; NaN cells are masked out."""
    data = np.ma.masked_invalid(np.asarray(grid2d, dtype=float))
    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    im = ax.imshow(data, origin="lower", cmap=CMAP, aspect="auto", extent=extent)
    if data.count():
        lo, hi = float(data.min()), float(data.max())
        ax.set_title(f"{title}  [min {lo:.4g}, max {hi:.4g}]")
    else:
        ax.set_title(f"{title}  [empty]")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    fig.colorbar(im, ax=ax)
    fig.tight_layout()
    fig.savefig(path, dpi=DPI, metadata=_PNG_META)
    plt.close(fig)


def save_curves(path, x, series, title, xlabel, ylabel, logy=False) -> None:
    """Labeled line plot; `series` maps label -> y values."""
    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    for label, y in series.items():
        ax.plot(x[: len(y)], y, label=label)
    if logy:
        ax.set_yscale("log")
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3)
    if len(series) > 1:
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=DPI, metadata=_PNG_META)
    plt.close(fig)
