"""Static figures for detection results and benchmark tables.

Figures are built on bare ``Figure`` objects (no pyplot state), so they can
be rendered from worker threads. PNG metadata is stripped so reruns produce
identical files.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib as mpl
import numpy as np
from matplotlib.figure import Figure

STYLE = {
    "font.size": 9,
    "axes.titlesize": 9,
    "axes.labelsize": 9,
    "axes.linewidth": 0.6,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.fontsize": 8,
    "legend.frameon": False,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "lines.linewidth": 0.8,
    "savefig.dpi": 120,
}
NORMAL_COLOR = "#3b6ea5"
ANOMALY_COLOR = "#c0392b"
MAX_PANELS = 8


def _save(fig: Figure, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="png", metadata={"Software": None})
    return path


def detection_figure(result, path) -> Path:
    """Column traces with flagged rows marked, over a panel of the raw score."""
    series = result.series
    cols = list(result.columns)[:MAX_PANELS]
    x = np.arange(len(series))
    flagged = series.label == -1
    with mpl.rc_context(STYLE):
        fig = Figure(figsize=(8, 1.4 * (len(cols) + 1) + 0.4))
        axes = fig.subplots(len(cols) + 1, 1, sharex=True, squeeze=False)[:, 0]
        for ax, col in zip(axes, cols):
            y = result.frame.columns[col]
            ax.plot(x, y, color=NORMAL_COLOR)
            ax.scatter(x[flagged], y[flagged], s=12, color=ANOMALY_COLOR, zorder=3)
            ax.set_ylabel(col if len(col) <= 18 else col[:16] + "..", rotation=0, ha="right", va="center")
        ax = axes[-1]
        ax.plot(x, series.raw, color="0.3")
        ax.scatter(x[flagged], series.raw[flagged], s=12, color=ANOMALY_COLOR, zorder=3, label="flagged")
        ax.set_ylabel("raw score", rotation=0, ha="right", va="center")
        ax.set_xlabel("row")
        if flagged.any():
            ax.legend(loc="upper right")
        fig.suptitle(f"{result.summary['endpoint']}: {int(flagged.sum())} of {len(series)} rows flagged")
        fig.tight_layout()
        return _save(fig, path)


def benchmark_figure(rows, path, reference: dict | None = None) -> Path:
    """Grouped bars of mean F1 per dataset and estimator, with optional reference ticks."""
    datasets = sorted({r.dataset for r in rows})
    estimators = list(dict.fromkeys(r.estimator for r in rows))
    f1 = {(r.estimator, r.dataset): r.f1 for r in rows}
    width = 0.8 / max(len(estimators), 1)
    base = np.arange(len(datasets))
    with mpl.rc_context(STYLE):
        fig = Figure(figsize=(max(5, 1.6 * len(datasets) + 3), 3.2))
        ax = fig.subplots()
        cmap = mpl.colormaps["tab10"]
        for k, est in enumerate(estimators):
            xs = base + (k - (len(estimators) - 1) / 2) * width
            vals = [f1.get((est, ds), np.nan) for ds in datasets]
            ax.bar(xs, np.nan_to_num(vals), width=width * 0.9, color=cmap(k % 10), label=est)
            if reference:
                ref = [reference.get(est, {}).get(ds) for ds in datasets]
                ref = [np.nan if v is None else v for v in ref]
                ax.scatter(xs, ref, marker="_", s=80, color="black", zorder=3)
        ax.set_xticks(base, datasets)
        ax.set_ylim(0, 1.05)
        ax.set_ylabel("mean best F1")
        ax.legend(ncol=2, loc="upper left", bbox_to_anchor=(1.0, 1.0))
        fig.tight_layout()
        return _save(fig, path)
