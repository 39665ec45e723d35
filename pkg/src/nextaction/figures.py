"""Render evaluation reports to PNG figures.

One figure per metric, prefix size on the x-axis, one line per method
series. Files land next to the delimited report so a run directory is
self-contained.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .evaluation import BASELINE, EvalReport

METRICS = (
    ("in_time_rate", "in-time instances (%)"),
    ("mean_dl", "mean Damerau-Levenshtein distance"),
    ("mean_dl_norm", "mean normalized distance"),
)

_MARKERS = ("o", "s", "^", "D", "v", "P", "X")


def _series_label(method: str, k: int) -> str:
    return method if method == BASELINE else f"{method} k={k}"


def render_figures(report: EvalReport, out_dir) -> list[Path]:
    """Write one PNG per metric; returns the created paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    for metric, ylabel in METRICS:
        fig, ax = plt.subplots(figsize=(7.0, 4.2))
        for i, (method, k) in enumerate(report.series()):
            cells = sorted(
                (c for c in report.cells if (c.method, c.k) == (method, k)),
                key=lambda c: c.prefix_size,
            )
            ax.plot(
                [c.prefix_size for c in cells],
                [getattr(c, metric) for c in cells],
                marker=_MARKERS[i % len(_MARKERS)],
                label=_series_label(method, k),
            )
        ax.set_xlabel("prefix size")
        ax.set_ylabel(ylabel)
        if metric == "in_time_rate":
            ax.set_ylim(-2.0, 102.0)
        ax.grid(True, alpha=0.3)
        if report.cells:
            ax.legend()
        fig.tight_layout()
        path = out_dir / f"eval_{metric}.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    return written
