"""SVG bar charts of per-model R², written byte-for-byte reproducibly."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .evaluation import EvaluationReport  # noqa: E402

# fixed hash salt and no date stamp keep repeated renders identical
RC_PARAMS = {
    "svg.hashsalt": "skidcast",
    "svg.fonttype": "path",
    "font.family": "DejaVu Sans",
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
}


def figure_size(n_bars: int) -> tuple[float, float]:
    width = max(3.5, 0.45 * n_bars + 1.5)
    return width, 3.0


def plot_r2(report: EvaluationReport, path: str | Path, title: str | None = None) -> Path:
    """Horizontal bars of test R², best model on top."""
    path = Path(path)
    names = report.models[::-1]
    values = [report[n].r2 for n in names]
    with plt.rc_context(RC_PARAMS):
        fig, ax = plt.subplots(figsize=figure_size(len(names)))
        bars = ax.barh(range(len(names)), values, color="#4c72b0")
        if values:
            bars[-1].set_color("#c44e52")
        ax.set_yticks(range(len(names)))
        ax.set_yticklabels(names)
        lo = min([0.0, *values])
        ax.set_xlim(lo, 1.0)
        ax.set_xlabel("test R²")
        ax.set_title(title or f"{report.target}: R² by model")
        for i, v in enumerate(values):
            ax.text(v, i, f" {v:.3f}", va="center", fontsize=7)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return path
