"""Regression metrics and per-target model comparison reports."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .tensor import ShapeError

__all__ = [
    "EvaluationReport",
    "MetricTriple",
    "UndefinedR2Error",
    "compare",
    "compute_metrics",
    "load_report",
    "render_table",
    "save_report",
]


class UndefinedR2Error(ValueError):
    """R² is undefined because the targets have zero variance.

    ``rmse`` and ``mae`` are still attached so callers can report them.
    """

    def __init__(self, rmse: float, mae: float):
        super().__init__("r2 undefined: targets are constant")
        self.rmse = rmse
        self.mae = mae


@dataclass(frozen=True)
class MetricTriple:
    r2: float
    rmse: float
    mae: float


def compute_metrics(y, y_hat) -> MetricTriple:
    """R², RMSE and MAE, with the evaluation-set mean in the total sum of squares."""
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    y_hat = np.asarray(y_hat, dtype=np.float64).reshape(-1)
    if len(y) != len(y_hat):
        raise ShapeError(f"length mismatch: {len(y)} targets vs {len(y_hat)} predictions")
    if len(y) == 0:
        raise ShapeError("metrics need at least one sample")
    resid = y - y_hat
    ss_res = float(resid @ resid)
    rmse = math.sqrt(ss_res / len(y))
    mae = float(np.abs(resid).sum() / len(y))
    centred = y - y.mean()
    ss_tot = float(centred @ centred)
    if ss_tot == 0.0:
        raise UndefinedR2Error(rmse, mae)
    return MetricTriple(1.0 - ss_res / ss_tot, rmse, mae)


@dataclass
class EvaluationReport:
    target: str
    rows: list[tuple[str, MetricTriple]] = field(default_factory=list)
    split: str = ""
    seed: int = 0

    def __post_init__(self):
        names = [name for name, _ in self.rows]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate model names in report: {names}")
        # stable: equal r2 keeps insertion order
        self.rows = sorted(self.rows, key=lambda row: -row[1].r2)

    @property
    def models(self) -> list[str]:
        return [name for name, _ in self.rows]

    def __getitem__(self, model: str) -> MetricTriple:
        for name, m in self.rows:
            if name == model:
                return m
        raise KeyError(model)


def compare(predictors: Mapping[str, Callable[[np.ndarray], np.ndarray]], X, y, target: str,
            split: str = "", seed: int = 0) -> EvaluationReport:
    """Score every predictor on the same test set and rank by R².

    ``predictors`` maps a model name to a callable returning predictions for
    ``X``. Precomputed predictions can be passed as arrays instead.
    """
    y = np.asarray(y, dtype=np.float64)
    if len(y) == 0:
        raise ValueError("cannot compare models on an empty test set")
    rows = []
    for name, model in predictors.items():
        pred = model(X) if callable(model) else model
        rows.append((name, compute_metrics(y, pred)))
    return EvaluationReport(target, rows, split, seed)


def save_report(report: EvaluationReport, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["model", "r2", "rmse", "mae"])
        for name, m in report.rows:
            writer.writerow([name, f"{m.r2:.9g}", f"{m.rmse:.9g}", f"{m.mae:.9g}"])


def load_report(path: str | Path, target: str = "", split: str = "", seed: int = 0) -> EvaluationReport:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["model", "r2", "rmse", "mae"]:
            raise ValueError(f"{path}: unexpected report header {reader.fieldnames}")
        rows = [(r["model"], MetricTriple(float(r["r2"]), float(r["rmse"]), float(r["mae"])))
                for r in reader]
    return EvaluationReport(target, rows, split, seed)


def render_table(report: EvaluationReport, title: str | None = None) -> str:
    """Plain-text table; the best value of each column carries a ``*``."""
    if not report.rows:
        return (title or report.target) + "\n(no models)\n"
    best = {
        "r2": max(m.r2 for _, m in report.rows),
        "rmse": min(m.rmse for _, m in report.rows),
        "mae": min(m.mae for _, m in report.rows),
    }

    def cell(metric: str, value: float) -> str:
        return f"{value:.3f}" + ("*" if value == best[metric] else " ")

    body = [(name, cell("r2", m.r2), cell("rmse", m.rmse), cell("mae", m.mae)) for name, m in report.rows]
    header = ("Model", "R²", "RMSE", "MAE")
    widths = [max(len(header[i]), *(len(r[i]) for r in body)) for i in range(4)]
    lines = [title or f"Prediction results for {report.target}"]
    lines.append("  ".join([header[0].ljust(widths[0])] + [header[i].rjust(widths[i]) for i in (1, 2, 3)]))
    lines.append("  ".join("-" * w for w in widths))
    for r in body:
        lines.append("  ".join([r[0].ljust(widths[0])] + [r[i].rjust(widths[i]) for i in (1, 2, 3)]))
    lines.append("* best value in column")
    return "\n".join(lines) + "\n"
