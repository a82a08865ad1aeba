"""Turn per-section inspection histories into fixed-length training windows."""

from __future__ import annotations

import csv
import math
import re
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .data import BINARY_FIELDS, InspectionRecord, RecordSet

__all__ = [
    "FEATURES",
    "TARGET_FIELDS",
    "Scaler",
    "SectionSeries",
    "SplitError",
    "WindowSample",
    "apply_scaler",
    "build_series",
    "fit_scaler",
    "flatten",
    "load_windows",
    "make_windows",
    "save_windows",
    "split",
    "stack",
    "unflatten",
    "windows_for",
]

# one row of a window; the current target values ride along as
# autoregressive inputs
FEATURES = (
    "climatic_zone",
    "depth_in",
    "drum",
    "speed_fpm",
    "surface_type",
    "month",
    "skid_before",
    "skid_after",
    "macro_before_mm",
    "macro_after_mm",
    "skid_number",
    "macro_mm",
)
BINARY_COLUMNS = tuple(FEATURES.index(name) for name in BINARY_FIELDS)
TARGET_FIELDS = {"skid": "skid_number", "macrotexture": "macro_mm"}
STD_FLOOR = 1e-8


class SplitError(ValueError):
    """The requested train/test split cannot be formed."""


@dataclass(frozen=True)
class SectionSeries:
    section_id: str
    records: tuple[InspectionRecord, ...]

    @property
    def months(self) -> list[int]:
        return [r.month for r in self.records]

    def __len__(self) -> int:
        return len(self.records)


@dataclass(frozen=True, eq=False)
class WindowSample:
    section_id: str
    window: np.ndarray  # (L, d_x)
    target_month: int
    target: float
    padded: bool = False


def build_series(rs: RecordSet | Iterable[InspectionRecord]) -> list[SectionSeries]:
    """Group records by section (first-appearance order) and sort each by month."""
    groups: OrderedDict[str, list[InspectionRecord]] = OrderedDict()
    for rec in rs:
        groups.setdefault(rec.section_id, []).append(rec)
    return [SectionSeries(sid, tuple(sorted(recs, key=lambda r: r.month)))
            for sid, recs in groups.items()]


def _row(rec: InspectionRecord) -> list[float]:
    return [float(getattr(rec, name)) for name in FEATURES]


def make_windows(series: SectionSeries, L: int, task: str = "skid",
                 allow_padding: bool = False) -> list[WindowSample]:
    """Cut stride-1 windows of ``L`` consecutive records, each targeting the next record.

    A series with fewer than ``L + 1`` records yields a single left-padded
    window (earliest record repeated) when ``allow_padding`` is set, and
    nothing otherwise.
    """
    if L < 1:
        raise ValueError(f"window length must be >= 1, got {L}")
    if task not in TARGET_FIELDS:
        raise ValueError(f"unknown task {task!r}; expected one of {sorted(TARGET_FIELDS)}")
    target_field = TARGET_FIELDS[task]
    recs = series.records
    rows = np.array([_row(r) for r in recs], dtype=np.float64).reshape(len(recs), len(FEATURES))
    n = len(recs)
    out = []
    if n >= L + 1:
        for end in range(L, n):
            out.append(WindowSample(series.section_id, rows[end - L:end].copy(),
                                    recs[end].month, float(getattr(recs[end], target_field))))
    elif allow_padding and n >= 2:
        history = rows[:-1]
        pad = np.repeat(history[:1], L - len(history), axis=0)
        out.append(WindowSample(series.section_id, np.vstack([pad, history]),
                                recs[-1].month, float(getattr(recs[-1], target_field)), padded=True))
    return out


def windows_for(series: Sequence[SectionSeries], L: int, task: str = "skid",
                allow_padding: bool = False) -> list[WindowSample]:
    out = []
    for s in series:
        out.extend(make_windows(s, L, task, allow_padding))
    return out


def split(samples: Sequence[WindowSample], ratio: float = 0.8, mode: str = "sections",
          seed: int = 0) -> tuple[list[WindowSample], list[WindowSample]]:
    """Partition samples into train and test.

    ``rows`` shuffles samples and cuts at ``floor(ratio * N)``. ``sections``
    shuffles the distinct section ids and moves whole sections into train
    until the train fraction first reaches ``ratio`` (the boundary section
    goes to train); at least one section is always kept for test. Both
    partitions preserve input order.
    """
    if not 0 < ratio < 1:
        raise ValueError(f"ratio must lie in (0, 1), got {ratio}")
    n = len(samples)
    if n < 2:
        raise SplitError(f"need at least 2 samples to split, got {n}")
    rng = np.random.Generator(np.random.PCG64(seed))
    if mode == "rows":
        order = rng.permutation(n)
        cut = math.floor(ratio * n + 1e-9)
        train_idx = set(order[:cut].tolist())
    elif mode == "sections":
        sections = sorted({s.section_id for s in samples})
        if len(sections) < 2:
            raise SplitError("sections split needs at least 2 distinct sections")
        counts: dict[str, int] = {}
        for s in samples:
            counts[s.section_id] = counts.get(s.section_id, 0) + 1
        shuffled = [sections[i] for i in rng.permutation(len(sections))]
        chosen: set[str] = set()
        taken = 0
        for sid in shuffled[:-1]:
            chosen.add(sid)
            taken += counts[sid]
            if taken >= ratio * n:
                break
        train_idx = {i for i, s in enumerate(samples) if s.section_id in chosen}
    else:
        raise ValueError(f"unknown split mode {mode!r}; expected 'rows' or 'sections'")
    train = [s for i, s in enumerate(samples) if i in train_idx]
    test = [s for i, s in enumerate(samples) if i not in train_idx]
    return train, test


@dataclass(frozen=True, eq=False)
class Scaler:
    mean: np.ndarray
    std: np.ndarray
    passthrough: tuple[int, ...] = field(default=BINARY_COLUMNS)

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.std


def fit_scaler(train: Sequence[WindowSample], passthrough: Sequence[int] = BINARY_COLUMNS) -> Scaler:
    """Per-column z-score statistics over every window row of ``train``.

    Pass-through columns get mean 0 and std 1 so they are left unchanged.
    """
    if not train:
        raise ValueError("cannot fit a scaler on an empty training set")
    rows = np.concatenate([s.window for s in train], axis=0)
    mean = rows.mean(axis=0)
    # a summed mean of identical values can be off by an ulp, which the std
    # floor would blow up; anchor constant columns at their exact value
    constant = rows.max(axis=0) == rows.min(axis=0)
    mean[constant] = rows[0, constant]
    std = np.maximum(rows.std(axis=0), STD_FLOOR)
    keep = list(passthrough)
    mean[keep] = 0.0
    std[keep] = 1.0
    return Scaler(mean, std, tuple(keep))


def apply_scaler(scaler: Scaler, samples: Sequence[WindowSample]) -> list[WindowSample]:
    """Scale window features; targets are never touched."""
    return [WindowSample(s.section_id, scaler.transform(s.window), s.target_month, s.target, s.padded)
            for s in samples]


def flatten(window: np.ndarray) -> np.ndarray:
    return np.asarray(window, dtype=np.float64).reshape(-1)


def unflatten(vector: np.ndarray, L: int, d_x: int = len(FEATURES)) -> np.ndarray:
    return np.asarray(vector, dtype=np.float64).reshape(L, d_x)


def stack(samples: Sequence[WindowSample]) -> tuple[np.ndarray, np.ndarray]:
    """Return (windows of shape (n, L, d_x), targets of shape (n,))."""
    if not samples:
        return np.zeros((0, 0, len(FEATURES))), np.zeros(0)
    return (np.stack([s.window for s in samples]),
            np.array([s.target for s in samples], dtype=np.float64))


# ---------------------------------------------------------------------------
# CSV export
# ---------------------------------------------------------------------------

_FEATURE_COLUMN = re.compile(r"^x(\d+)_(.+)$")


def window_columns(L: int) -> list[str]:
    return [f"x{t}_{name}" for t in range(L) for name in FEATURES]


def save_windows(samples: Sequence[WindowSample], path: str | Path, L: int | None = None) -> None:
    """One row per sample: section_id, target_month, padded, L*d_x features, target."""
    if L is None:
        L = samples[0].window.shape[0] if samples else 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["section_id", "target_month", "padded", *window_columns(L), "target"])
        for s in samples:
            writer.writerow([s.section_id, s.target_month, int(s.padded),
                             *(f"{v:.17g}" for v in flatten(s.window)), f"{s.target:.17g}"])


def load_windows(path: str | Path) -> tuple[list[WindowSample], int]:
    """Read a window CSV; returns the samples and the window length from the header."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty window file") from None
        feats = header[3:-1]
        steps = set()
        for name in feats:
            m = _FEATURE_COLUMN.match(name)
            if not m or m.group(2) not in FEATURES:
                raise ValueError(f"{path}: unexpected column {name!r}")
            steps.add(int(m.group(1)))
        L = len(steps)
        if feats != window_columns(L):
            raise ValueError(f"{path}: feature columns do not form a complete window of length {L}")
        out = []
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                values = np.array([float(v) for v in row[3:-1]])
                target = float(row[-1]) if row[-1] != "" else math.nan
                out.append(WindowSample(row[0], unflatten(values, L), int(row[1]), target, bool(int(row[2]))))
            except (ValueError, IndexError) as exc:
                raise ValueError(f"{path}: line {line}: {exc}") from None
    return out, L
