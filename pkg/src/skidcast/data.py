"""Inspection records, CSV storage, validation and the synthetic generator.

A record is one lane segment observed at one month after micro-milling. The
field names double as CSV column names.
"""

from __future__ import annotations

import csv
import dataclasses
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "BINARY_FIELDS",
    "DEFAULT_RANGES",
    "FIELDS",
    "SECTION_CONSTANT_FIELDS",
    "TABLE1_STATS",
    "DataError",
    "DecayParams",
    "DuplicateRecordError",
    "InspectionRecord",
    "RecordSet",
    "RowError",
    "SchemaError",
    "SyntheticConfig",
    "ValidationReport",
    "VariableStats",
    "Violation",
    "generate_synthetic",
    "load_records",
    "save_records",
    "validate",
]


class DataError(ValueError):
    """Base class for problems with record data."""


class SchemaError(DataError):
    """The CSV header lacks a required column."""


class RowError(DataError):
    """A CSV cell could not be parsed or violates a coding rule."""


class DuplicateRecordError(DataError):
    """Two records share (section_id, month)."""


FIELDS = (
    "section_id",
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
BINARY_FIELDS = ("climatic_zone", "drum", "surface_type")
INT_FIELDS = BINARY_FIELDS + ("month",)
SECTION_CONSTANT_FIELDS = ("skid_before", "skid_after", "macro_before_mm", "macro_after_mm")

# closed validation ranges; month 0 targets are checked against the
# after-milling range because they carry the after-milling measurement
DEFAULT_RANGES: dict[str, tuple[float, float]] = {
    "depth_in": (0.20, 0.50),
    "speed_fpm": (30.0, 100.0),
    "month": (0, 18),
    "skid_before": (9.0, 35.0),
    "skid_after": (15.0, 58.0),
    "macro_before_mm": (0.16, 1.73),
    "macro_after_mm": (0.48, 3.58),
    "skid_number": (10.5, 47.0),
    "macro_mm": (0.28, 2.89),
}
_MONTH0_RANGE_SOURCE = {"skid_number": "skid_after", "macro_mm": "macro_after_mm"}


@dataclass(frozen=True)
class InspectionRecord:
    section_id: str
    climatic_zone: int
    depth_in: float
    drum: int
    speed_fpm: float
    surface_type: int
    month: int
    skid_before: float
    skid_after: float
    macro_before_mm: float
    macro_after_mm: float
    skid_number: float
    macro_mm: float


@dataclass(frozen=True)
class RecordSet:
    records: tuple[InspectionRecord, ...]
    provenance: str = "loaded"
    seed: int | None = None

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------


def _format_cell(name: str, value) -> str:
    if name == "section_id":
        return str(value)
    if name in INT_FIELDS:
        return str(int(value))
    return f"{float(value):.9g}"


def save_records(rs: RecordSet | Iterable[InspectionRecord], path: str | Path) -> None:
    """Write records as UTF-8 CSV, floats at 9 significant digits."""
    records = rs.records if isinstance(rs, RecordSet) else tuple(rs)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(FIELDS)
        for rec in records:
            writer.writerow([_format_cell(name, getattr(rec, name)) for name in FIELDS])


def _parse_cell(name: str, text: str, line: int):
    text = text.strip()
    if name == "section_id":
        if not text:
            raise RowError(f"line {line}: empty section_id")
        return text
    try:
        value = float(text)
    except ValueError:
        raise RowError(f"line {line}: cannot parse {name}={text!r}") from None
    if not math.isfinite(value):
        raise RowError(f"line {line}: non-finite {name}={text!r}")
    if name in BINARY_FIELDS:
        if value not in (0.0, 1.0):
            raise RowError(f"line {line}: {name} out of {{0,1}} (got {text})")
        return int(value)
    if name == "month":
        if value != int(value):
            raise RowError(f"line {line}: month must be an integer (got {text})")
        return int(value)
    return value


def load_records(path: str | Path, schema_overrides: Mapping[str, tuple[float, float]] | None = None) -> RecordSet:
    """Read an inspection CSV.

    Binary codes and integer months are enforced while parsing. Range checks
    are left to :func:`validate`; ``schema_overrides`` is accepted here so a
    caller can keep the two in step, and is checked for well-formed bounds.

    Raises
    ------
    SchemaError
        A required column is missing.
    RowError
        A cell cannot be parsed (the message carries the 1-based line number).
    DuplicateRecordError
        Two rows share (section_id, month).
    """
    if schema_overrides:
        for name, (lo, hi) in schema_overrides.items():
            if lo > hi:
                raise SchemaError(f"override for {name}: min {lo} > max {hi}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: empty file, header row required") from None
        for name in FIELDS:
            if name not in header:
                raise SchemaError(f"missing column {name!r}")
        index = {name: header.index(name) for name in FIELDS}
        records = []
        seen: dict[tuple[str, int], int] = {}
        for line, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < len(header):
                raise RowError(f"line {line}: expected {len(header)} cells, got {len(row)}")
            values = {name: _parse_cell(name, row[i], line) for name, i in index.items()}
            rec = InspectionRecord(**values)
            key = (rec.section_id, rec.month)
            if key in seen:
                raise DuplicateRecordError(
                    f"line {line}: duplicate (section_id={rec.section_id!r}, month={rec.month}), "
                    f"first seen on line {seen[key]}"
                )
            seen[key] = line
            records.append(rec)
    return RecordSet(tuple(records), provenance="loaded")


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    index: int
    section_id: str
    month: int
    field: str
    message: str

    def __str__(self) -> str:
        return f"record {self.index} ({self.section_id}, month {self.month}): {self.message}"


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __len__(self) -> int:
        return len(self.violations)

    def __iter__(self):
        return iter(self.violations)


def _fmt_range(lo, hi) -> str:
    return f"[{lo:.2f}, {hi:.2f}]"


def validate(rs: RecordSet | Sequence[InspectionRecord],
             ranges: Mapping[str, tuple[float, float]] | None = None) -> ValidationReport:
    """List every invariant violation; an empty report means the data is clean."""
    records = rs.records if isinstance(rs, RecordSet) else tuple(rs)
    bounds = dict(DEFAULT_RANGES)
    if ranges:
        bounds.update(ranges)
    report = ValidationReport()

    def flag(i, rec, name, msg):
        report.violations.append(Violation(i, rec.section_id, rec.month, name, msg))

    for i, rec in enumerate(records):
        for name in BINARY_FIELDS:
            if getattr(rec, name) not in (0, 1):
                flag(i, rec, name, f"{name} out of {{0,1}}")
        for name, (lo, hi) in bounds.items():
            value = getattr(rec, name)
            if rec.month == 0 and name in _MONTH0_RANGE_SOURCE:
                lo, hi = bounds[_MONTH0_RANGE_SOURCE[name]]
            if not (isinstance(value, (int, float)) and math.isfinite(value)):
                flag(i, rec, name, f"{name} is not a finite number")
            elif not lo <= value <= hi:
                flag(i, rec, name, f"{name} outside {_fmt_range(lo, hi)}")

    seen: dict[tuple[str, int], int] = {}
    for i, rec in enumerate(records):
        key = (rec.section_id, rec.month)
        if key in seen:
            flag(i, rec, "month", f"duplicate (section_id, month), first at record {seen[key]}")
        else:
            seen[key] = i

    by_section: dict[str, list[int]] = defaultdict(list)
    for i, rec in enumerate(records):
        by_section[rec.section_id].append(i)
    for idx in by_section.values():
        for name in SECTION_CONSTANT_FIELDS:
            values = [getattr(records[i], name) for i in idx]
            counts = Counter(values)
            top = max(counts.values())
            reference = next(v for v in values if counts[v] == top)
            for i, v in zip(idx, values):
                if v != reference:
                    flag(i, records[i], name,
                         f"{name}={v:g} differs from section value {reference:g}")
    return report


# ---------------------------------------------------------------------------
# synthetic generator
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VariableStats:
    mean: float
    std: float
    min: float
    max: float


# Field-data summary statistics (mean, std, min, max). Month is reported over
# the post-treatment inspections only, hence the minimum of 3.
TABLE1_STATS: dict[str, VariableStats] = {
    "climatic_zone": VariableStats(0.40, 0.49, 0, 1),
    "depth_in": VariableStats(0.46, 0.11, 0.20, 0.50),
    "drum": VariableStats(0.70, 0.46, 0, 1),
    "macro_mm": VariableStats(1.44, 0.69, 0.28, 2.89),
    "macro_after_mm": VariableStats(2.37, 0.59, 0.48, 3.58),
    "macro_before_mm": VariableStats(0.68, 0.32, 0.16, 1.73),
    "month": VariableStats(9.75, 5.77, 3.00, 18.00),
    "skid_number": VariableStats(29.91, 9.59, 10.50, 47.00),
    "skid_after": VariableStats(42.37, 12.15, 15.00, 58.00),
    "skid_before": VariableStats(15.70, 8.00, 9.00, 35.00),
    "speed_fpm": VariableStats(68.52, 17.81, 30.00, 100.00),
    "surface_type": VariableStats(0.59, 0.50, 0, 1),
}


@dataclass(frozen=True)
class DecayParams:
    """Post-treatment trajectory parameters for one surface type.

    Skid number decays from its after-milling value toward a terminal level
    ``asymptote + before_weight * (skid_before - mean skid_before)`` (plus a
    Gaussian section effect of ``asymptote_std``) at ``rate`` per month.
    Macrotexture decays toward ``macro_before_mm + macro_retention`` at
    ``macro_rate``. Section rates are scaled by a log-normal factor with sigma
    ``rate_spread`` and by the drum/zone modifiers of :class:`SyntheticConfig`.
    """

    rate: float
    asymptote: float
    asymptote_std: float
    noise_std: float
    macro_rate: float
    macro_retention: float
    macro_retention_std: float
    macro_noise_std: float
    before_weight: float = 0.0
    rate_spread: float = 0.0


def _default_decay() -> dict[int, DecayParams]:
    mean_before = TABLE1_STATS["skid_before"].mean
    return {
        # HMA: slow polishing, settles well above pre-treatment friction
        0: DecayParams(rate=0.05, asymptote=mean_before + 15.3, asymptote_std=3.0, noise_std=1.0,
                       macro_rate=0.10, macro_retention=0.50, macro_retention_std=0.15,
                       macro_noise_std=0.05, before_weight=1.0, rate_spread=0.15),
        # seal coat: fast loss, ends a few units above pre-treatment friction
        1: DecayParams(rate=0.22, asymptote=mean_before + 3.3, asymptote_std=2.0, noise_std=1.0,
                       macro_rate=0.20, macro_retention=0.35, macro_retention_std=0.15,
                       macro_noise_std=0.05, before_weight=1.0, rate_spread=0.15),
    }


@dataclass(frozen=True)
class SyntheticConfig:
    n_sections: int = 500
    months: tuple[int, ...] = (0, 3, 6, 12, 18)
    stats: Mapping[str, VariableStats] = field(default_factory=lambda: dict(TABLE1_STATS))
    decay: Mapping[int, DecayParams] = field(default_factory=_default_decay)
    # multiplicative rate factors for standard drum (1) and dry-freeze zone (0)
    standard_drum_rate_factor: float = 1.3
    freeze_rate_factor: float = 1.2
    # extra terminal friction (skid units) at the best machine speed, Gaussian in speed
    speed_asymptote_gain: float = 2.0
    speed_optimum_fpm: float = 75.0
    speed_width_fpm: float = 12.0

    def check(self) -> None:
        if self.n_sections <= 0:
            raise DataError("empty config: n_sections must be positive")
        months = list(self.months)
        if not months or any(b <= a for a, b in zip(months, months[1:])):
            raise DataError(f"months must be strictly increasing, got {months}")
        for name, s in self.stats.items():
            if s.std < 0:
                raise DataError(f"{name}: negative std")
            if not s.min <= s.mean <= s.max:
                raise DataError(f"{name}: need min <= mean <= max, got {s}")
        for code in (0, 1):
            if code not in self.decay:
                raise DataError(f"decay parameters missing for surface_type={code}")
            d = self.decay[code]
            if min(d.rate, d.macro_rate, d.noise_std, d.macro_noise_std, d.rate_spread,
                   d.asymptote_std, d.macro_retention_std) < 0:
                raise DataError(f"surface_type={code}: decay parameters must be non-negative")

    def replace(self, **changes) -> "SyntheticConfig":
        return dataclasses.replace(self, **changes)


def _truncated_normal(rng: np.random.Generator, s: VariableStats, n: int) -> np.ndarray:
    """Normal(mean, std) draws, resampling anything outside [min, max]."""
    out = rng.normal(s.mean, s.std, n)
    bad = (out < s.min) | (out > s.max)
    while bad.any():
        out[bad] = rng.normal(s.mean, s.std, int(bad.sum()))
        bad = (out < s.min) | (out > s.max)
    return out


def generate_synthetic(cfg: SyntheticConfig | None = None, seed: int = 0) -> RecordSet:
    """Draw a synthetic corpus whose marginals follow the configured statistics.

    Section covariates are drawn once per section. Targets follow an
    exponential decay from the after-milling value toward a surface-dependent
    asymptote, plus Gaussian noise at every month after 0, clipped to the
    configured ranges. The month-0 record carries the after-milling values
    exactly.
    """
    cfg = cfg or SyntheticConfig()
    cfg.check()
    rng = np.random.Generator(np.random.PCG64(seed))
    st = cfg.stats
    n = cfg.n_sections

    zone = (rng.random(n) < st["climatic_zone"].mean).astype(int)
    drum = (rng.random(n) < st["drum"].mean).astype(int)
    surface = (rng.random(n) < st["surface_type"].mean).astype(int)
    depth = _truncated_normal(rng, st["depth_in"], n)
    speed = _truncated_normal(rng, st["speed_fpm"], n)
    skid_before = _truncated_normal(rng, st["skid_before"], n)
    skid_after = _truncated_normal(rng, st["skid_after"], n)
    macro_before = _truncated_normal(rng, st["macro_before_mm"], n)
    macro_after = _truncated_normal(rng, st["macro_after_mm"], n)

    params = [cfg.decay[int(s)] for s in surface]
    col = lambda attr: np.array([getattr(p, attr) for p in params], dtype=np.float64)

    modifier = (np.where(drum == 1, cfg.standard_drum_rate_factor, 1.0)
                * np.where(zone == 0, cfg.freeze_rate_factor, 1.0))
    spread = np.exp(rng.normal(0.0, 1.0, n) * col("rate_spread"))
    rate = col("rate") * modifier * spread
    macro_rate = col("macro_rate") * modifier * spread

    speed_bonus = cfg.speed_asymptote_gain * np.exp(
        -(((speed - cfg.speed_optimum_fpm) / cfg.speed_width_fpm) ** 2))
    terminal = (col("asymptote") + col("before_weight") * (skid_before - st["skid_before"].mean)
                + speed_bonus + rng.normal(0.0, 1.0, n) * col("asymptote_std"))
    skid_floor = np.minimum(terminal, skid_after)
    macro_retention = col("macro_retention") + rng.normal(0.0, 1.0, n) * col("macro_retention_std")
    macro_floor = np.minimum(macro_before + macro_retention, macro_after)

    months = np.asarray(cfg.months, dtype=np.float64)
    later = months > 0
    skid = skid_after[:, None] - (skid_after - skid_floor)[:, None] * (1.0 - np.exp(-rate[:, None] * months))
    macro = macro_after[:, None] - (macro_after - macro_floor)[:, None] * (1.0 - np.exp(-macro_rate[:, None] * months))
    skid = skid + rng.normal(0.0, 1.0, skid.shape) * col("noise_std")[:, None] * later
    macro = macro + rng.normal(0.0, 1.0, macro.shape) * col("macro_noise_std")[:, None] * later
    s_lo, s_hi = st["skid_number"].min, st["skid_number"].max
    m_lo, m_hi = st["macro_mm"].min, st["macro_mm"].max
    skid = np.where(later, np.clip(skid, s_lo, s_hi), skid_after[:, None])
    macro = np.where(later, np.clip(macro, m_lo, m_hi), macro_after[:, None])

    width = len(str(n - 1))
    records = []
    for i in range(n):
        sid = f"S{i:0{width}d}"
        for j, m in enumerate(cfg.months):
            records.append(InspectionRecord(
                section_id=sid,
                climatic_zone=int(zone[i]),
                depth_in=float(depth[i]),
                drum=int(drum[i]),
                speed_fpm=float(speed[i]),
                surface_type=int(surface[i]),
                month=int(m),
                skid_before=float(skid_before[i]),
                skid_after=float(skid_after[i]),
                macro_before_mm=float(macro_before[i]),
                macro_after_mm=float(macro_after[i]),
                skid_number=float(skid[i, j]),
                macro_mm=float(macro[i, j]),
            ))
    return RecordSet(tuple(records), provenance="synthetic", seed=seed)
