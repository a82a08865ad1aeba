"""End-to-end runs: data, windows, split, scaling, nine models, reports.

Seed splitting
--------------
Every random stream is derived from the master seed by name::

    derive_seed(seed, "split")                   # train/test partition
    derive_seed(seed, "validation")              # Transformer early-stopping holdout
    derive_seed(seed, "model", task, key)        # per-model init, shuffles, trees

``derive_seed`` feeds the CRC-32 of each name into ``SeedSequence`` as a spawn
key, so adding a model or a task never shifts another model's stream. The
synthetic data stream is the master seed itself, which keeps
``generate --seed 7`` and ``reproduce --seed 7`` on identical records.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import shutil
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .baselines import (FitConfig, fit_column_filter, fit_forest, fit_gbt, fit_knn, fit_linear, fit_mlp,
                        fit_tree)
from .checkpoint import MODEL_KINDS, FittedModel, save_checkpoint
from .data import RecordSet, SyntheticConfig, ValidationReport, generate_synthetic, load_records, save_records, validate
from .evaluation import EvaluationReport, compare, render_table, save_report
from .sequences import (TARGET_FIELDS, WindowSample, apply_scaler, build_series, fit_scaler, save_windows, split,
                        stack, windows_for)
from .transformer import TransformerConfig, train as train_transformer

__all__ = [
    "PipelineError",
    "RunConfig",
    "RunResult",
    "ValidationFailed",
    "derive_seed",
    "fit_model",
    "run_pipeline",
    "save_predictions",
    "split_digest",
]

TASKS = tuple(TARGET_FIELDS)


class ValidationFailed(ValueError):
    def __init__(self, report: ValidationReport):
        n = len(report.violations)
        super().__init__(f"{n} validation violation{'s' if n != 1 else ''}; first: {report.violations[0]}")
        self.report = report


class PipelineError(RuntimeError):
    """A stage failed. ``stage`` names it and ``__cause__`` holds the original error."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class RunConfig:
    data: str | None = None
    synthetic: SyntheticConfig = field(default_factory=SyntheticConfig)
    tasks: tuple[str, ...] = TASKS
    window_length: int = 4
    split_ratio: float = 0.8
    split_mode: str = "sections"
    allow_padding: bool = False
    models: tuple[str, ...] = tuple(MODEL_KINDS)
    fit: FitConfig = field(default_factory=FitConfig)
    transformer: TransformerConfig = field(default_factory=TransformerConfig)
    val_fraction: float = 0.15
    out: str = "run"
    seed: int = 7
    plot: bool = True

    def __post_init__(self):
        if self.window_length < 1:
            raise ValueError(f"window_length must be >= 1, got {self.window_length}")
        if not 0 < self.split_ratio < 1:
            raise ValueError(f"split_ratio must lie in (0, 1), got {self.split_ratio}")
        if self.split_mode not in ("rows", "sections"):
            raise ValueError(f"split_mode must be 'rows' or 'sections', got {self.split_mode!r}")
        if not self.tasks:
            raise ValueError("at least one task is required")
        for t in self.tasks:
            if t not in TARGET_FIELDS:
                raise ValueError(f"unknown task {t!r}; choose from {sorted(TARGET_FIELDS)}")
        if not self.models:
            raise ValueError("at least one model is required")
        for m in self.models:
            if m not in MODEL_KINDS:
                raise ValueError(f"unknown model {m!r}; choose from {list(MODEL_KINDS)}")
        if len(set(self.models)) != len(self.models) or len(set(self.tasks)) != len(self.tasks):
            raise ValueError("tasks and models must not repeat")
        if not 0 < self.val_fraction < 1:
            raise ValueError(f"val_fraction must lie in (0, 1), got {self.val_fraction}")
        if self.data is None:
            self.synthetic.check()

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = {
            "data": self.data,
            "tasks": list(self.tasks),
            "window_length": self.window_length,
            "split_ratio": self.split_ratio,
            "split_mode": self.split_mode,
            "allow_padding": self.allow_padding,
            "models": list(self.models),
            "fit": self.fit.to_dict(),
            "transformer": self.transformer.to_dict(),
            "val_fraction": self.val_fraction,
            "seed": self.seed,
        }
        if self.data is None:
            d["synthetic"] = {"n_sections": self.synthetic.n_sections, "months": list(self.synthetic.months)}
        return d


@dataclass
class RunResult:
    out: Path
    reports: dict[str, EvaluationReport]
    models: dict[str, dict[str, FittedModel]]
    manifest: dict


def derive_seed(seed: int, *names: str) -> int:
    key = tuple(zlib.crc32(n.encode("utf-8")) for n in names)
    return int(np.random.SeedSequence(seed, spawn_key=key).generate_state(1, dtype=np.uint32)[0])


def split_digest(train: Sequence[WindowSample], test: Sequence[WindowSample]) -> str:
    h = hashlib.sha256()
    for tag, part in (("train", train), ("test", test)):
        h.update(tag.encode())
        for s in part:
            h.update(f"{s.section_id}|{s.target_month};".encode())
    return h.hexdigest()


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def fit_model(key: str, train: Sequence[WindowSample], cfg: RunConfig, task: str,
              scaler=None) -> tuple[FittedModel, list[dict]]:
    """Fit one model on raw training windows; returns the bundle and its log lines."""
    scaler = scaler if scaler is not None else fit_scaler(train)
    scaled = apply_scaler(scaler, train)
    x, y = stack(scaled)
    seed = derive_seed(cfg.seed, "model", task, key)
    fc = cfg.fit
    L = cfg.window_length
    if key == "transformer":
        tcfg = cfg.transformer.replace(window=L, d_x=x.shape[2], seed=seed)
        fit_part, val_part = split(scaled, 1.0 - cfg.val_fraction, cfg.split_mode,
                                   derive_seed(cfg.seed, "validation"))
        fx, fy = stack(fit_part)
        vx, vy = stack(val_part)
        result = train_transformer(fx, fy, vx, vy, tcfg)
        fm = FittedModel(key, result, scaler, task, L, config=tcfg.to_dict(),
                         meta={"best_epoch": result.best_epoch, "epochs_run": len(result.log),
                               "n_fit": len(fit_part), "n_val": len(val_part)})
        return fm, [dict(e) for e in result.log]

    flat = x.reshape(len(x), -1)
    cf = fit_column_filter(flat)
    X = cf(flat)
    log: list[dict] = []
    if key == "linear":
        model = fit_linear("ols", X, y)
    elif key == "ridge":
        model = fit_linear("ridge", X, y, fc.ridge_lambda)
    elif key == "lasso":
        model = fit_linear("lasso", X, y, fc.lasso_lambda, fc.lasso_tol, fc.lasso_max_iter)
        log.append({"sweeps": model.n_iter, "nonzero": int(np.count_nonzero(model.coef))})
    elif key == "knn":
        model = fit_knn(X, y, fc.knn_k)
    elif key == "tree":
        model = fit_tree(X, y, fc.tree_max_depth, fc.tree_min_samples_leaf)
        log.append({"nodes": model.n_nodes, "depth": model.depth})
    elif key == "forest":
        model = fit_forest(X, y, fc.forest_n_trees, fc.forest_feature_fraction, fc.forest_bootstrap,
                           fc.tree_max_depth, fc.tree_min_samples_leaf, seed)
    elif key == "gbt":
        model = fit_gbt(X, y, fc.gbt_n_rounds, fc.gbt_shrinkage, fc.gbt_max_depth)
        log.extend({"round": i, "train_mse": v} for i, v in enumerate(model.train_mse))
    elif key == "mlp":
        model = fit_mlp(X, y, fc.mlp_hidden, fc.mlp_lr, fc.mlp_epochs, fc.mlp_batch_size, seed)
        log.extend({"epoch": i, "train_loss": v} for i, v in enumerate(model.loss_history))
    else:
        raise ValueError(f"unknown model {key!r}")
    meta = {"n_train": len(train), "n_columns": int(len(cf.keep)), "seed": seed}
    return FittedModel(key, model, scaler, task, L, cf, fc.to_dict(), meta), log


def save_predictions(samples: Sequence[WindowSample], predictions, path: str | Path) -> None:
    predictions = np.asarray(predictions, dtype=np.float64)
    lines = ["section_id,target_month,prediction"]
    lines += [f"{s.section_id},{s.target_month},{p:.17g}" for s, p in zip(samples, predictions)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _write_jsonl(path: Path, rows: list[dict]) -> None:
    path.write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in rows), encoding="utf-8")


class _Stage:
    """Tags any exception raised inside the block with the stage name."""

    def __init__(self, name: str):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not isinstance(exc, PipelineError):
            raise PipelineError(self.name, exc) from exc
        return False


def load_or_generate(cfg: RunConfig) -> RecordSet:
    if cfg.data is not None:
        return load_records(cfg.data)
    return generate_synthetic(cfg.synthetic, cfg.seed)


def run_pipeline(cfg: RunConfig, evaluate: bool = True) -> RunResult:
    """Run every stage and write all artifacts under ``cfg.out``.

    On failure the manifest is rewritten with ``"status": "incomplete"`` and
    the failing stage, and the error is re-raised as :class:`PipelineError`.
    """
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    for sub in ("checkpoints", "logs", "reports", "windows", "predictions"):
        if (out / sub).exists():
            shutil.rmtree(out / sub)
        (out / sub).mkdir()
    manifest: dict = {"status": "running", "config": cfg.to_dict(), "seed": cfg.seed}
    manifest_path = out / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    reports: dict[str, EvaluationReport] = {}
    fitted: dict[str, dict[str, FittedModel]] = {}
    try:
        with _Stage("load"):
            records = load_or_generate(cfg)
            save_records(records, out / "data.csv")
            manifest["data_digest"] = _sha256(out / "data.csv")
        with _Stage("validate"):
            vr = validate(records)
            if not vr.ok:
                raise ValidationFailed(vr)
        with _Stage("build_series"):
            series = build_series(records)
        manifest["tasks"] = {}
        for task in cfg.tasks:
            with _Stage(f"make_windows[{task}]"):
                samples = windows_for(series, cfg.window_length, task, cfg.allow_padding)
            with _Stage(f"split[{task}]"):
                train, test = split(samples, cfg.split_ratio, cfg.split_mode, derive_seed(cfg.seed, "split"))
                save_windows(train, out / "windows" / f"{task}_train.csv", cfg.window_length)
                save_windows(test, out / "windows" / f"{task}_test.csv", cfg.window_length)
            with _Stage(f"scale[{task}]"):
                scaler = fit_scaler(train)
            task_info = {"n_train": len(train), "n_test": len(test), "split_digest": split_digest(train, test)}
            fitted[task] = {}
            preds = {}
            for key in cfg.models:
                with _Stage(f"train[{task}/{key}]"):
                    fm, log = fit_model(key, train, cfg, task, scaler)
                    fitted[task][key] = fm
                    save_checkpoint(fm, out / "checkpoints" / f"{task}_{key}.json")
                    _write_jsonl(out / "logs" / f"{task}_{key}.jsonl", log)
                    save_predictions(train, fm.predict_samples(train),
                                     out / "predictions" / f"{task}_{key}_train.csv")
                if evaluate:
                    with _Stage(f"evaluate[{task}/{key}]"):
                        preds[fm.name] = fm.predict_samples(test)
                        save_predictions(test, preds[fm.name], out / "predictions" / f"{task}_{key}_test.csv")
            if evaluate:
                with _Stage(f"compare[{task}]"):
                    _, y_test = stack(test)
                    desc = f"{cfg.split_mode} {cfg.split_ratio:g}/{1 - cfg.split_ratio:g}"
                    report = compare(preds, None, y_test, task, desc, cfg.seed)
                    reports[task] = report
                    write_report_files(report, out / "reports" / task, cfg.plot)
            manifest["tasks"][task] = task_info
        manifest["outputs"] = {str(p.relative_to(out)): _sha256(p)
                               for p in sorted(out.rglob("*")) if p.is_file() and p != manifest_path}
        manifest["run_id"] = hashlib.sha256(
            (json.dumps(manifest["config"], sort_keys=True) + manifest["data_digest"]).encode()).hexdigest()
        manifest["status"] = "complete"
    except PipelineError as exc:
        manifest["status"] = "incomplete"
        manifest["failed_stage"] = exc.stage
        manifest["error"] = str(exc.cause)
        raise
    finally:
        manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return RunResult(out, reports, fitted, manifest)


def write_report_files(report: EvaluationReport, stem: Path, plot: bool = True) -> list[Path]:
    """``stem``.csv, ``stem``.txt and optionally ``stem``.svg."""
    stem = Path(stem)
    paths = [stem.with_suffix(".csv"), stem.with_suffix(".txt")]
    save_report(report, paths[0])
    paths[1].write_text(render_table(report), encoding="utf-8")
    if plot:
        from .plotting import plot_r2

        paths.append(plot_r2(report, stem.with_suffix(".svg")))
    return paths
