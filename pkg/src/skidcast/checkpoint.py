"""Fitted-model bundles and their JSON checkpoint format.

A checkpoint is one UTF-8 JSON document::

    {"format": "skidcast-checkpoint", "version": 1, "kind": "forest",
     "name": "Random Forest", "task": "skid", "window": 4,
     "config": {...}, "meta": {...},
     "arrays": {"scaler.mean": {"dtype": "float64", "shape": [12], "data": [...]}, ...}}

Floats are written with their shortest round-trip representation, so loading
restores every array bit for bit, and keys are sorted so equal models give
byte-identical files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .baselines import (BoostedModel, ColumnFilter, Forest, KNNModel, LinearModel, MLPModel,
                        TreeModel)
from .sequences import FEATURES, Scaler, WindowSample, stack
from .transformer import TransformerConfig, TrainingResult

__all__ = [
    "CheckpointError",
    "CompatibilityError",
    "FittedModel",
    "MODEL_KINDS",
    "load_checkpoint",
    "save_checkpoint",
]

FORMAT = "skidcast-checkpoint"
VERSION = 1

# CLI key -> report label
MODEL_KINDS = {
    "transformer": "Transformer",
    "linear": "Linear Regression",
    "ridge": "Ridge Regression",
    "lasso": "Lasso Regression",
    "knn": "k-Nearest Neighbors",
    "tree": "Decision Tree",
    "forest": "Random Forest",
    "gbt": "Gradient-Boosted Trees",
    "mlp": "MLP Regressor",
}


class CheckpointError(ValueError):
    pass


class CompatibilityError(ValueError):
    """Windows do not match the shape a checkpoint was trained on."""


@dataclass(eq=False)
class FittedModel:
    """A trained model together with the preprocessing it expects.

    ``predict_windows`` takes raw (unscaled) windows of shape (n, L, d_x).
    Baselines see the scaled windows flattened and passed through
    ``column_filter``; the Transformer sees the scaled windows directly.
    """

    kind: str
    model: object
    scaler: Scaler
    task: str
    window: int
    column_filter: ColumnFilter | None = None
    config: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    @property
    def name(self) -> str:
        return MODEL_KINDS[self.kind]

    def check_windows(self, x: np.ndarray) -> None:
        if x.ndim != 3:
            raise CompatibilityError(f"expected windows of shape (n, L, d_x), got {x.shape}")
        if x.shape[1] != self.window:
            raise CompatibilityError(f"window length mismatch: expected L={self.window}, found L={x.shape[1]}")
        if x.shape[2] != len(self.scaler.mean):
            raise CompatibilityError(
                f"feature width mismatch: expected d_x={len(self.scaler.mean)}, found d_x={x.shape[2]}")

    def predict_windows(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.size == 0:
            return np.zeros(0)
        self.check_windows(x)
        scaled = self.scaler.transform(x)
        if self.kind == "transformer":
            return self.model.predict(scaled)
        flat = scaled.reshape(len(scaled), -1)
        if self.column_filter is not None:
            flat = self.column_filter(flat)
        return np.asarray(self.model.predict(flat), dtype=np.float64)

    def predict_samples(self, samples: list[WindowSample]) -> np.ndarray:
        if not samples:
            return np.zeros(0)
        return self.predict_windows(stack(samples)[0])


# ---------------------------------------------------------------------------
# array (de)serialisation
# ---------------------------------------------------------------------------

def _pack(a) -> dict:
    a = np.asarray(a)
    if a.dtype.kind == "f":
        if not np.all(np.isfinite(a)):
            raise CheckpointError("cannot checkpoint non-finite values")
        return {"dtype": "float64", "shape": list(a.shape), "data": [float(v) for v in a.ravel()]}
    if a.dtype.kind in "iub":
        return {"dtype": "int64", "shape": list(a.shape), "data": [int(v) for v in a.ravel()]}
    raise CheckpointError(f"unsupported array dtype {a.dtype}")


def _unpack(d: dict) -> np.ndarray:
    dtype = {"float64": np.float64, "int64": np.int64}.get(d.get("dtype"))
    if dtype is None:
        raise CheckpointError(f"unsupported array dtype {d.get('dtype')!r}")
    return np.array(d["data"], dtype=dtype).reshape(d["shape"])


def _tree_arrays(prefix: str, tree: TreeModel) -> dict[str, np.ndarray]:
    return {f"{prefix}.{k}": v for k, v in tree.arrays().items()}


def _tree_from(arrays: dict, prefix: str) -> TreeModel:
    return TreeModel(*(arrays[f"{prefix}.{k}"] for k in ("feature", "threshold", "left", "right", "value")))


def _model_payload(fm: FittedModel) -> tuple[dict, dict[str, np.ndarray]]:
    m = fm.model
    if fm.kind == "transformer":
        return {"transformer": m.config.to_dict(), "best_epoch": m.best_epoch}, \
            {f"param.{k}": v for k, v in m.params.items()}
    if fm.kind in ("linear", "ridge", "lasso"):
        return {"lam": m.lam, "n_iter": m.n_iter, "solver": m.kind}, \
            {"coef": m.coef, "intercept": np.array(m.intercept)}
    if fm.kind == "knn":
        return {"k": m.k}, {"X": m.X, "y": m.y}
    if fm.kind == "tree":
        return {}, _tree_arrays("tree", m)
    if fm.kind == "forest":
        arrays: dict[str, np.ndarray] = {}
        for i, t in enumerate(m.trees):
            arrays.update(_tree_arrays(f"tree{i}", t))
        return {"n_trees": len(m.trees)}, arrays
    if fm.kind == "gbt":
        arrays = {"train_mse": np.array(m.train_mse)}
        for i, t in enumerate(m.trees):
            arrays.update(_tree_arrays(f"tree{i}", t))
        return {"base": m.base, "shrinkage": m.shrinkage, "n_trees": len(m.trees)}, arrays
    if fm.kind == "mlp":
        return {}, {**{f"param.{k}": v for k, v in m.params.items()},
                    "loss_history": np.array(m.loss_history)}
    raise CheckpointError(f"unknown model kind {fm.kind!r}")


def _model_from(kind: str, spec: dict, arrays: dict):
    if kind == "transformer":
        cfg = TransformerConfig.from_dict(spec["transformer"])
        params = {k[len("param."):]: v for k, v in arrays.items() if k.startswith("param.")}
        return TrainingResult(params, cfg, [], spec["best_epoch"])
    if kind in ("linear", "ridge", "lasso"):
        return LinearModel(spec["solver"], float(arrays["intercept"]), arrays["coef"], spec["lam"], spec["n_iter"])
    if kind == "knn":
        return KNNModel(arrays["X"], arrays["y"], spec["k"])
    if kind == "tree":
        return _tree_from(arrays, "tree")
    if kind == "forest":
        return Forest([_tree_from(arrays, f"tree{i}") for i in range(spec["n_trees"])])
    if kind == "gbt":
        return BoostedModel(spec["base"], spec["shrinkage"],
                            [_tree_from(arrays, f"tree{i}") for i in range(spec["n_trees"])],
                            arrays["train_mse"].tolist())
    if kind == "mlp":
        params = {k[len("param."):]: v for k, v in arrays.items() if k.startswith("param.")}
        return MLPModel(params, arrays["loss_history"].tolist())
    raise CheckpointError(f"unknown model kind {kind!r}")


def dumps(fm: FittedModel) -> str:
    spec, arrays = _model_payload(fm)
    arrays = dict(arrays)
    arrays["scaler.mean"] = fm.scaler.mean
    arrays["scaler.std"] = fm.scaler.std
    arrays["scaler.passthrough"] = np.array(fm.scaler.passthrough, dtype=np.int64)
    if fm.column_filter is not None:
        arrays["column_filter.keep"] = fm.column_filter.keep
    doc = {
        "format": FORMAT,
        "version": VERSION,
        "kind": fm.kind,
        "name": fm.name,
        "task": fm.task,
        "window": fm.window,
        "features": list(FEATURES),
        "model": spec,
        "config": fm.config,
        "meta": fm.meta,
        "arrays": {k: _pack(v) for k, v in arrays.items()},
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), allow_nan=False) + "\n"


def loads(text: str) -> FittedModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"checkpoint is not valid JSON: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != FORMAT:
        raise CheckpointError("not a skidcast checkpoint")
    if doc.get("version") != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {doc.get('version')!r}")
    if doc.get("kind") not in MODEL_KINDS:
        raise CheckpointError(f"unknown model kind {doc.get('kind')!r}")
    arrays = {k: _unpack(v) for k, v in doc["arrays"].items()}
    scaler = Scaler(arrays.pop("scaler.mean"), arrays.pop("scaler.std"),
                    tuple(int(i) for i in arrays.pop("scaler.passthrough")))
    keep = arrays.pop("column_filter.keep", None)
    return FittedModel(
        kind=doc["kind"],
        model=_model_from(doc["kind"], doc["model"], arrays),
        scaler=scaler,
        task=doc["task"],
        window=int(doc["window"]),
        column_filter=ColumnFilter(keep) if keep is not None else None,
        config=doc.get("config", {}),
        meta=doc.get("meta", {}),
    )


def save_checkpoint(fm: FittedModel, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(dumps(fm), encoding="utf-8")
    return path


def load_checkpoint(path: str | Path) -> FittedModel:
    return loads(Path(path).read_text(encoding="utf-8"))
