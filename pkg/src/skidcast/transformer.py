"""Sequence-to-one Transformer encoder for next-inspection regression.

Windows of shape (L, d_x) are embedded, offset by a sinusoidal positional
table, passed through ``N`` post-norm encoder layers (multi-head self
attention followed by a position-wise ReLU feed-forward block), and the last
position's hidden state is mapped to a scalar by a one-hidden-layer ReLU head.

Parameters live in a flat ``dict[str, np.ndarray]``:

==================  ===========================  ==========================
name                shape                        role
==================  ===========================  ==========================
``embed``           (d_model, d_x)               input projection
``l{i}.w_q``        (H, d_model, d_k)            per-head query weights
``l{i}.w_k``        (H, d_model, d_k)            per-head key weights
``l{i}.w_v``        (H, d_model, d_k)            per-head value weights
``l{i}.w_o``        (H*d_k, d_model)             output projection
``l{i}.ln1_gain``   (d_model,)                   first layer norm
``l{i}.ln1_bias``   (d_model,)
``l{i}.ffn_w1``     (d_model, d_ff)              feed-forward
``l{i}.ffn_b1``     (d_ff,)
``l{i}.ffn_w2``     (d_ff, d_model)
``l{i}.ffn_b2``     (d_model,)
``l{i}.ln2_gain``   (d_model,)                   second layer norm
``l{i}.ln2_bias``   (d_model,)
``head_w1``         (d_model, d_head)            regression head
``head_b1``         (d_head,)
``head_w2``         (d_head,)
``head_b2``         ()
==================  ===========================  ==========================
"""

from __future__ import annotations

import copy
import dataclasses
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import tensor as T
from .optim import Adam, glorot_uniform
from .tensor import GradTape, NumericError, ShapeError, Tensor

__all__ = [
    "TrainingError",
    "TrainingResult",
    "TransformerConfig",
    "embed",
    "encoder_layer",
    "forward",
    "init_params",
    "layer_names",
    "mse_loss",
    "positional_encoding",
    "predict",
    "train",
]

LN_EPS = 1e-5


class TrainingError(RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, message: str, epoch: int):
        super().__init__(message)
        self.epoch = epoch


@dataclass(frozen=True)
class TransformerConfig:
    d_x: int = 12
    d_model: int = 32
    n_heads: int = 4
    d_k: int = 8
    n_layers: int = 2
    d_ff: int = 64
    window: int = 4
    learning_rate: float = 1e-3
    max_epochs: int = 500
    patience: int = 25
    batch_size: int = 16
    seed: int = 0
    d_head: int | None = None

    def __post_init__(self):
        for name in ("d_x", "d_model", "n_heads", "d_k", "d_ff", "window", "max_epochs", "batch_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.n_layers < 0:
            raise ValueError(f"n_layers must be >= 0, got {self.n_layers}")
        if self.patience < 1:
            raise ValueError(f"patience must be >= 1, got {self.patience}")
        if self.n_heads * self.d_k != self.d_model:
            raise ValueError(f"n_heads * d_k must equal d_model ({self.n_heads}*{self.d_k} != {self.d_model})")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.d_head is not None and self.d_head < 1:
            raise ValueError("d_head must be >= 1")

    @property
    def head_width(self) -> int:
        return self.d_model if self.d_head is None else self.d_head

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TransformerConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})

    def replace(self, **changes) -> "TransformerConfig":
        return dataclasses.replace(self, **changes)


def layer_names(i: int) -> list[str]:
    return [f"l{i}.{n}" for n in ("w_q", "w_k", "w_v", "w_o", "ln1_gain", "ln1_bias",
                                   "ffn_w1", "ffn_b1", "ffn_w2", "ffn_b2", "ln2_gain", "ln2_bias")]


def param_shapes(cfg: TransformerConfig) -> dict[str, tuple[int, ...]]:
    d, H, dk = cfg.d_model, cfg.n_heads, cfg.d_k
    shapes: dict[str, tuple[int, ...]] = {"embed": (d, cfg.d_x)}
    for i in range(cfg.n_layers):
        p = f"l{i}."
        shapes.update({
            p + "w_q": (H, d, dk), p + "w_k": (H, d, dk), p + "w_v": (H, d, dk),
            p + "w_o": (H * dk, d),
            p + "ln1_gain": (d,), p + "ln1_bias": (d,),
            p + "ffn_w1": (d, cfg.d_ff), p + "ffn_b1": (cfg.d_ff,),
            p + "ffn_w2": (cfg.d_ff, d), p + "ffn_b2": (d,),
            p + "ln2_gain": (d,), p + "ln2_bias": (d,),
        })
    shapes.update({"head_w1": (d, cfg.head_width), "head_b1": (cfg.head_width,),
                   "head_w2": (cfg.head_width,), "head_b2": ()})
    return shapes


def init_params(cfg: TransformerConfig, rng: np.random.Generator | None = None) -> dict[str, np.ndarray]:
    """Glorot-uniform weights, zero biases, unit layer-norm gains."""
    rng = rng if rng is not None else np.random.Generator(np.random.PCG64(cfg.seed))
    params = {}
    for name, shape in param_shapes(cfg).items():
        short = name.split(".")[-1]
        if short.endswith("gain"):
            params[name] = np.ones(shape)
        elif short.startswith(("ln", "ffn_b", "head_b")) or short.endswith("bias"):
            params[name] = np.zeros(shape)
        elif short == "head_w2":
            params[name] = glorot_uniform(rng, shape, shape[0], 1)
        else:
            params[name] = glorot_uniform(rng, shape, shape[-2], shape[-1])
    return params


def positional_encoding(L: int, d_model: int) -> np.ndarray:
    """Sinusoidal table: column 2k holds sin(t / 10000^(2k/d)), column 2k+1 the cosine."""
    if L < 1 or d_model < 1:
        raise ValueError("L and d_model must be >= 1")
    t = np.arange(L, dtype=np.float64)[:, None]
    cols = np.arange(d_model)
    freq = np.power(10000.0, (2 * (cols // 2)) / d_model)
    angle = t / freq
    return np.where(cols % 2 == 0, np.sin(angle), np.cos(angle))


def _tensors(params) -> dict[str, Tensor]:
    return {k: v if isinstance(v, Tensor) else Tensor(v) for k, v in params.items()}


def _as_batch(windows) -> tuple[np.ndarray, bool]:
    x = np.asarray(windows, dtype=np.float64)
    if x.ndim == 2:
        return x[None], True
    if x.ndim != 3:
        raise ShapeError(f"expected a window (L, d_x) or batch (B, L, d_x), got shape {x.shape}")
    return x, False


def embed(window, params, P: np.ndarray | None = None) -> Tensor:
    """H0 = X·Eᵀ + P, row by row; accepts (L, d_x) or (B, L, d_x)."""
    p = _tensors(params)
    x = window if isinstance(window, Tensor) else Tensor(window)
    E = p["embed"]
    if x.shape[-1] != E.shape[1]:
        raise ShapeError(f"window width {x.shape[-1]} does not match embedding input width {E.shape[1]}")
    if P is None:
        P = positional_encoding(x.shape[-2], E.shape[0])
    if P.shape != (x.shape[-2], E.shape[0]):
        raise ShapeError(f"positional table {P.shape} does not match ({x.shape[-2]}, {E.shape[0]})")
    return T.add(T.matmul(x, T.transpose(E)), P)


def encoder_layer(h, params, layer: int, n_heads: int, return_attention: bool = False):
    """One post-norm encoder layer over (..., L, d_model) inputs."""
    p = _tensors(params)
    pre = f"l{layer}."
    h = h if isinstance(h, Tensor) else Tensor(h)
    lead = h.shape[:-2]
    L, d = h.shape[-2:]
    d_k = p[pre + "w_q"].shape[-1]
    hx = T.reshape(h, (*lead, 1, L, d))
    q = T.matmul(hx, p[pre + "w_q"])
    k = T.matmul(hx, p[pre + "w_k"])
    v = T.matmul(hx, p[pre + "w_v"])
    scores = T.scale(T.matmul(q, T.transpose(k)), 1.0 / math.sqrt(d_k))
    attn = T.softmax_rows(scores)
    heads = T.matmul(attn, v)
    mha = T.matmul(T.concat_heads(heads), p[pre + "w_o"])
    h1 = T.layer_norm(T.add(h, mha), p[pre + "ln1_gain"], p[pre + "ln1_bias"], LN_EPS)
    ff = T.relu(T.add(T.matmul(h1, p[pre + "ffn_w1"]), p[pre + "ffn_b1"]))
    ff = T.add(T.matmul(ff, p[pre + "ffn_w2"]), p[pre + "ffn_b2"])
    out = T.layer_norm(T.add(h1, ff), p[pre + "ln2_gain"], p[pre + "ln2_bias"], LN_EPS)
    if return_attention:
        return out, attn.data
    return out


def _check_finite(t: Tensor, where: str) -> None:
    if not np.all(np.isfinite(t.data)):
        raise NumericError(f"non-finite values after {where}")


def forward_batch(x, params, cfg: TransformerConfig, P: np.ndarray | None = None) -> Tensor:
    """Predictions for a batch (B, L, d_x) as a (B,) tensor, taped if a tape is active."""
    p = _tensors(params)
    xb, _ = _as_batch(x.data if isinstance(x, Tensor) else x)
    if xb.shape[1:] != (cfg.window, cfg.d_x):
        raise ShapeError(f"expected windows of shape ({cfg.window}, {cfg.d_x}), got {xb.shape[1:]}")
    h = embed(xb, p, P)
    _check_finite(h, "embedding")
    for i in range(cfg.n_layers):
        h = encoder_layer(h, p, i, cfg.n_heads)
        _check_finite(h, f"encoder layer {i}")
    last = T.last_row(h)
    z = T.relu(T.add(T.matmul(last, p["head_w1"]), p["head_b1"]))
    y = T.add(T.reshape(T.matmul(z, T.reshape(p["head_w2"], (cfg.head_width, 1))), (xb.shape[0],)),
              p["head_b2"])
    _check_finite(y, "regression head")
    return y


def forward(window, params, cfg: TransformerConfig) -> float:
    """Scalar prediction for one (L, d_x) window."""
    x = np.asarray(window, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"forward expects one (L, d_x) window, got shape {x.shape}")
    return float(forward_batch(x[None], params, cfg).data[0])


def predict(params, cfg: TransformerConfig, windows, chunk: int = 1024) -> np.ndarray:
    """Order-preserving predictions for a batch of windows."""
    x = np.asarray(windows, dtype=np.float64)
    if x.size == 0 and (x.ndim < 3 or x.shape[0] == 0):
        return np.zeros(0)
    xb, _ = _as_batch(x)
    P = positional_encoding(cfg.window, cfg.d_model)
    arrays = {k: np.asarray(v.data if isinstance(v, Tensor) else v) for k, v in params.items()}
    out = [forward_batch(xb[i:i + chunk], arrays, cfg, P).data for i in range(0, len(xb), chunk)]
    return np.concatenate(out)


def mse_loss(windows, targets, params, cfg: TransformerConfig) -> Tensor:
    """(1/n) Σ (y − ŷ)² over a batch; taped when called under a GradTape."""
    y = np.asarray(targets, dtype=np.float64)
    if y.size == 0:
        raise ValueError("mse_loss needs a non-empty batch")
    return T.mean_squared_error(forward_batch(windows, params, cfg), y)


@dataclass
class TrainingResult:
    params: dict[str, np.ndarray]
    config: TransformerConfig
    log: list[dict] = field(default_factory=list)
    best_epoch: int = 0

    def predict(self, windows) -> np.ndarray:
        return predict(self.params, self.config, windows)


def train(train_x, train_y, val_x, val_y, cfg: TransformerConfig,
          params: dict[str, np.ndarray] | None = None) -> TrainingResult:
    """Minibatch Adam on the MSE loss with early stopping on validation MSE.

    Returns the parameters of the epoch with the lowest validation loss. The
    log has one entry per completed epoch with full-set train and validation
    MSE.
    """
    tx, ty = np.asarray(train_x, dtype=np.float64), np.asarray(train_y, dtype=np.float64)
    vx, vy = np.asarray(val_x, dtype=np.float64), np.asarray(val_y, dtype=np.float64)
    if len(tx) == 0 or len(vx) == 0:
        raise ValueError("train and validation sets must be non-empty")
    seeds = np.random.SeedSequence(cfg.seed).spawn(2)
    init_rng = np.random.Generator(np.random.PCG64(seeds[0]))
    order_rng = np.random.Generator(np.random.PCG64(seeds[1]))
    params = copy.deepcopy(params) if params is not None else init_params(cfg, init_rng)
    P = positional_encoding(cfg.window, cfg.d_model)
    opt = Adam(cfg.learning_rate)

    def full_loss(x, y):
        return float(np.mean((forward_batch(x, params, cfg, P).data - y) ** 2))

    best = copy.deepcopy(params)
    best_val = math.inf
    best_epoch = 0
    stale = 0
    log = []
    n = len(tx)
    for epoch in range(1, cfg.max_epochs + 1):
        order = order_rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            leaves = {k: Tensor(v, requires_grad=True) for k, v in params.items()}
            try:
                with GradTape() as tape:
                    loss = T.mean_squared_error(forward_batch(tx[idx], leaves, cfg, P), ty[idx])
            except NumericError as exc:
                raise TrainingError(f"epoch {epoch}: {exc}", epoch) from exc
            if not math.isfinite(float(loss.data)):
                raise TrainingError(f"epoch {epoch}: non-finite training loss", epoch)
            tape.backward(loss)
            opt.step(params, {k: t.grad for k, t in leaves.items()})
        try:
            train_loss = full_loss(tx, ty)
            val_loss = full_loss(vx, vy)
        except NumericError as exc:
            raise TrainingError(f"epoch {epoch}: {exc}", epoch) from exc
        if not (math.isfinite(train_loss) and math.isfinite(val_loss)):
            raise TrainingError(f"epoch {epoch}: non-finite loss", epoch)
        log.append({"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss})
        if val_loss < best_val:
            best_val, best_epoch, stale = val_loss, epoch, 0
            best = copy.deepcopy(params)
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    return TrainingResult(best, cfg, log, best_epoch)
