"""One-hidden-layer ReLU regressor trained with Adam for a fixed number of epochs."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .. import tensor as T
from ..optim import Adam, glorot_uniform
from ..tensor import GradTape, Tensor


class MLPTrainingError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class MLPModel:
    params: dict[str, np.ndarray]
    loss_history: list[float] = field(default_factory=list)

    def predict(self, X) -> np.ndarray:
        return mlp_forward(np.asarray(X, dtype=np.float64), self.params).data


def init_mlp(p: int, hidden: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
    return {
        "w1": glorot_uniform(rng, (p, hidden), p, hidden),
        "b1": np.zeros(hidden),
        "w2": glorot_uniform(rng, (hidden, 1), hidden, 1),
        "b2": np.zeros(1),
    }


def mlp_forward(X: np.ndarray, params) -> Tensor:
    p = {k: v if isinstance(v, Tensor) else Tensor(v) for k, v in params.items()}
    h = T.relu(T.add(T.matmul(X, p["w1"]), p["b1"]))
    out = T.add(T.matmul(h, p["w2"]), p["b2"])
    return T.reshape(out, (X.shape[0],))


def mlp_loss(X, y, params) -> Tensor:
    return T.mean_squared_error(mlp_forward(np.asarray(X, dtype=np.float64), params), y)


def fit_mlp(X, y, hidden: int = 64, lr: float = 1e-3, epochs: int = 500,
            batch_size: int = 16, seed: int = 0) -> MLPModel:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if hidden < 1:
        raise ValueError("hidden width must be >= 1")
    init_seq, order_seq = np.random.SeedSequence(seed).spawn(2)
    params = init_mlp(X.shape[1], hidden, np.random.Generator(np.random.PCG64(init_seq)))
    order_rng = np.random.Generator(np.random.PCG64(order_seq))
    opt = Adam(lr)
    history = [float(mlp_loss(X, y, params).data)]
    n = len(y)
    for epoch in range(1, epochs + 1):
        order = order_rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            leaves = {k: Tensor(v, requires_grad=True) for k, v in params.items()}
            with GradTape() as tape:
                loss = mlp_loss(X[idx], y[idx], leaves)
            if not math.isfinite(float(loss.data)):
                raise MLPTrainingError(f"epoch {epoch}: non-finite loss")
            tape.backward(loss)
            opt.step(params, {k: t.grad for k, t in leaves.items()})
        history.append(float(mlp_loss(X, y, params).data))
    return MLPModel(params, history)
