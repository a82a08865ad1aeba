from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class KNNModel:
    X: np.ndarray
    y: np.ndarray
    k: int

    def predict(self, Q: np.ndarray) -> np.ndarray:
        Q = np.atleast_2d(np.asarray(Q, dtype=np.float64))
        if Q.shape[0] == 0:
            return np.zeros(0)
        if Q.shape[1] != self.X.shape[1]:
            raise ValueError(f"query width {Q.shape[1]} != training width {self.X.shape[1]}")
        d2 = ((Q[:, None, :] - self.X[None, :, :]) ** 2).sum(axis=-1)
        # stable sort: equal distances keep the lower training index first
        nearest = np.argsort(d2, axis=1, kind="stable")[:, : self.k]
        return self.y[nearest].mean(axis=1)


def fit_knn(X: np.ndarray, y: np.ndarray, k: int) -> KNNModel:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if not 1 <= k <= len(X):
        raise ValueError(f"k must satisfy 1 <= k <= n ({len(X)}), got {k}")
    return KNNModel(X.copy(), y.copy(), k)


def predict_knn(model: KNNModel, x: np.ndarray) -> float:
    """Prediction for a single query row."""
    return float(model.predict(np.asarray(x, dtype=np.float64)[None, :])[0])
