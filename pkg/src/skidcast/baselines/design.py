"""Design matrices for the baselines.

Flattened windows repeat every static covariate once per time step, the month
column is identical across samples, and the month-0 targets equal the
after-milling covariates, so the raw matrix is rank deficient. A
:class:`ColumnFilter` fitted on training rows keeps, left to right, only the
columns that are not an affine combination of the columns already kept.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        if self.X.ndim != 2 or len(self.X) != len(self.y):
            raise ValueError(f"design shape mismatch: X {self.X.shape}, y {self.y.shape}")
        if len(self.y) < 1:
            raise ValueError("design matrix needs at least one row")
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.y))):
            raise ValueError("design matrix contains non-finite entries")


@dataclass(frozen=True, eq=False)
class ColumnFilter:
    keep: np.ndarray  # column indices into the flattened window

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X, dtype=np.float64)[:, self.keep]


def fit_column_filter(X: np.ndarray, rtol: float = 1e-9) -> ColumnFilter:
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    basis = [np.full(n, 1.0 / np.sqrt(n))] if n else []
    keep: list[int] = []
    for j in range(X.shape[1]):
        col = X[:, j].copy()
        scale = np.linalg.norm(col - col.mean())
        if scale == 0.0:
            continue
        for q in basis:  # two Gram-Schmidt passes for stability
            col -= (q @ col) * q
        for q in basis:
            col -= (q @ col) * q
        resid = np.linalg.norm(col)
        if resid <= rtol * scale:
            continue
        basis.append(col / resid)
        keep.append(j)
    return ColumnFilter(np.array(keep, dtype=np.int64))
