"""Ordinary least squares, ridge and lasso with an unpenalised intercept."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class SingularMatrixError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True, eq=False)
class LinearModel:
    kind: str
    intercept: float
    coef: np.ndarray
    lam: float = 0.0
    n_iter: int = 0

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X, dtype=np.float64) @ self.coef + self.intercept


def _soft_threshold(z: float, t: float) -> float:
    if z > t:
        return z - t
    if z < -t:
        return z + t
    return 0.0


def fit_linear(kind: str, X: np.ndarray, y: np.ndarray, lam: float = 0.0,
               tol: float = 1e-8, max_iter: int = 100_000) -> LinearModel:
    """Fit ``ols``, ``ridge`` or ``lasso``.

    Objectives (after centring, so the intercept is free):

    * ols:   ½‖y − Xβ‖²
    * ridge: ½‖y − Xβ‖² + ½λ‖β‖²,  solved via (XᵀX + λI)β = Xᵀy
    * lasso: ½‖y − Xβ‖² + λ‖β‖₁,   cyclic coordinate descent until the
      largest coefficient change in a sweep is below ``tol``
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError(f"shape mismatch: X {X.shape}, y {y.shape}")
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    x_mean = X.mean(axis=0)
    y_mean = y.mean()
    Xc = X - x_mean
    yc = y - y_mean
    p = X.shape[1]
    n_iter = 0

    if kind in ("ols", "ridge"):
        reg = 0.0 if kind == "ols" else lam
        A = Xc.T @ Xc + reg * np.eye(p)
        if np.linalg.matrix_rank(A) < p:
            raise SingularMatrixError(
                f"{kind}: normal equations are singular (rank {np.linalg.matrix_rank(A)} < {p}); "
                "use ridge with lambda > 0 or drop collinear columns"
            )
        beta = np.linalg.solve(A, Xc.T @ yc)
    elif kind == "lasso":
        beta = np.zeros(p)
        norms = (Xc * Xc).sum(axis=0)
        resid = yc.copy()
        for n_iter in range(1, max_iter + 1):
            biggest = 0.0
            for j in range(p):
                if norms[j] == 0.0:
                    continue
                old = beta[j]
                rho = Xc[:, j] @ resid + norms[j] * old
                new = _soft_threshold(rho, lam) / norms[j]
                if new != old:
                    resid -= Xc[:, j] * (new - old)
                    beta[j] = new
                    biggest = max(biggest, abs(new - old))
            if biggest < tol:
                break
    else:
        raise ValueError(f"unknown linear model kind {kind!r}")
    return LinearModel(kind, float(y_mean - x_mean @ beta), beta, lam if kind != "ols" else 0.0, n_iter)
