from __future__ import annotations

import dataclasses
from dataclasses import dataclass


@dataclass(frozen=True)
class FitConfig:
    """Hyperparameters for every baseline; all overridable."""

    ridge_lambda: float = 1.0
    lasso_lambda: float = 1.0
    lasso_tol: float = 1e-8
    lasso_max_iter: int = 100_000
    knn_k: int = 5
    tree_max_depth: int = 8
    tree_min_samples_leaf: int = 2
    forest_n_trees: int = 200
    forest_feature_fraction: float = 1.0 / 3.0
    forest_bootstrap: bool = True
    gbt_n_rounds: int = 200
    gbt_shrinkage: float = 0.1
    gbt_max_depth: int = 3
    mlp_hidden: int = 64
    mlp_lr: float = 1e-3
    mlp_epochs: int = 500
    mlp_batch_size: int = 16
    seed: int = 0

    def __post_init__(self):
        if self.ridge_lambda < 0 or self.lasso_lambda < 0:
            raise ValueError("regularisation strengths must be non-negative")
        if self.knn_k < 1:
            raise ValueError("knn_k must be >= 1")
        if self.tree_max_depth < 0 or self.gbt_max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if self.tree_min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.forest_n_trees < 1 or self.gbt_n_rounds < 1:
            raise ValueError("ensembles need at least one member")
        if not 0 < self.forest_feature_fraction <= 1:
            raise ValueError("feature_fraction must lie in (0, 1]")
        if not 0 < self.gbt_shrinkage <= 1:
            raise ValueError("shrinkage must lie in (0, 1]")
        if self.mlp_hidden < 1 or self.mlp_epochs < 1 or self.mlp_batch_size < 1:
            raise ValueError("MLP width, epochs and batch size must be >= 1")
        if self.mlp_lr <= 0:
            raise ValueError("mlp_lr must be positive")

    def replace(self, **changes) -> "FitConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)
