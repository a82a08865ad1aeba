"""From-scratch comparison regressors over flattened window features."""

from .config import FitConfig
from .design import DesignMatrix, ColumnFilter, fit_column_filter
from .knn import KNNModel, fit_knn, predict_knn
from .linear import LinearModel, SingularMatrixError, fit_linear
from .mlp import MLPModel, MLPTrainingError, fit_mlp
from .tree import BoostedModel, Forest, TreeModel, fit_forest, fit_gbt, fit_tree

__all__ = [
    "BoostedModel",
    "ColumnFilter",
    "DesignMatrix",
    "FitConfig",
    "Forest",
    "KNNModel",
    "LinearModel",
    "MLPModel",
    "MLPTrainingError",
    "SingularMatrixError",
    "TreeModel",
    "fit_column_filter",
    "fit_forest",
    "fit_gbt",
    "fit_knn",
    "fit_linear",
    "fit_mlp",
    "fit_tree",
    "predict_knn",
]
