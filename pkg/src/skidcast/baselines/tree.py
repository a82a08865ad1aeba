"""CART regression trees, random forests and gradient-boosted trees.

Trees are stored as flat node arrays so prediction is a vectorised walk and
serialisation is a handful of arrays. Node 0 is the root; a leaf has
``feature == -1``. Rows with ``x[feature] <= threshold`` go left.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

LEAF = -1


@dataclass(frozen=True, eq=False)
class TreeModel:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def depth(self) -> int:
        def walk(i):
            if self.feature[i] == LEAF:
                return 0
            return 1 + max(walk(self.left[i]), walk(self.right[i]))
        return walk(0)

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        active = self.feature[node] != LEAF
        while active.any():
            r, nd = rows[active], node[active]
            go_left = X[r, self.feature[nd]] <= self.threshold[nd]
            node[active] = np.where(go_left, self.left[nd], self.right[nd])
            active = self.feature[node] != LEAF
        return self.value[node]

    def arrays(self) -> dict[str, np.ndarray]:
        return {"feature": self.feature, "threshold": self.threshold, "left": self.left,
                "right": self.right, "value": self.value}


class _Builder:
    def __init__(self, X, y, max_depth, min_samples_leaf, n_split_features=None, rng=None):
        self.X = X
        self.y = y
        self.max_depth = max_depth
        self.min_leaf = min_samples_leaf
        self.n_split_features = n_split_features
        self.rng = rng
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []

    def _new_node(self, value: float) -> int:
        self.feature.append(LEAF)
        self.threshold.append(0.0)
        self.left.append(LEAF)
        self.right.append(LEAF)
        self.value.append(value)
        return len(self.value) - 1

    def _best_split(self, idx: np.ndarray):
        p = self.X.shape[1]
        if self.n_split_features is not None and self.n_split_features < p:
            feats = np.sort(self.rng.choice(p, self.n_split_features, replace=False))
        else:
            feats = np.arange(p)
        m = len(idx)
        xs = self.X[np.ix_(idx, feats)]
        order = np.argsort(xs, axis=0, kind="stable")
        xs = np.take_along_axis(xs, order, axis=0)
        ys = self.y[idx][order]
        csum = np.cumsum(ys, axis=0)[:-1]  # left sums for left sizes 1..m-1
        total = float(self.y[idx].sum())
        n_left = np.arange(1, m)[:, None].astype(np.float64)
        score = csum ** 2 / n_left + (total - csum) ** 2 / (m - n_left)
        valid = xs[1:] > xs[:-1]
        sizes = np.arange(1, m)
        valid &= ((sizes >= self.min_leaf) & (m - sizes >= self.min_leaf))[:, None]
        if not valid.any():
            return None
        score = np.where(valid, score, -np.inf)
        best_pos = np.argmax(score, axis=0)  # first maximum: lowest threshold
        best_per_feat = score[best_pos, np.arange(len(feats))]
        j = int(np.argmax(best_per_feat))  # first maximum: lowest feature index
        gain = best_per_feat[j] - total ** 2 / m
        if not gain > 1e-12 * max(1.0, float(np.sum((self.y[idx] - self.y[idx].mean()) ** 2))):
            return None
        pos = best_pos[j]
        thr = 0.5 * (xs[pos, j] + xs[pos + 1, j])
        return int(feats[j]), float(thr)

    def build(self, idx: np.ndarray, depth: int) -> int:
        y = self.y[idx]
        node = self._new_node(float(y.mean()))
        if depth >= self.max_depth or len(idx) < 2 * self.min_leaf or np.all(y == y[0]):
            return node
        split = self._best_split(idx)
        if split is None:
            return node
        f, thr = split
        mask = self.X[idx, f] <= thr
        self.feature[node] = f
        self.threshold[node] = thr
        self.left[node] = self.build(idx[mask], depth + 1)
        self.right[node] = self.build(idx[~mask], depth + 1)
        return node

    def finish(self) -> TreeModel:
        return TreeModel(np.array(self.feature, dtype=np.int64), np.array(self.threshold),
                         np.array(self.left, dtype=np.int64), np.array(self.right, dtype=np.int64),
                         np.array(self.value))


def _check(X, y):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or len(X) != len(y) or len(y) == 0:
        raise ValueError(f"shape mismatch or empty data: X {X.shape}, y {y.shape}")
    return X, y


def fit_tree(X, y, max_depth: int = 8, min_samples_leaf: int = 2,
             n_split_features: int | None = None, rng: np.random.Generator | None = None) -> TreeModel:
    """Greedy CART on squared error with exhaustive midpoint-threshold search.

    Ties in the split criterion go to the lower feature index, then the lower
    threshold. With ``n_split_features`` set, each split considers a fresh
    random subset of that many features drawn from ``rng``.
    """
    X, y = _check(X, y)
    if max_depth < 0:
        raise ValueError("max_depth must be >= 0")
    if n_split_features is not None and rng is None:
        raise ValueError("a random generator is required for feature subsampling")
    b = _Builder(X, y, max_depth, min_samples_leaf, n_split_features, rng)
    b.build(np.arange(len(y)), 0)
    return b.finish()


@dataclass(frozen=True, eq=False)
class Forest:
    trees: list[TreeModel]

    def predict_each(self, X) -> np.ndarray:
        return np.stack([t.predict(X) for t in self.trees])

    def predict(self, X) -> np.ndarray:
        return self.predict_each(X).mean(axis=0)


def fit_forest(X, y, n_trees: int = 200, feature_fraction: float = 1 / 3, bootstrap: bool = True,
               max_depth: int = 8, min_samples_leaf: int = 2, seed: int = 0) -> Forest:
    """Bagged CART trees with per-split feature subsets of ceil(fraction * p).

    Tree i draws from its own stream ``SeedSequence(seed).spawn(n_trees)[i]``,
    so trees can be fitted in any order with identical results.
    """
    X, y = _check(X, y)
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    if not 0 < feature_fraction <= 1:
        raise ValueError("feature_fraction must lie in (0, 1]")
    n, p = X.shape
    k = min(p, math.ceil(feature_fraction * p - 1e-12))
    trees = []
    for child in np.random.SeedSequence(seed).spawn(n_trees):
        rng = np.random.Generator(np.random.PCG64(child))
        rows = rng.integers(0, n, n) if bootstrap else np.arange(n)
        trees.append(fit_tree(X[rows], y[rows], max_depth, min_samples_leaf,
                              n_split_features=k if k < p else None, rng=rng))
    return Forest(trees)


@dataclass(frozen=True, eq=False)
class BoostedModel:
    base: float
    shrinkage: float
    trees: list[TreeModel]
    train_mse: list[float] = field(default_factory=list)

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        out = np.full(len(X), self.base)
        for t in self.trees:
            out += self.shrinkage * t.predict(X)
        return out


def fit_gbt(X, y, n_rounds: int = 200, shrinkage: float = 0.1, max_depth: int = 3,
            min_samples_leaf: int = 1) -> BoostedModel:
    """Squared-error gradient boosting: each round fits a tree to the residuals.

    ``train_mse[m]`` is the training MSE after m rounds (index 0 is the
    constant model).
    """
    X, y = _check(X, y)
    if n_rounds < 1:
        raise ValueError("n_rounds must be >= 1")
    if not 0 < shrinkage <= 1:
        raise ValueError("shrinkage must lie in (0, 1]")
    base = float(y.mean())
    F = np.full(len(y), base)
    history = [float(np.mean((y - F) ** 2))]
    trees = []
    for _ in range(n_rounds):
        tree = fit_tree(X, y - F, max_depth, min_samples_leaf)
        F = F + shrinkage * tree.predict(X)
        trees.append(tree)
        history.append(float(np.mean((y - F) ** 2)))
    return BoostedModel(base, shrinkage, trees, history)
