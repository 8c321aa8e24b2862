"""Decision tree, bagging, and random forest classifiers.

All three share one CART builder: Gini impurity, midpoint thresholds,
grown until leaves are pure or below the split minimum. Leaf values are
the in-service fraction of the training rows they hold, so
``predict_proba`` returns P(in service).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels

DEFAULT_BAG_SIZE = 3
DEFAULT_FOREST_SIZE = 100


def _check_xy(X, y):
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2:
        raise ValueError("X must be 2-dimensional")
    if y.shape != (X.shape[0],):
        raise ValueError("y length must match X rows")
    if X.shape[0] == 0:
        raise ValueError("need at least one training row")
    yf = y.astype(np.float64)
    if not np.all((yf == 0.0) | (yf == 1.0)):
        raise ValueError("labels must be 0 or 1")
    return X, yf


def _presort(X, rows):
    """(d, m) int32 row indices, ascending per feature, ties by position."""
    d = X.shape[1]
    m = len(rows)
    order = np.empty((d, m), dtype=np.int32)
    for f in range(d):
        order[f] = rows[np.argsort(X[rows, f], kind="stable")]
    return order


@dataclass
class TreeModel:
    """Flat-array CART; ``feature[i] < 0`` marks a leaf with ``value[i]``."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_features: int

    def predict_proba(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        return _kernels.predict_tree(
            self.feature, self.threshold, self.left, self.right, self.value, X
        )

    def predict_label(self, X) -> np.ndarray:
        return (self.predict_proba(X) >= 0.5).astype(np.int8)

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))


@dataclass
class BaggingModel:
    """Bootstrap ensemble; probability is the mean of member probabilities."""

    trees: list = field(default_factory=list)
    n_features: int = 0

    def predict_proba(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        acc = np.zeros(X.shape[0], dtype=np.float64)
        for t in self.trees:
            acc += t.predict_proba(X)
        return acc / len(self.trees)

    def predict_label(self, X) -> np.ndarray:
        return (self.predict_proba(X) >= 0.5).astype(np.int8)


@dataclass
class ForestModel:
    """Random forest; probability is the fraction of members voting 1."""

    trees: list = field(default_factory=list)
    n_features: int = 0
    max_features: int = 0

    def predict_proba(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        votes = np.zeros(X.shape[0], dtype=np.float64)
        for t in self.trees:
            votes += t.predict_proba(X) >= 0.5
        return votes / len(self.trees)

    def predict_label(self, X) -> np.ndarray:
        return (self.predict_proba(X) >= 0.5).astype(np.int8)


def _grow(X, y, rows, min_split, min_leaf, max_features, seed):
    order = _presort(X, rows)
    feature, threshold, left, right, value = _kernels.build_cart(
        X, y, order, min_split, min_leaf, max_features, seed
    )
    return TreeModel(
        feature=feature,
        threshold=threshold,
        left=left,
        right=right,
        value=value,
        n_features=X.shape[1],
    )


def train_tree(X, y, min_split: int = 2, min_leaf: int = 1) -> TreeModel:
    X, y = _check_xy(X, y)
    rows = np.arange(X.shape[0], dtype=np.int32)
    return _grow(X, y, rows, min_split, min_leaf, X.shape[1], 0)


def _bootstrap_rows(n, rng):
    return np.sort(rng.integers(0, n, size=n)).astype(np.int32)


def train_bagging(X, y, n_trees: int = DEFAULT_BAG_SIZE, seed: int = 0) -> BaggingModel:
    X, y = _check_xy(X, y)
    n = X.shape[0]
    trees = []
    for t in range(n_trees):
        rng = np.random.default_rng(np.random.SeedSequence((seed, t)))
        rows = _bootstrap_rows(n, rng)
        trees.append(_grow(X, y, rows, 2, 1, X.shape[1], 0))
    return BaggingModel(trees=trees, n_features=X.shape[1])


def train_random_forest(
    X, y, n_trees: int = DEFAULT_FOREST_SIZE, seed: int = 1
) -> ForestModel:
    X, y = _check_xy(X, y)
    n, d = X.shape
    max_features = int(np.ceil(np.sqrt(d)))
    trees = []
    for t in range(n_trees):
        rng = np.random.default_rng(np.random.SeedSequence((seed, t)))
        rows = _bootstrap_rows(n, rng)
        split_seed = int(rng.integers(0, 2**31 - 1))
        trees.append(_grow(X, y, rows, 2, 1, max_features, split_seed))
    return ForestModel(trees=trees, n_features=d, max_features=max_features)
