"""Gradient-boosted tree classifiers with logistic loss.

Two growth policies over the same second-order machinery: best-first
(split whichever leaf offers the largest gain, up to a leaf budget) and
oblivious (every node at a level shares one split, so a tree of depth d
is a lookup table with 2^d cells). Raw scores start at the prior
log-odds; per-round mean log-loss is kept for descent checks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from . import _kernels
from .trees import _check_xy, _presort

_UNLIMITED_DEPTH = 1 << 30


def _log_odds(y) -> float:
    p = float(np.mean(y))
    p = min(max(p, 1e-12), 1.0 - 1e-12)
    return float(np.log(p / (1.0 - p)))


def _mean_logloss(raw, y) -> float:
    # ln(1 + e^raw) - y*raw, stable for large |raw|
    return float(np.mean(np.logaddexp(0.0, raw) - y * raw))


def _grad_hess(raw, y):
    p = expit(raw)
    return p - y, p * (1.0 - p)


@dataclass
class StageTree:
    """One boosting round: flat tree whose leaves hold raw-score increments."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray


@dataclass
class ObliviousStage:
    """One symmetric round: shared per-level splits plus a 2^depth leaf table."""

    features: np.ndarray
    thresholds: np.ndarray
    values: np.ndarray


@dataclass
class LeafwiseGbdtModel:
    base_score: float
    stages: list = field(default_factory=list)
    train_loss: np.ndarray = field(default_factory=lambda: np.zeros(0))
    n_features: int = 0
    lr: float = 0.1

    def raw_score(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        raw = np.full(X.shape[0], self.base_score, dtype=np.float64)
        for s in self.stages:
            raw += _kernels.predict_tree(s.feature, s.threshold, s.left, s.right, s.value, X)
        return raw

    def predict_proba(self, X) -> np.ndarray:
        return expit(self.raw_score(X))

    def predict_label(self, X) -> np.ndarray:
        return (self.predict_proba(X) >= 0.5).astype(np.int8)


@dataclass
class ObliviousGbdtModel:
    base_score: float
    depth: int
    stages: list = field(default_factory=list)
    train_loss: np.ndarray = field(default_factory=lambda: np.zeros(0))
    n_features: int = 0
    lr: float = 0.1

    def raw_score(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        raw = np.full(X.shape[0], self.base_score, dtype=np.float64)
        for s in self.stages:
            raw += _kernels.predict_oblivious(s.features, s.thresholds, s.values, X)
        return raw

    def predict_proba(self, X) -> np.ndarray:
        return expit(self.raw_score(X))

    def predict_label(self, X) -> np.ndarray:
        return (self.predict_proba(X) >= 0.5).astype(np.int8)


def train_lgbm_like(
    X,
    y,
    n_rounds: int = 100,
    num_leaves: int = 31,
    max_depth: int = -1,
    lr: float = 0.1,
) -> LeafwiseGbdtModel:
    X, y = _check_xy(X, y)
    if num_leaves < 1:
        raise ValueError("num_leaves must be positive")
    depth_cap = max_depth if max_depth > 0 else _UNLIMITED_DEPTH
    n = X.shape[0]
    base = _log_odds(y)
    raw = np.full(n, base, dtype=np.float64)
    master = _presort(X, np.arange(n, dtype=np.int32))

    stages = []
    losses = np.empty(n_rounds, dtype=np.float64)
    for r in range(n_rounds):
        g, h = _grad_hess(raw, y)
        feature, threshold, left, right, value = _kernels.build_leafwise_tree(
            X, g, h, master.copy(), num_leaves, lr, raw, depth_cap
        )
        stages.append(StageTree(feature, threshold, left, right, value))
        losses[r] = _mean_logloss(raw, y)

    return LeafwiseGbdtModel(
        base_score=base, stages=stages, train_loss=losses, n_features=X.shape[1], lr=lr
    )


def train_cat_like(
    X, y, n_iters: int = 100, lr: float = 0.1, depth: int = 6
) -> ObliviousGbdtModel:
    X, y = _check_xy(X, y)
    if depth < 1:
        raise ValueError("depth must be positive")
    n = X.shape[0]
    base = _log_odds(y)
    raw = np.full(n, base, dtype=np.float64)
    master = _presort(X, np.arange(n, dtype=np.int32))

    stages = []
    losses = np.empty(n_iters, dtype=np.float64)
    for r in range(n_iters):
        g, h = _grad_hess(raw, y)
        feats, thrs, values = _kernels.build_oblivious_tree(X, g, h, master, depth, lr, raw)
        stages.append(ObliviousStage(feats, thrs, values))
        losses[r] = _mean_logloss(raw, y)

    return ObliviousGbdtModel(
        base_score=base,
        depth=depth,
        stages=stages,
        train_loss=losses,
        n_features=X.shape[1],
        lr=lr,
    )
