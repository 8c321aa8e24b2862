"""Dynamic classifier selection and stacked fusion.

Selection methods judge pool members on a held-out set of real labeled
instances (the selection set): per query, the 7 nearest selection
instances decide either which single member looks locally best (DCS-LA
with overall local accuracy) or which members survive an eliminate-
until-nonempty filter and then vote (KNORA-E). Stacking instead feeds
out-of-fold base probabilities to a logistic meta-learner.

Neighbor search is exact: squared Euclidean distance, ties broken by
lower selection-set index. Binary features make exact distance ties
routine, so the tie rule is part of the contract, not a nicety.
"""

from __future__ import annotations

import dataclasses

import numpy as np
from numba import njit

from .features import Dataset
from .learners import (
    LogisticModel,
    train_lgbm_like,
    train_cat_like,
    train_logreg,
    train_random_forest,
)

DEFAULT_K = 7


@dataclasses.dataclass
class Dsel:
    """Selection set: real instances plus per-member correctness flags."""

    data: Dataset
    correctness: np.ndarray  # (n, n_members) bool

    def __len__(self) -> int:
        return len(self.data)


@dataclasses.dataclass
class PoolSpec:
    members: list
    k_neighbors: int = DEFAULT_K

    def __post_init__(self):
        if len(self.members) < 1:
            raise ValueError("pool needs at least one member")
        if self.k_neighbors < 1:
            raise ValueError("k_neighbors must be >= 1")


@dataclasses.dataclass
class StackModel:
    """Fixed base order (forest, leaf-wise GBDT, oblivious GBDT) + meta."""

    base_models: tuple
    meta: LogisticModel
    fold_plan: np.ndarray

    @property
    def n_features(self) -> int:
        return self.base_models[0].n_features

    def base_matrix(self, X) -> np.ndarray:
        return np.column_stack([b.predict_proba(X) for b in self.base_models])

    def predict_proba(self, X) -> np.ndarray:
        return self.meta.predict_proba(self.base_matrix(X))

    def predict_label(self, X) -> np.ndarray:
        return (self.predict_proba(X) >= 0.5).astype(np.int8)


def split_for_selection(
    train: Dataset, fraction: float = 0.33, seed: int = 0
) -> tuple[Dataset, Dataset]:
    """Stratified holdout of real rows: (member-training part, selection part)."""
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must be in (0, 1)")
    if bool(np.any(train.synthetic)):
        raise ValueError("selection split expects real rows only")
    rng = np.random.default_rng(np.random.SeedSequence((seed, 91)))
    take = np.zeros(len(train), dtype=bool)
    for label in (0, 1):
        rows = np.flatnonzero(train.y == label)
        if len(rows) == 0:
            continue
        n_take = int(np.ceil(fraction * len(rows)))
        picked = rng.permutation(len(rows))[:n_take]
        take[rows[picked]] = True
    hold = np.flatnonzero(take)
    rest = np.flatnonzero(~take)
    if len(hold) == 0 or len(rest) == 0:
        raise ValueError("selection split left an empty side")
    return train.subset(rest), train.subset(hold)


def build_dsel(members: list, validation: Dataset) -> Dsel:
    if len(validation) == 0:
        raise ValueError("validation set is empty")
    if bool(np.any(validation.synthetic)):
        raise ValueError("selection set must contain real instances only")
    corr = np.empty((len(validation), len(members)), dtype=bool)
    for c, member in enumerate(members):
        corr[:, c] = member.predict_label(validation.X) == validation.y
    return Dsel(data=validation, correctness=corr)


def squared_distances(Q: np.ndarray, D: np.ndarray) -> np.ndarray:
    """(nq, nd) squared Euclidean distances, feature-sequential accumulation."""
    acc = np.zeros((Q.shape[0], D.shape[0]), dtype=np.float64)
    for f in range(Q.shape[1]):
        diff = Q[:, f : f + 1] - D[None, :, f]
        acc += diff * diff
    return acc


@njit(cache=True)
def _knn_topk(D: np.ndarray, Q: np.ndarray, k: int) -> np.ndarray:
    """Exact top-k per query row; equal distances keep the lower index."""
    nq, d = Q.shape
    nd = D.shape[0]
    out = np.empty((nq, k), dtype=np.int64)
    best = np.empty(k, dtype=np.float64)
    for i in range(nq):
        count = 0
        worst = np.inf
        for j in range(nd):
            s = 0.0
            for f in range(d):
                diff = Q[i, f] - D[j, f]
                s += diff * diff
            if count < k:
                pos = count
                while pos > 0 and best[pos - 1] > s:
                    best[pos] = best[pos - 1]
                    out[i, pos] = out[i, pos - 1]
                    pos -= 1
                best[pos] = s
                out[i, pos] = j
                count += 1
                worst = best[count - 1]
            elif s < worst:
                pos = k - 1
                while pos > 0 and best[pos - 1] > s:
                    best[pos] = best[pos - 1]
                    out[i, pos] = out[i, pos - 1]
                    pos -= 1
                best[pos] = s
                out[i, pos] = j
                worst = best[k - 1]
    return out


def nearest_neighbors(dsel_X: np.ndarray, Q: np.ndarray, k: int) -> np.ndarray:
    """(nq, k) selection-set indices ordered by (distance, index) ascending.

    Duplicate query rows are collapsed before the scan; identical rows
    have identical neighbor lists, and snapshot features repeat heavily.
    """
    n = dsel_X.shape[0]
    if k > n:
        raise ValueError(f"k={k} exceeds selection set size {n}")
    D = np.ascontiguousarray(dsel_X, dtype=np.float64)
    Qc = np.ascontiguousarray(Q, dtype=np.float64)
    uniq, inverse = np.unique(Qc, axis=0, return_inverse=True)
    return _knn_topk(D, uniq, k)[inverse.ravel()]


def _member_labels(members: list, Q: np.ndarray) -> np.ndarray:
    return np.column_stack([m.predict_label(Q) for m in members]).astype(np.int8)


def dcs_la_predict_batch(
    pool: PoolSpec, dsel: Dsel, Q: np.ndarray, neighbors: np.ndarray | None = None
) -> np.ndarray:
    """Per query: hand the call to the member with the best local accuracy."""
    neigh = neighbors if neighbors is not None else nearest_neighbors(
        dsel.data.X, Q, pool.k_neighbors
    )
    local = dsel.correctness[neigh, :].mean(axis=1)  # (nq, n_members)
    choice = np.argmax(local, axis=1)  # first max = lower pool index
    labels = _member_labels(pool.members, Q)
    return labels[np.arange(len(Q)), choice]


def knora_e_select(
    pool: PoolSpec, dsel: Dsel, Q: np.ndarray, neighbors: np.ndarray | None = None
) -> np.ndarray:
    """Survivor mask per query: members correct on all k neighbors, shrinking
    k until someone survives; exhausted queries fall back to the full pool."""
    neigh = neighbors if neighbors is not None else nearest_neighbors(
        dsel.data.X, Q, pool.k_neighbors
    )
    C = dsel.correctness[neigh, :]  # (nq, k, P)
    prefix = np.logical_and.accumulate(C, axis=1)
    any_level = prefix.any(axis=2)  # (nq, k)
    # deepest level (largest neighbor count) with survivors
    lvl = pool.k_neighbors - 1 - np.argmax(any_level[:, ::-1], axis=1)
    sel = np.take_along_axis(prefix, lvl[:, None, None], axis=1)[:, 0, :]
    sel[~any_level.any(axis=1)] = True
    return sel


def knora_e_predict_batch(
    pool: PoolSpec, dsel: Dsel, Q: np.ndarray, neighbors: np.ndarray | None = None
) -> np.ndarray:
    """Selected members vote; ties toward in-service."""
    sel = knora_e_select(pool, dsel, Q, neighbors)
    labels = _member_labels(pool.members, Q)
    votes_up = (sel & (labels == 1)).sum(axis=1)
    return (2 * votes_up >= sel.sum(axis=1)).astype(np.int8)


def dcs_la_predict(pool: PoolSpec, dsel: Dsel, x: np.ndarray) -> int:
    return int(dcs_la_predict_batch(pool, dsel, np.asarray(x, dtype=np.float64)[None, :])[0])


def knora_e_predict(pool: PoolSpec, dsel: Dsel, x: np.ndarray) -> int:
    return int(knora_e_predict_batch(pool, dsel, np.asarray(x, dtype=np.float64)[None, :])[0])


def stratified_folds(y, n_folds: int = 5) -> np.ndarray:
    """Deterministic per-class round-robin fold ids."""
    y = np.asarray(y)
    plan = np.empty(len(y), dtype=np.int64)
    for label in np.unique(y):
        rows = np.flatnonzero(y == label)
        if len(rows) < 2:
            raise ValueError(
                f"class {label} has {len(rows)} instance(s); stratified folding impossible"
            )
        plan[rows] = np.arange(len(rows)) % n_folds
    return plan


def fit_stacking(X, y, n_folds: int = 5, rf_seed: int = 1) -> StackModel:
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y)
    plan = stratified_folds(y, n_folds)

    def fit_bases(Xp, yp):
        return (
            train_random_forest(Xp, yp, n_trees=100, seed=rf_seed),
            train_lgbm_like(Xp, yp),
            train_cat_like(Xp, yp),
        )

    meta_X = np.zeros((len(y), 3), dtype=np.float64)
    for f in range(n_folds):
        tr = plan != f
        te = ~tr
        if not np.any(te):
            continue
        for col, base in enumerate(fit_bases(X[tr], y[tr])):
            meta_X[te, col] = base.predict_proba(X[te])

    meta = train_logreg(meta_X, y)
    return StackModel(base_models=fit_bases(X, y), meta=meta, fold_plan=plan)


def stacking_predict(model: StackModel, X) -> tuple[np.ndarray, np.ndarray]:
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.shape[1] != model.n_features:
        raise ValueError(f"expected {model.n_features} features, got {X.shape[1]}")
    proba = model.predict_proba(X)
    return proba, (proba >= 0.5).astype(np.int8)
