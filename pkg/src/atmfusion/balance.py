"""Minority oversampling by neighbor interpolation (SMOTE).

New points are drawn on the segment between a minority instance and one
of its k nearest minority neighbors: x_new = x_i + u * (x_nn - x_i) with
u uniform on [0, 1]. Originals pass through untouched; synthetic rows
are appended ordered by base row then draw sequence, carrying no atm_id
or timestamp. Each synthetic row's origin (base, neighbor, u) is
returned so segment membership can be audited.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .features import Dataset


class SmoteError(ValueError):
    """Minority class too small to interpolate."""


@dataclasses.dataclass(frozen=True)
class SmoteConfig:
    k_neighbors: int = 3
    target_ratio: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.k_neighbors < 1:
            raise ValueError("k_neighbors must be >= 1")
        if not self.target_ratio > 0:
            raise ValueError("target_ratio must be positive")


@dataclasses.dataclass(frozen=True)
class SyntheticOrigin:
    """Where one synthetic row came from; indices refer to input rows."""

    base_index: int
    neighbor_index: int
    u: float


def minority_label(y) -> int:
    """The rarer of the two labels; ties go to 0 (out of service)."""
    y = np.asarray(y)
    n0 = int(np.sum(y == 0))
    n1 = int(np.sum(y == 1))
    return 0 if n0 <= n1 else 1


def interpolate(x_base: np.ndarray, x_neighbor: np.ndarray, u: float) -> np.ndarray:
    return x_base + u * (x_neighbor - x_base)


def minority_neighbors(X_min: np.ndarray, k: int) -> np.ndarray:
    """(n_min, k) indices of each row's k nearest peers, self excluded.

    Distance ties resolve to the lower row index (stable sort order).
    """
    n = X_min.shape[0]
    if n < k + 1:
        raise SmoteError(f"minority class has {n} instances; k={k} needs at least {k + 1}")
    diff = X_min[:, None, :] - X_min[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=2))
    out = np.empty((n, k), dtype=np.int64)
    for i in range(n):
        order = np.argsort(dist[i], kind="stable")
        out[i] = order[order != i][:k]
    return out


def smote(train: Dataset, config: SmoteConfig) -> tuple[Dataset, list[SyntheticOrigin]]:
    if bool(np.any(train.synthetic)):
        raise SmoteError("input already contains synthetic rows")
    y = np.asarray(train.y)
    minority = minority_label(y)
    min_rows = np.flatnonzero(y == minority)
    n_min = len(min_rows)
    n_maj = len(y) - n_min
    target = math.ceil(config.target_ratio * n_maj)
    n_syn = target - n_min
    if n_syn <= 0:
        return train.subset(np.arange(len(y))), []

    if n_min < config.k_neighbors + 1:
        raise SmoteError(
            f"minority class has {n_min} instances; "
            f"k={config.k_neighbors} needs at least {config.k_neighbors + 1}"
        )
    X_min = train.X[min_rows]
    neighbors = minority_neighbors(X_min, config.k_neighbors)

    per, rem = divmod(n_syn, n_min)
    rng = np.random.default_rng(config.seed)

    X_syn = np.empty((n_syn, train.X.shape[1]), dtype=np.float64)
    origins: list[SyntheticOrigin] = []
    row = 0
    for i in range(n_min):
        count = per + (1 if i < rem else 0)
        for _ in range(count):
            j = int(rng.integers(config.k_neighbors))
            u = float(rng.uniform())
            nb = int(neighbors[i, j])
            X_syn[row] = interpolate(X_min[i], X_min[nb], u)
            origins.append(
                SyntheticOrigin(
                    base_index=int(min_rows[i]), neighbor_index=int(min_rows[nb]), u=u
                )
            )
            row += 1

    synth = Dataset(
        atm_id=np.full(n_syn, None, dtype=object),
        ts=np.full(n_syn, np.nan),
        X=X_syn,
        y=np.full(n_syn, minority, dtype=np.int8),
        synthetic=np.ones(n_syn, dtype=bool),
    )
    return Dataset.concat([train, synth]), origins
