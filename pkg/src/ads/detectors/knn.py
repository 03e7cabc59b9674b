"""Distance to the k-th nearest training row, computed by exhaustive search."""

from __future__ import annotations

import numpy as np

from ..errors import TooFewRows
from .base import DetectorConfig, FittedModel, TrainStats


def kth_distance(reference: np.ndarray, queries: np.ndarray, k: int, exclude_self: bool = False) -> np.ndarray:
    n_ref, d = reference.shape
    chunk = max(1, 4_000_000 // max(1, n_ref * d))
    out = np.empty(queries.shape[0])
    for start in range(0, queries.shape[0], chunk):
        q = queries[start : start + chunk]
        d2 = np.sum((q[:, None, :] - reference[None, :, :]) ** 2, axis=2)
        if exclude_self:
            rows = np.arange(q.shape[0])
            d2[rows, start + rows] = np.inf
        out[start : start + chunk] = np.sqrt(np.partition(d2, k - 1, axis=1)[:, k - 1])
    return out


def fit(X: np.ndarray, schema, cfg: DetectorConfig) -> FittedModel:
    X = np.asarray(X, dtype=np.float64)
    k = int(cfg.get("k"))
    if X.shape[0] <= k:
        raise TooFewRows(f"nearest-neighbour scoring needs more than k={k} rows, got {X.shape[0]}")
    train_scores = kth_distance(X, X, k, exclude_self=True)
    return FittedModel(
        "NearestNeighbor",
        {"reference": X.copy(), "train_scores": train_scores},
        TrainStats.of(train_scores),
        tuple(schema),
        {"k": k},
    )


def score(model: FittedModel, X: np.ndarray) -> np.ndarray:
    return kth_distance(model.params["reference"], np.asarray(X, dtype=np.float64), int(model.meta["k"]))


def training_scores(model: FittedModel) -> np.ndarray:
    return np.asarray(model.params["train_scores"])
