"""Isolation forest with array-encoded trees."""

from __future__ import annotations

import math

import numpy as np

from ..errors import TooFewRows
from .base import NO_DEADLINE, Deadline, DetectorConfig, FittedModel, TrainStats

MIN_ROWS = 8


def harmonic(n: int) -> float:
    return float(np.sum(1.0 / np.arange(1, n + 1))) if n >= 1 else 0.0


def c_factor(n: int) -> float:
    """Average path length of an unsuccessful search in a BST of ``n`` items."""
    if n <= 1:
        return 0.0
    return 2.0 * harmonic(n - 1) - 2.0 * (n - 1) / n


def anomaly_score(mean_path: np.ndarray | float, n: int):
    return np.power(2.0, -np.asarray(mean_path) / c_factor(n))


def _grow(X, rng, height_limit):
    feature, threshold, left, right, size, depth = [], [], [], [], [], []

    def node(idx, d):
        me = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        size.append(len(idx))
        depth.append(d)
        if d >= height_limit or len(idx) <= 1:
            return me
        sub = X[idx]
        lo, hi = sub.min(axis=0), sub.max(axis=0)
        spread = np.flatnonzero(hi > lo)
        if len(spread) == 0:
            return me
        f = int(spread[rng.integers(len(spread))])
        cut = rng.uniform(lo[f], hi[f])
        go_left = sub[:, f] < cut
        feature[me] = f
        threshold[me] = cut
        left[me] = node(idx[go_left], d + 1)
        right[me] = node(idx[~go_left], d + 1)
        return me

    node(np.arange(X.shape[0]), 0)
    return (
        np.array(feature, dtype=np.int64),
        np.array(threshold),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        np.array(size, dtype=np.int64),
        np.array(depth, dtype=np.int64),
    )


def fit(X: np.ndarray, schema, cfg: DetectorConfig, deadline: Deadline = NO_DEADLINE) -> FittedModel:
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if n < MIN_ROWS:
        raise TooFewRows(f"isolation forest needs at least {MIN_ROWS} rows, got {n}")
    rng = np.random.default_rng(cfg.seed)
    n_trees = int(cfg.get("n_trees"))
    psi = min(int(cfg.get("max_samples")), n)
    height_limit = math.ceil(math.log2(psi)) if psi > 1 else 0
    parts = [[] for _ in range(6)]
    roots = []
    offset = 0
    for _ in range(n_trees):
        deadline.check()
        sample = rng.choice(n, size=psi, replace=False)
        tree = _grow(X[sample], rng, height_limit)
        roots.append(offset)
        for j, arr in enumerate(tree):
            if j in (2, 3):
                arr = np.where(arr >= 0, arr + offset, -1)
            parts[j].append(arr)
        offset += len(tree[0])
    names = ("feature", "threshold", "left", "right", "size", "depth")
    params = {name: np.concatenate(p) for name, p in zip(names, parts)}
    params["roots"] = np.array(roots, dtype=np.int64)
    # path-length correction for each node when it is reached as a leaf
    params["leaf_adjust"] = np.array([c_factor(int(s)) for s in params["size"]])
    model = FittedModel("IsolationForest", params, TrainStats(0.0, 0.0), tuple(schema), {"n_trees": n_trees, "psi": psi})
    return FittedModel(model.kind, model.params, TrainStats.of(score(model, X)), model.schema, model.meta)


def path_lengths(model: FittedModel, X: np.ndarray) -> np.ndarray:
    """``(n_rows, n_trees)`` path lengths including the leaf-size correction."""
    p = model.params
    X = np.asarray(X, dtype=np.float64)
    rows = np.arange(X.shape[0])
    out = np.empty((X.shape[0], len(p["roots"])))
    for t, root in enumerate(p["roots"]):
        node = np.full(X.shape[0], root)
        while True:
            f = p["feature"][node]
            internal = f >= 0
            if not internal.any():
                break
            go_left = X[rows, np.where(internal, f, 0)] < p["threshold"][node]
            node = np.where(internal, np.where(go_left, p["left"][node], p["right"][node]), node)
        out[:, t] = p["depth"][node] + p["leaf_adjust"][node]
    return out


def score(model: FittedModel, X: np.ndarray) -> np.ndarray:
    return anomaly_score(path_lengths(model, X).mean(axis=1), int(model.meta["psi"]))
