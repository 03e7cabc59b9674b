"""Mahalanobis distance under a shrunk covariance estimate."""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_triangular

from ..errors import TooFewRows
from .base import DetectorConfig, FittedModel, TrainStats


def shrunk_covariance(X: np.ndarray, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    mu = X.mean(axis=0)
    centered = X - mu
    cov = centered.T @ centered / X.shape[0]
    return mu, (1.0 - alpha) * cov + alpha * np.eye(X.shape[1])


def fit(X: np.ndarray, schema, cfg: DetectorConfig) -> FittedModel:
    X = np.asarray(X, dtype=np.float64)
    n, d = X.shape
    if n < d + 1:
        raise TooFewRows(f"covariance estimate needs at least {d + 1} rows, got {n}")
    alpha = float(cfg.get("shrinkage"))
    mu, cov = shrunk_covariance(X, alpha)
    chol = np.linalg.cholesky(cov)
    model = FittedModel("Covariance", {"mean": mu, "chol": chol}, TrainStats(0.0, 0.0), tuple(schema), {"shrinkage": alpha})
    return FittedModel(model.kind, model.params, TrainStats.of(score(model, X)), model.schema, model.meta)


def score(model: FittedModel, X: np.ndarray) -> np.ndarray:
    centered = np.asarray(X, dtype=np.float64) - model.params["mean"]
    z = solve_triangular(model.params["chol"], centered.T, lower=True)
    return np.sqrt(np.sum(z * z, axis=0))
