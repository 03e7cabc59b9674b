"""Rank-averaging ensemble of relationship-based detectors."""

from __future__ import annotations

import numpy as np
from scipy.stats import rankdata

from ..errors import LengthMismatch
from .base import FittedModel, TrainStats


def rank_normalize(scores: np.ndarray) -> np.ndarray:
    """Map scored entries to ``[0, 1]`` by average rank; NaN entries stay NaN."""
    s = np.asarray(scores, dtype=np.float64)
    out = np.full(s.shape, np.nan)
    mask = ~np.isnan(s)
    n = int(mask.sum())
    if n == 1:
        out[mask] = 0.5
    elif n > 1:
        out[mask] = (rankdata(s[mask], method="average") - 1.0) / (n - 1)
    return out


def ensemble_scores(score_lists) -> np.ndarray:
    series = [np.asarray(s, dtype=np.float64) for s in score_lists]
    if len(series) < 2:
        raise ValueError("ensemble_scores needs at least two score series")
    if len({len(s) for s in series}) != 1:
        raise LengthMismatch(f"score series lengths differ: {[len(s) for s in series]}")
    return np.mean([rank_normalize(s) for s in series], axis=0)


def relative_rank(reference_sorted: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Normalized average rank of ``values`` against a sorted reference sample.

    For values drawn from the reference itself this equals
    :func:`rank_normalize`, so batch and stream scoring agree.
    """
    n = len(reference_sorted)
    lo = np.searchsorted(reference_sorted, values, side="left")
    hi = np.searchsorted(reference_sorted, values, side="right")
    u = lo + 0.5 * (hi - lo)
    if n <= 1:
        return np.full(len(values), 0.5)
    return np.clip((u - 0.5) / (n - 1), 0.0, 1.0)


def build(members: list[FittedModel], member_train_scores: list[np.ndarray], schema) -> tuple[FittedModel, np.ndarray]:
    train = ensemble_scores(member_train_scores)
    params = {"members": members}
    for i, s in enumerate(member_train_scores):
        params[f"reference{i}"] = np.sort(np.asarray(s, dtype=np.float64))
    model = FittedModel(
        "AnomalyEnsembler", params, TrainStats.of(train), tuple(schema), {"members": [m.kind for m in members]}
    )
    return model, train


def combine(model: FittedModel, member_scores: list[np.ndarray]) -> np.ndarray:
    parts = [relative_rank(model.params[f"reference{i}"], s) for i, s in enumerate(member_scores)]
    return np.mean(parts, axis=0)
