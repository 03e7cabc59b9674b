"""Model and threshold selection on a labelled validation split."""

from __future__ import annotations

import numpy as np

from ..errors import NoFailuresInValidation, TrainContainsFailures


def sweep_thresholds(scores: np.ndarray, labels: np.ndarray) -> tuple[float, float]:
    """Best ``(threshold, f1)`` for the rule "anomalous iff score >= threshold".

    Every distinct score is tried as a threshold, which covers every
    achievable split of the rows. Ties in F1 go to the higher threshold.
    """
    s = np.asarray(scores, dtype=np.float64)
    positive = np.asarray(labels) == -1
    n_pos = int(positive.sum())
    if n_pos == 0:
        raise NoFailuresInValidation("validation split has no -1 rows")
    all_sorted = np.sort(s)
    pos_sorted = np.sort(s[positive])
    thresholds = np.unique(s)
    flagged = len(s) - np.searchsorted(all_sorted, thresholds, side="left")
    tp = n_pos - np.searchsorted(pos_sorted, thresholds, side="left")
    fp = flagged - tp
    fn = n_pos - tp
    f1 = 2.0 * tp / (2.0 * tp + fp + fn)
    best = np.flatnonzero(f1 == f1.max())[-1]
    return float(thresholds[best]), float(f1[best])


def check_labels(train_labels, val_labels) -> None:
    if train_labels is None or np.any(np.asarray(train_labels) == -1):
        raise TrainContainsFailures("training split must contain only +1 rows")
    if val_labels is None or not np.any(np.asarray(val_labels) == -1):
        raise NoFailuresInValidation("validation split needs at least one -1 row")


def pick(candidates: list[tuple[str, float, float]]) -> tuple[str, float, float]:
    """Choose among ``(estimator, threshold, f1)``: highest F1, then higher threshold, then list order."""
    best = candidates[0]
    for cand in candidates[1:]:
        if (cand[2], cand[1]) > (best[2], best[1]):
            best = cand
    return best
