"""Least-squares models: the windowed forecaster and the regression detector."""

from __future__ import annotations

import numpy as np

from ..errors import BadSplit, SeriesTooShort, SingularSystem
from ..tsdata import WindowSpec, make_windows
from .base import DetectorConfig, FittedModel, TrainStats


def ridge_solve(A: np.ndarray, B: np.ndarray, lam: float, penalize_last: bool = False) -> np.ndarray:
    """Solve ``min ||A W - B||^2 + lam ||W||^2`` via an augmented least-squares system.

    The final column of ``A`` is treated as the intercept and left
    unpenalized unless ``penalize_last`` is set.
    """
    p = A.shape[1]
    if lam > 0:
        pen = np.sqrt(lam) * np.eye(p)
        if not penalize_last:
            pen = pen[:-1]
        A = np.vstack([A, pen])
        B = np.vstack([B, np.zeros((pen.shape[0],) + B.shape[1:])])
    W, *_ = np.linalg.lstsq(A, B, rcond=None)
    return W


def _solve_with_fallback(A, B, lam):
    for attempt_lam in (lam, lam * 10 if lam > 0 else 1e-6):
        try:
            W = ridge_solve(A, B, attempt_lam)
        except np.linalg.LinAlgError:
            continue
        if np.all(np.isfinite(W)):
            return W, attempt_lam
    raise SingularSystem("least-squares system could not be solved even after increasing ridge penalty")


# ---------------------------------------------------------------------------
# windowed forecaster (PredAD)
# ---------------------------------------------------------------------------


def _design(windows: np.ndarray) -> np.ndarray:
    m = windows.shape[0]
    return np.hstack([windows.reshape(m, -1), np.ones((m, 1))])


def fit_windowed(X: np.ndarray, schema, spec: WindowSpec, cfg: DetectorConfig) -> FittedModel:
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] <= spec.lookback_window:
        raise SeriesTooShort(f"series length {X.shape[0]} must exceed lookback_window {spec.lookback_window}")
    windows, targets = make_windows(X, spec)
    W, lam = _solve_with_fallback(_design(windows), targets, float(cfg.get("ridge_lambda")))
    model = FittedModel(
        kind="WindowedLinear",
        params={"coef": W},
        train_stats=TrainStats(0.0, 0.0),
        schema=tuple(schema),
        meta={"lookback": int(spec.lookback_window), "ridge_lambda": lam},
    )
    train_scores = score_windowed(model, X)
    return FittedModel(model.kind, model.params, TrainStats.of(train_scores), model.schema, model.meta)


def score_windowed(model: FittedModel, X: np.ndarray) -> np.ndarray:
    """Euclidean norm of the one-step forecast residual; warm-up rows are NaN."""
    X = np.asarray(X, dtype=np.float64)
    L = model.lookback
    out = np.full(X.shape[0], np.nan)
    if X.shape[0] <= L:
        return out
    windows, targets = make_windows(X, WindowSpec(L, 1))
    pred = _design(windows) @ model.params["coef"]
    out[L:] = np.sqrt(np.sum((targets - pred) ** 2, axis=1))
    return out


# ---------------------------------------------------------------------------
# regression-based detection
# ---------------------------------------------------------------------------


def expand_features(F: np.ndarray, kind: str) -> np.ndarray:
    F = np.asarray(F, dtype=np.float64)
    cols = [F]
    if kind == "quadratic":
        p = F.shape[1]
        cols.append(np.column_stack([F[:, i] * F[:, j] for i in range(p) for j in range(i, p)]))
    return np.hstack(cols + [np.ones((F.shape[0], 1))])


def candidate_models(cfg: DetectorConfig) -> list[tuple[str, str, float]]:
    """(label, feature kind, ridge lambda) for every regression candidate, in tie-break order."""
    cands = [("ols", "linear", 0.0)]
    cands += [(f"ridge({lam:g})", "linear", float(lam)) for lam in cfg.get("ridge_grid")]
    cands.append(("quadratic", "quadratic", 0.0))
    return cands


def cv_rmse(F: np.ndarray, y: np.ndarray, kind: str, lam: float, folds: int) -> float:
    n = len(y)
    sq = np.empty(n)
    for test_idx in np.array_split(np.arange(n), folds):
        mask = np.ones(n, dtype=bool)
        mask[test_idx] = False
        W = ridge_solve(expand_features(F[mask], kind), y[mask, None], lam)
        sq[test_idx] = (y[test_idx] - (expand_features(F[test_idx], kind) @ W)[:, 0]) ** 2
    return float(np.sqrt(sq.mean()))


def fit_regression(
    F: np.ndarray,
    y: np.ndarray,
    feature_names,
    target_name: str,
    cfg: DetectorConfig,
    train_fraction: float | None = None,
) -> FittedModel:
    """Pick the candidate with the lowest k-fold CV RMSE and fit it on the training rows."""
    F = np.asarray(F, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    folds = int(cfg.get("cv_folds"))
    if folds < 2:
        raise BadSplit(f"train_cv_split must be >= 2, got {folds}")
    n_train = len(y)
    if train_fraction is not None:
        if not 0 < train_fraction <= 1:
            raise BadSplit(f"train_test_split must lie in (0, 1], got {train_fraction}")
        n_train = int(np.floor(train_fraction * len(y)))
    if n_train < 2 * folds:
        raise BadSplit(f"{n_train} training rows are too few for {folds}-fold cross-validation")
    Ft, yt = F[:n_train], y[:n_train]

    results = []
    for label, kind, lam in candidate_models(cfg):
        try:
            rmse = cv_rmse(Ft, yt, kind, lam, folds)
        except np.linalg.LinAlgError:
            rmse = np.inf
        results.append((label, kind, lam, rmse))
    finite = [r[3] for r in results if np.isfinite(r[3])]
    if not finite:
        raise SingularSystem("no regression candidate could be fit")
    best_rmse = min(finite)
    tol = best_rmse * 1e-9 + 1e-12
    label, kind, lam, rmse = next(r for r in results if r[3] <= best_rmse + tol)

    W = ridge_solve(expand_features(Ft, kind), yt[:, None], lam)
    if not np.all(np.isfinite(W)):
        raise SingularSystem(f"{label} produced non-finite coefficients")
    model = FittedModel(
        kind="Regression",
        params={"coef": W[:, 0]},
        train_stats=TrainStats(0.0, 0.0),
        schema=tuple(feature_names) + (target_name,),
        meta={
            "selected": label,
            "feature_kind": kind,
            "ridge_lambda": lam,
            "cv_rmse": {r[0]: r[3] for r in results},
            "n_train": n_train,
            "target": target_name,
        },
    )
    train_scores = score_regression(model, np.column_stack([Ft, yt]))
    return FittedModel(model.kind, model.params, TrainStats.of(train_scores), model.schema, model.meta)


def score_regression(model: FittedModel, X: np.ndarray) -> np.ndarray:
    """``X`` holds the feature columns followed by the target column."""
    X = np.asarray(X, dtype=np.float64)
    F, y = X[:, :-1], X[:, -1]
    pred = expand_features(F, model.meta["feature_kind"]) @ model.params["coef"]
    return np.abs(y - pred)
