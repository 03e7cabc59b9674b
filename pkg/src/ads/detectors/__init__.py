"""Anomaly estimators and a uniform fit/score interface over them.

Scores are float arrays aligned with the input rows. Rows that a windowed
estimator cannot evaluate (the lookback warm-up) hold ``NaN``, which is the
"unscored" marker used throughout the package.
"""

from __future__ import annotations

import numpy as np

from ..errors import SchemaMismatch
from ..tsdata import ColumnRoles, MetricFrame, WindowSpec
from . import autoencoder, covariance, ensemble, gmm, iforest, knn, linear, semisupervised
from .base import (
    ALGORITHM_OF,
    COMPATIBILITY,
    DEFAULTS,
    ESTIMATORS,
    NO_DEADLINE,
    Deadline,
    DetectorConfig,
    FittedModel,
    TrainStats,
    dumps,
    loads,
)
from .ensemble import ensemble_scores
from .gmm import identify_mode

__all__ = [
    "ALGORITHM_OF",
    "COMPATIBILITY",
    "DEFAULTS",
    "ESTIMATORS",
    "Deadline",
    "DetectorConfig",
    "FittedModel",
    "TrainStats",
    "dumps",
    "loads",
    "ensemble_scores",
    "identify_mode",
    "fit_score",
    "score",
    "fit_reconstruct_ad",
    "score_reconstruct_ad",
    "fit_pred_ad",
    "fit_covariance",
    "fit_gmm",
    "fit_isolation_forest",
    "fit_nearest_neighbor",
    "fit_regression_ad",
    "fit_semisupervised",
]


def fit_score(
    X: np.ndarray,
    schema,
    cfg: DetectorConfig,
    window: WindowSpec | None = None,
    deadline: Deadline = NO_DEADLINE,
) -> tuple[FittedModel, np.ndarray]:
    """Fit ``cfg.anomaly_estimator`` on ``X`` and return the model with its training-row scores."""
    X = np.asarray(X, dtype=np.float64)
    est = cfg.anomaly_estimator
    if est == "DNN_AutoEncoder":
        model = autoencoder.fit(X, schema, cfg, deadline)
    elif est == "WindowedLinear":
        model = linear.fit_windowed(X, schema, window or WindowSpec(), cfg)
    elif est == "Covariance":
        model = covariance.fit(X, schema, cfg)
    elif est in ("GMM_L0", "GMM_L1"):
        model = gmm.fit(X, schema, est[-2:], cfg, deadline)
    elif est == "IsolationForest":
        model = iforest.fit(X, schema, cfg, deadline)
    elif est == "NearestNeighbor":
        model = knn.fit(X, schema, cfg)
        return model, knn.training_scores(model)
    elif est == "AnomalyEnsembler":
        members, member_scores = [], []
        for name in cfg.get("members"):
            sub_cfg = DetectorConfig.for_estimator(name, **cfg.algorithm_config)
            m, s = fit_score(X, schema, sub_cfg, window, deadline)
            members.append(m)
            member_scores.append(s)
        return ensemble.build(members, member_scores, schema)
    else:
        raise ValueError(f"unknown estimator {est!r}")
    return model, score(model, X)


def fit(X, schema, cfg: DetectorConfig, window: WindowSpec | None = None, deadline: Deadline = NO_DEADLINE) -> FittedModel:
    return fit_score(X, schema, cfg, window, deadline)[0]


def score(model: FittedModel, X: np.ndarray) -> np.ndarray:
    """Score rows of ``X`` (columns ordered as ``model.schema``) as new observations."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != len(model.schema):
        raise SchemaMismatch(f"expected {len(model.schema)} columns, got shape {X.shape}")
    kind = model.kind
    if kind == "DNN_AutoEncoder":
        return autoencoder.score(model, X)
    if kind == "WindowedLinear":
        return linear.score_windowed(model, X)
    if kind == "Covariance":
        return covariance.score(model, X)
    if kind.startswith("GMM_"):
        return gmm.score(model, X)
    if kind == "IsolationForest":
        return iforest.score(model, X)
    if kind == "NearestNeighbor":
        return knn.score(model, X)
    if kind == "AnomalyEnsembler":
        return ensemble.combine(model, [score(m, X) for m in model.params["members"]])
    if kind == "Regression":
        return linear.score_regression(model, X)
    if kind == "SemiSupervised":
        return score(model.params["selected"], X)
    raise ValueError(f"unknown model kind {kind!r}")


# ---------------------------------------------------------------------------
# frame-level entry points
# ---------------------------------------------------------------------------


def _cfg(estimator: str, cfg: DetectorConfig | None) -> DetectorConfig:
    if cfg is None:
        return DetectorConfig.for_estimator(estimator)
    return DetectorConfig.for_estimator(estimator, **cfg.algorithm_config)


def fit_reconstruct_ad(frame: MetricFrame, cfg: DetectorConfig | None = None, deadline: Deadline = NO_DEADLINE) -> FittedModel:
    return autoencoder.fit(frame.values(), frame.names, _cfg("DNN_AutoEncoder", cfg), deadline)


def score_reconstruct_ad(model: FittedModel, frame: MetricFrame) -> np.ndarray:
    model.check_schema(frame.names)
    return autoencoder.score(model, frame.values())


def fit_pred_ad(frame: MetricFrame, spec: WindowSpec, cfg: DetectorConfig | None = None) -> FittedModel:
    return linear.fit_windowed(frame.values(), frame.names, spec, _cfg("WindowedLinear", cfg))


def fit_covariance(frame: MetricFrame, cfg: DetectorConfig | None = None) -> FittedModel:
    return covariance.fit(frame.values(), frame.names, _cfg("Covariance", cfg))


def fit_gmm(frame: MetricFrame, variant: str = "L1", cfg: DetectorConfig | None = None, deadline: Deadline = NO_DEADLINE) -> FittedModel:
    return gmm.fit(frame.values(), frame.names, variant, _cfg(f"GMM_{variant}", cfg), deadline)


def fit_isolation_forest(frame: MetricFrame, cfg: DetectorConfig | None = None) -> FittedModel:
    return iforest.fit(frame.values(), frame.names, _cfg("IsolationForest", cfg))


def fit_nearest_neighbor(frame: MetricFrame, cfg: DetectorConfig | None = None) -> FittedModel:
    return knn.fit(frame.values(), frame.names, _cfg("NearestNeighbor", cfg))


def score_frame(model: FittedModel, frame: MetricFrame) -> np.ndarray:
    model.check_schema(frame.names)
    return score(model, frame.values())


def fit_regression_ad(
    frame: MetricFrame,
    roles: ColumnRoles,
    cfg: DetectorConfig | None = None,
    train_fraction: float | None = None,
) -> FittedModel:
    if not roles.feature_columns:
        raise SchemaMismatch("regression needs at least one feature column")
    if len(roles.target_columns) != 1:
        raise SchemaMismatch("regression needs exactly one target column")
    target = roles.target_columns[0]
    F = frame.values(roles.feature_columns)
    y = frame.values([target])[:, 0]
    config = cfg or DetectorConfig()
    return linear.fit_regression(F, y, roles.feature_columns, target, config, train_fraction)


def fit_semisupervised(
    train: MetricFrame,
    val: MetricFrame,
    cfg: DetectorConfig | None = None,
    deadline: Deadline = NO_DEADLINE,
) -> FittedModel:
    """Fit every candidate on normal rows and keep the one with the best validation F1."""
    semisupervised.check_labels(train.labels, val.labels)
    config = cfg or DetectorConfig()
    schema = train.names
    fitted, table = {}, []
    for name in config.get("candidates"):
        deadline.check()
        sub_cfg = DetectorConfig.for_estimator(name, **config.algorithm_config)
        member = fit(train.values(), schema, sub_cfg, deadline=deadline)
        thr, f1 = semisupervised.sweep_thresholds(score(member, val.values(schema)), val.labels)
        fitted[name] = member
        table.append((name, thr, f1))
    name, thr, f1 = semisupervised.pick(table)
    chosen = fitted[name]
    return FittedModel(
        "SemiSupervised",
        {"selected": chosen},
        chosen.train_stats,
        tuple(schema),
        {"estimator": name, "threshold": thr, "val_f1": f1, "candidates": [list(t) for t in table]},
    )
