"""Detector configuration, fitted-model container and its on-disk encoding."""

from __future__ import annotations

import io
import json
import time
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from ..errors import DeadlineExceeded, IncompatibleEstimator, SchemaMismatch

FORMAT_VERSION = 1

COMPATIBILITY = {
    "ReconstructAD": ("DNN_AutoEncoder",),
    "PredAD": ("WindowedLinear",),
    "RelationshipAD": (
        "Covariance",
        "GMM_L0",
        "GMM_L1",
        "IsolationForest",
        "NearestNeighbor",
        "AnomalyEnsembler",
    ),
}
ESTIMATORS = tuple(e for group in COMPATIBILITY.values() for e in group)
ALGORITHM_OF = {e: algo for algo, group in COMPATIBILITY.items() for e in group}

# Every tunable knob and its default. Keys are the names accepted inside a
# request's ``algorithm_config``.
DEFAULTS: dict[str, Any] = {
    "random_seed": 42,
    # autoencoder
    "hidden_sizes": None,
    "epochs": 100,
    "learning_rate": 0.01,
    "batch_size": 32,
    # windowed forecaster
    "ridge_lambda": 1e-6,
    # covariance
    "shrinkage": 0.01,
    # mixture
    "max_components": 5,
    "l1_weight": 0.05,
    "covariance_floor": 1e-6,
    "max_iter": 200,
    "tol": 1e-6,
    "n_init": 2,
    # isolation forest
    "n_trees": 100,
    "max_samples": 256,
    # nearest neighbour
    "k": 5,
    # ensemble
    "members": ["IsolationForest", "NearestNeighbor", "Covariance"],
    # semi-supervised
    "candidates": ["Covariance", "GMM_L0", "IsolationForest", "NearestNeighbor"],
    # regression
    "cv_folds": 5,
    "ridge_grid": [1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0],
}


@dataclass(frozen=True)
class DetectorConfig:
    algorithm_type: str = "ReconstructAD"
    anomaly_estimator: str = "DNN_AutoEncoder"
    algorithm_config: dict = field(default_factory=dict)

    def __post_init__(self):
        allowed = COMPATIBILITY.get(self.algorithm_type)
        if allowed is None:
            raise IncompatibleEstimator(f"unknown algorithm_type {self.algorithm_type!r}")
        if self.anomaly_estimator not in allowed:
            raise IncompatibleEstimator(
                f"{self.anomaly_estimator!r} is not available for {self.algorithm_type}; "
                f"choose one of {', '.join(allowed)}"
            )

    @classmethod
    def for_estimator(cls, estimator: str, **config) -> "DetectorConfig":
        if estimator not in ALGORITHM_OF:
            raise IncompatibleEstimator(f"unknown anomaly_estimator {estimator!r}")
        return cls(ALGORITHM_OF[estimator], estimator, dict(config))

    def get(self, key: str):
        if key in self.algorithm_config:
            return self.algorithm_config[key]
        return DEFAULTS[key]

    @property
    def seed(self) -> int:
        return int(self.get("random_seed"))

    def with_config(self, **updates) -> "DetectorConfig":
        return DetectorConfig(self.algorithm_type, self.anomaly_estimator, {**self.algorithm_config, **updates})


@dataclass(frozen=True)
class TrainStats:
    mean: float
    std: float

    @classmethod
    def of(cls, scores: np.ndarray) -> "TrainStats":
        s = np.asarray(scores, dtype=np.float64)
        s = s[np.isfinite(s)]
        if len(s) == 0:
            return cls(0.0, 0.0)
        return cls(float(s.mean()), float(s.std()))


@dataclass(frozen=True, eq=False)
class FittedModel:
    """Learned state of one estimator.

    ``params`` maps names to numpy arrays or nested :class:`FittedModel`
    members (lists of them for ensembles); ``meta`` holds JSON-able settings.
    """

    kind: str
    params: dict
    train_stats: TrainStats
    schema: tuple
    meta: dict = field(default_factory=dict)

    def check_schema(self, names) -> None:
        if tuple(names) != tuple(self.schema):
            raise SchemaMismatch(f"model fit on {list(self.schema)}, got {list(names)}")

    @property
    def lookback(self) -> int:
        """Number of leading rows that cannot be scored (window warm-up)."""
        return int(self.meta.get("lookback", 0))


class Deadline:
    """Cooperative wall-clock deadline checked inside long fitting loops."""

    def __init__(self, seconds: float | None = None, cancelled: Callable[[], bool] | None = None):
        self.expires = None if seconds is None else time.monotonic() + seconds
        self._cancelled = cancelled

    def check(self) -> None:
        if self._cancelled is not None and self._cancelled():
            raise DeadlineExceeded("job cancelled")
        if self.expires is not None and time.monotonic() > self.expires:
            raise DeadlineExceeded("deadline passed")


NO_DEADLINE = Deadline()


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def _flatten(model: FittedModel, prefix: str, arrays: dict) -> dict:
    params_meta = {}
    for name, value in model.params.items():
        if isinstance(value, FittedModel):
            params_meta[name] = {"model": _flatten(value, f"{prefix}{name}/", arrays)}
        elif isinstance(value, list) and value and isinstance(value[0], FittedModel):
            params_meta[name] = {
                "models": [_flatten(m, f"{prefix}{name}/{i}/", arrays) for i, m in enumerate(value)]
            }
        else:
            arrays[prefix + name] = np.asarray(value)
            params_meta[name] = {"array": prefix + name}
    return {
        "kind": model.kind,
        "schema": list(model.schema),
        "train_stats": [model.train_stats.mean.hex(), model.train_stats.std.hex()],
        "meta": model.meta,
        "params": params_meta,
    }


def _unflatten(desc: dict, arrays) -> FittedModel:
    params = {}
    for name, ref in desc["params"].items():
        if "model" in ref:
            params[name] = _unflatten(ref["model"], arrays)
        elif "models" in ref:
            params[name] = [_unflatten(m, arrays) for m in ref["models"]]
        else:
            params[name] = arrays[ref["array"]]
    mean, std = (float.fromhex(v) for v in desc["train_stats"])
    return FittedModel(desc["kind"], params, TrainStats(mean, std), tuple(desc["schema"]), desc["meta"])


def dumps(model: FittedModel) -> bytes:
    """Encode a model as an ``.npz`` archive with a JSON header entry."""
    arrays: dict[str, np.ndarray] = {}
    desc = _flatten(model, "", arrays)
    header = json.dumps({"format_version": FORMAT_VERSION, "model": desc}, sort_keys=True).encode()
    buf = io.BytesIO()
    np.savez(buf, __header__=np.frombuffer(header, dtype=np.uint8), **arrays)
    return buf.getvalue()


def loads(data: bytes) -> FittedModel:
    with np.load(io.BytesIO(data), allow_pickle=False) as npz:
        header = json.loads(npz["__header__"].tobytes().decode())
        if header.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported model format {header.get('format_version')}")
        arrays = {k: npz[k] for k in npz.files if k != "__header__"}
    return _unflatten(header["model"], arrays)
