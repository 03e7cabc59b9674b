"""Request schema for the five detection endpoints and its validation.

Argument names match the public service API verbatim. ``ADMISSIBLE`` is the
argument-by-endpoint matrix; everything else in this module fills defaults
and checks values.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

from ..detectors import ALGORITHM_OF, COMPATIBILITY, DEFAULTS, DetectorConfig
from ..scoring import LABELING_METHODS, LabelingSpec
from ..tsdata import DEFAULT_TIME_FORMAT, ColumnRoles, WindowSpec

ENDPOINTS = ("univariate", "multivariate", "semisupervised", "regression", "mixture")

_ALL = frozenset(ENDPOINTS)
_UNI_MULTI = frozenset({"univariate", "multivariate"})
_REG_MIX = frozenset({"regression", "mixture"})

ADMISSIBLE: dict[str, frozenset] = {
    "data_file": _ALL,
    "time_column": _ALL,
    "time_format": _ALL,
    "target_columns": _ALL,
    "label_column": frozenset({"semisupervised"}),
    "feature_columns": frozenset({"regression"}),
    "prediction_type": _UNI_MULTI,
    "recent_data": _UNI_MULTI,
    "algorithm_config": _ALL,
    "algorithm_type": _UNI_MULTI,
    "anomaly_estimator": _UNI_MULTI,
    "lookback_window": _UNI_MULTI,
    "observation_window": _UNI_MULTI,
    "labeling_method": _UNI_MULTI,
    "labeling_threshold": _UNI_MULTI,
    "train_val_test_column": frozenset({"semisupervised"}),
    "evaluation_metrics": _ALL,
    "evaluation_time": _ALL,
    "instance_size": _ALL,
    "unsupervised_fs": _ALL,
    "train_test_split": _REG_MIX,
    "train_cv_split": _REG_MIX,
}
ARGUMENTS = tuple(ADMISSIBLE)

# accepted spellings that normalize onto a documented argument
ALIASES = {"target_column": "target_columns"}
# service metadata outside the argument matrix, accepted on every endpoint
META_FIELDS = ("series_id",)

EVALUATION_METRICS = ("f1", "precision", "recall")
DEFAULT_ESTIMATOR = {"ReconstructAD": "DNN_AutoEncoder", "PredAD": "WindowedLinear", "RelationshipAD": "Covariance"}
CONFIG_KEYS = set(DEFAULTS) | {"variant"}
SECRET_KEYS = {"secret", "secret_key", "password", "api_key", "access_key", "token"}


@dataclass(frozen=True)
class InstanceSize:
    label: str
    max_seconds: float
    max_rows: int
    max_columns: int
    max_bytes: int


INSTANCE_SIZES = {
    "S": InstanceSize("S", 600, 50_000, 50, 64 * 2**20),
    "M": InstanceSize("M", 3600, 500_000, 200, 512 * 2**20),
    "L": InstanceSize("L", 7200, 5_000_000, 500, 4 * 2**30),
}
DEFAULT_INSTANCE = "M"


@dataclass(frozen=True)
class ObjectLocator:
    bucket: str
    key: str
    endpoint: str | None = None
    credentials: str | None = None

    def to_dict(self) -> dict:
        d = {"bucket": self.bucket, "key": self.key}
        if self.endpoint:
            d["endpoint"] = self.endpoint
        if self.credentials:
            d["credentials"] = self.credentials
        return d


@dataclass(frozen=True)
class DetectionRequest:
    endpoint: str
    data_file: Any
    roles: ColumnRoles
    detector: DetectorConfig
    window: WindowSpec
    labeling: LabelingSpec
    prediction_type: str = "batch"
    recent_data: str | None = None
    evaluation_metrics: tuple = EVALUATION_METRICS
    evaluation_time: float | None = None
    instance_size: InstanceSize = INSTANCE_SIZES[DEFAULT_INSTANCE]
    unsupervised_fs: bool = False
    train_test_split: float | None = None
    train_cv_split: int | None = None
    series_id: str | None = None
    body: dict = field(default_factory=dict, compare=False)

    @property
    def seed(self) -> int:
        return self.detector.seed


def _is_str_list(v) -> bool:
    return isinstance(v, list) and all(isinstance(x, str) and x for x in v)


def _as_columns(v):
    if isinstance(v, str) and v:
        return [c.strip() for c in v.split(",") if c.strip()]
    return v


def _positive_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool) and v >= 1


def _number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def validate_request(endpoint: str, body: dict) -> tuple[DetectionRequest | None, list[str]]:
    """Check a request body against ``endpoint``; return ``(request, [])`` or ``(None, violations)``.

    Every problem is collected; validation never stops at the first one.
    """
    violations: list[str] = []
    if endpoint not in ENDPOINTS:
        return None, [f"unknown endpoint {endpoint!r}; expected one of {', '.join(ENDPOINTS)}"]
    if not isinstance(body, dict):
        return None, ["request body must be an object"]

    args: dict[str, Any] = {}
    for key, value in body.items():
        name = ALIASES.get(key, key)
        if name in META_FIELDS:
            continue
        if name not in ADMISSIBLE:
            violations.append(f"{key} is not a recognised argument")
        elif endpoint not in ADMISSIBLE[name]:
            violations.append(f"{key} not accepted by the {endpoint} endpoint")
        elif name in args:
            violations.append(f"{name} given more than once")
        else:
            args[name] = value

    for name in ("data_file", "time_column", "target_columns"):
        if args.get(name) in (None, "", []):
            violations.append(f"{name} is required for the {endpoint} endpoint")

    # -- data arguments --
    data_file = args.get("data_file")
    locator = None
    if isinstance(data_file, dict):
        unknown = set(data_file) - {"bucket", "key", "endpoint", "credentials"}
        if unknown & SECRET_KEYS or (unknown and any(k.lower() in SECRET_KEYS for k in unknown)):
            violations.append("data_file must reference credentials by name, not include secrets")
        elif unknown:
            violations.append(f"data_file has unknown fields {sorted(unknown)}")
        if not isinstance(data_file.get("bucket"), str) or not isinstance(data_file.get("key"), str):
            violations.append("data_file locator needs string bucket and key")
        elif not isinstance(data_file.get("credentials", ""), str):
            violations.append("data_file credentials must be a reference name")
        else:
            locator = ObjectLocator(data_file["bucket"], data_file["key"], data_file.get("endpoint"), data_file.get("credentials"))
    elif data_file is not None and not isinstance(data_file, str):
        violations.append("data_file must be inline CSV text or an object-store locator")

    time_column = args.get("time_column")
    if time_column is not None and not (isinstance(time_column, str) and time_column):
        violations.append("time_column must be a column name")
    time_format = args.get("time_format", DEFAULT_TIME_FORMAT)
    if not (isinstance(time_format, str) and time_format):
        violations.append("time_format must be a non-empty pattern")

    targets = _as_columns(args.get("target_columns"))
    if targets not in (None, "", []):
        if not _is_str_list(targets):
            violations.append("target_columns must be a list of column names")
            targets = None
        elif len(set(targets)) != len(targets):
            violations.append("target_columns contains duplicates")
    if _is_str_list(targets):
        if endpoint in ("univariate", "regression") and len(targets) != 1:
            violations.append(f"the {endpoint} endpoint needs exactly one target column")
        if endpoint == "multivariate" and len(targets) < 2:
            violations.append("the multivariate endpoint needs at least two target columns")

    features = _as_columns(args.get("feature_columns"))
    if endpoint == "regression":
        if features in (None, "", []):
            violations.append("feature_columns is required for the regression endpoint")
            features = None
        elif not _is_str_list(features):
            violations.append("feature_columns must be a list of column names")
            features = None
        elif _is_str_list(targets) and set(features) & set(targets):
            violations.append("feature_columns and target_columns must not overlap")

    label_column = args.get("label_column")
    split_column = args.get("train_val_test_column")
    if endpoint == "semisupervised":
        if not (isinstance(label_column, str) and label_column):
            violations.append("label_column is required for the semisupervised endpoint")
        if not (isinstance(split_column, str) and split_column):
            violations.append("train_val_test_column is required for the semisupervised endpoint")

    # -- scenario --
    prediction_type = args.get("prediction_type", "batch")
    recent = args.get("recent_data")
    if prediction_type not in ("batch", "stream"):
        violations.append("prediction_type must be 'batch' or 'stream'")
    elif prediction_type == "stream" and not (isinstance(recent, str) and recent):
        violations.append("prediction_type=stream requires recent_data")
    elif prediction_type == "batch" and recent is not None:
        violations.append("recent_data is only used with prediction_type=stream")

    # -- algorithm --
    config = args.get("algorithm_config", {})
    if not isinstance(config, dict):
        violations.append("algorithm_config must be an object")
        config = {}
    else:
        unknown = sorted(set(config) - CONFIG_KEYS)
        if unknown:
            violations.append(f"algorithm_config has unknown keys {unknown}")
        if "random_seed" in config and not isinstance(config["random_seed"], int):
            violations.append("algorithm_config.random_seed must be an integer")
        if "variant" in config and config["variant"] not in ("L0", "L1"):
            violations.append("algorithm_config.variant must be 'L0' or 'L1'")
    if args.get("train_cv_split") is not None:
        if not (_positive_int(args["train_cv_split"]) and args["train_cv_split"] >= 2):
            violations.append("train_cv_split must be an integer >= 2")
        else:
            config = {**config, "cv_folds": args["train_cv_split"]}

    detector = None
    algo = args.get("algorithm_type")
    est = args.get("anomaly_estimator")
    if endpoint in ("univariate", "multivariate"):
        if algo is not None and algo not in COMPATIBILITY:
            violations.append(f"algorithm_type must be one of {', '.join(COMPATIBILITY)}")
        elif est is not None and est not in ALGORITHM_OF:
            violations.append(f"anomaly_estimator must be one of {', '.join(ALGORITHM_OF)}")
        elif algo is not None and est is not None and est not in COMPATIBILITY[algo]:
            violations.append(f"anomaly_estimator {est} is not compatible with algorithm_type {algo}")
        else:
            algo = algo or (ALGORITHM_OF[est] if est else "ReconstructAD")
            detector = DetectorConfig(algo, est or DEFAULT_ESTIMATOR[algo], dict(config))
    elif endpoint == "mixture":
        detector = DetectorConfig.for_estimator(f"GMM_{config.get('variant', 'L1') if config.get('variant') in ('L0', 'L1') else 'L1'}", **config)
    else:
        detector = DetectorConfig("RelationshipAD", "Covariance", dict(config))

    lookback = args.get("lookback_window", WindowSpec().lookback_window)
    observation = args.get("observation_window", WindowSpec().observation_window)
    window = None
    if not _positive_int(lookback):
        violations.append("lookback_window must be a positive integer")
    if not _positive_int(observation):
        violations.append("observation_window must be a positive integer")
    if _positive_int(lookback) and _positive_int(observation):
        window = WindowSpec(lookback, observation)

    # -- output --
    if endpoint == "mixture":
        default_labeling = ("std_multiple", 3.0)
    else:
        default_labeling = ("pvalue_threshold", 0.01)
    method = args.get("labeling_method", default_labeling[0])
    threshold = args.get("labeling_threshold", default_labeling[1] if "labeling_method" not in args else None)
    labeling = None
    if method not in LABELING_METHODS:
        violations.append(f"labeling_method must be one of {', '.join(LABELING_METHODS)}")
    elif threshold is None:
        threshold = {"pvalue_threshold": 0.01, "contamination_quantile": 0.01, "std_multiple": 3.0}[method]
    if method in LABELING_METHODS:
        if not _number(threshold):
            violations.append("labeling_threshold must be a number")
        else:
            try:
                labeling = LabelingSpec(method, float(threshold))
            except Exception as exc:
                violations.append(f"labeling_threshold: {exc}")

    # -- evaluation settings --
    metrics = args.get("evaluation_metrics", list(EVALUATION_METRICS))
    if isinstance(metrics, str):
        metrics = [m.strip() for m in metrics.split(",") if m.strip()]
    if not _is_str_list(metrics) or not metrics or any(m not in EVALUATION_METRICS for m in metrics):
        violations.append(f"evaluation_metrics must be a non-empty subset of {', '.join(EVALUATION_METRICS)}")
    evaluation_time = args.get("evaluation_time")
    if evaluation_time is not None and not (_number(evaluation_time) and evaluation_time > 0):
        violations.append("evaluation_time must be a positive number of seconds")
    size = args.get("instance_size", DEFAULT_INSTANCE)
    if size not in INSTANCE_SIZES:
        violations.append(f"instance_size must be one of {', '.join(INSTANCE_SIZES)}")
    fs = args.get("unsupervised_fs", False)
    if not isinstance(fs, bool):
        violations.append("unsupervised_fs must be true or false")
    split = args.get("train_test_split")
    if split is not None and not (_number(split) and 0 < split <= 1):
        violations.append("train_test_split must lie in (0, 1]")

    series_id = body.get("series_id")
    if series_id is not None and not isinstance(series_id, str):
        violations.append("series_id must be a string")

    roles = None
    if not violations:
        try:
            roles = ColumnRoles(
                time_column=time_column,
                target_columns=list(targets),
                time_format=time_format,
                feature_columns=list(features) if features else None,
                label_column=label_column,
                split_column=split_column,
            )
        except ValueError as exc:
            violations.append(str(exc))
    if violations:
        return None, violations

    return (
        DetectionRequest(
            endpoint=endpoint,
            data_file=locator if locator is not None else data_file,
            roles=roles,
            detector=detector,
            window=window,
            labeling=labeling,
            prediction_type=prediction_type,
            recent_data=recent,
            evaluation_metrics=tuple(metrics),
            evaluation_time=float(evaluation_time) if evaluation_time is not None else None,
            instance_size=INSTANCE_SIZES[size],
            unsupervised_fs=fs,
            train_test_split=float(split) if split is not None else None,
            train_cv_split=args.get("train_cv_split"),
            series_id=series_id,
            body=dict(body),
        ),
        [],
    )
