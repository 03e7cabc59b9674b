"""End-to-end detection for one validated request.

The CLI ``detect`` command and the job service both call :func:`run_detection`,
so a request run either way produces the same files.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import detectors
from .detectors import NO_DEADLINE, Deadline, FittedModel, identify_mode
from .errors import AllColumnsDropped, LimitExceeded, SpecMismatch, TooFewNormalRows
from .evaluation import point_adjust, prf1
from .scoring import (
    ANOMALY,
    NORMAL,
    ScoreSeries,
    build_series,
    chi_square_pvalues,
    pca_attribution,
    stream_score,
)
from .service.schema import DetectionRequest
from .tsdata import (
    ColumnRoles,
    MetricFrame,
    apply_normalization,
    iso_time,
    parse_csv,
    read_header,
    split_by_column,
    unsupervised_feature_select,
    zscore_normalize,
)

RESULT_FILES = ("scores.csv", "attribution.json", "summary.json")
TOP_ATTRIBUTIONS = 3


@dataclass
class DetectionResult:
    series: ScoreSeries
    summary: dict
    model: FittedModel
    # unnormalized values of the scored rows, for plotting
    frame: MetricFrame
    columns: list[str] = field(default_factory=list)

    def files(self) -> dict[str, str]:
        return {
            "scores.csv": self.series.to_csv(),
            "attribution.json": self.series.attribution_json(),
            "summary.json": json.dumps(self.summary, indent=1, sort_keys=True) + "\n",
        }

    def write(self, out_dir) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {}
        for name, text in self.files().items():
            paths[name] = out / name
            paths[name].write_text(text, encoding="utf-8")
        paths["model.npz"] = out / "model.npz"
        paths["model.npz"].write_bytes(detectors.dumps(self.model))
        return paths

    def plot_rows(self) -> list[tuple[str, str, float, str]]:
        """Long-format ``(timestamp, column, value, label)`` rows for external plotting."""
        rows = []
        for i, ts in enumerate(self.series.timestamps):
            lab = int(self.series.label[i])
            lab_text = "" if lab not in (NORMAL, ANOMALY) else str(lab)
            for c in self.columns:
                rows.append((iso_time(ts), c, float(self.frame.columns[c][i]), lab_text))
        return rows


# ---------------------------------------------------------------------------
# ingestion
# ---------------------------------------------------------------------------


def _as_bytes(payload) -> bytes:
    return payload.encode("utf-8") if isinstance(payload, str) else bytes(payload)


def load_frame(payload, roles: ColumnRoles, request: DetectionRequest) -> MetricFrame:
    """Parse ``payload`` after checking it against the request's instance-size caps."""
    size = request.instance_size
    raw = _as_bytes(payload)
    if len(raw) > size.max_bytes:
        raise LimitExceeded(f"input is {len(raw)} bytes; instance size {size.label} allows {size.max_bytes}")
    n_cols = len(roles.numeric_columns)
    if n_cols > size.max_columns:
        raise LimitExceeded(f"{n_cols} columns requested; instance size {size.label} allows {size.max_columns}")
    read_header(raw)
    n_lines = sum(1 for line in raw.splitlines()[1:] if line.strip())
    if n_lines > size.max_rows:
        raise LimitExceeded(f"input has {n_lines} rows; instance size {size.label} allows {size.max_rows}")
    return parse_csv(raw, roles)


def _select_columns(frame: MetricFrame, columns: list[str], enabled: bool) -> tuple[list[str], list[str]]:
    if not enabled or len(columns) < 2:
        return list(columns), []
    kept = unsupervised_feature_select(frame, columns)
    if not kept:
        raise AllColumnsDropped("feature selection dropped every column")
    return kept, [c for c in columns if c not in kept]


def _fit_rows(n: int, fraction: float | None) -> int:
    if fraction is None:
        return n
    return max(1, int(math.floor(fraction * n)))


# ---------------------------------------------------------------------------
# per-endpoint runners
# ---------------------------------------------------------------------------


def _attribute(series: ScoreSeries, norm: MetricFrame, reference=None) -> str | None:
    rows = series.anomalies
    if len(rows) == 0 or len(norm.names) < 2:
        return None
    try:
        series.attribution = pca_attribution(norm, rows, reference=reference)
    except TooFewNormalRows as exc:
        return str(exc)
    return None


def _unsupervised(req, frame, recent_payload, deadline):
    cols, dropped = _select_columns(frame, req.roles.target_columns, req.unsupervised_fs)
    history = frame.select(cols)
    norm, stats = zscore_normalize(history)
    deadline.check()
    model, train_scores = detectors.fit_score(norm.values(), cols, req.detector, req.window, deadline)
    deadline.check()
    if req.prediction_type == "stream":
        recent = load_frame(recent_payload, req.roles, req).select(cols)
        series = stream_score(model, stats, recent, req.window, req.labeling)
        shown = recent.take(slice(len(recent) - len(series), len(recent)))
        note = None
        if req.endpoint == "multivariate":
            note = _attribute(series, apply_normalization(shown, stats), reference=norm.values())
    else:
        series = build_series(norm.timestamps, train_scores, model.train_stats, req.labeling)
        shown = history
        note = _attribute(series, norm) if req.endpoint == "multivariate" else None
    return series, model, shown, cols, dropped, {"attribution_note": note} if note else {}


def _semisupervised(req, frame, deadline):
    cols, dropped = _select_columns(frame, req.roles.target_columns, req.unsupervised_fs)
    data = frame.select(cols)
    split_by_column(data)  # rejects unknown tags before anything is fit
    norm, _ = zscore_normalize(data, data.splits == "train")
    train, val, test = split_by_column(norm)
    model = detectors.fit_semisupervised(train, val, req.detector, deadline)
    deadline.check()
    raw = detectors.score(model, norm.values())
    thr = model.meta["threshold"]
    p = chi_square_pvalues(raw, model.train_stats)
    labels = np.where(raw >= thr, ANOMALY, NORMAL).astype(np.int8)
    series = ScoreSeries(norm.timestamps, raw, p, labels)

    extra = {"selected_threshold": thr, "validation_f1": model.meta["val_f1"]}
    test_rows = np.flatnonzero(norm.splits == "test")
    if len(test_rows) and np.any(norm.labels[test_rows] == ANOMALY):
        truth = norm.labels[test_rows]
        pred = labels[test_rows]
        point = prf1(pred, truth)
        adjusted = prf1(point_adjust(pred, truth), truth)
        extra["test_evaluation"] = {
            "point": {m: getattr(point, m) for m in req.evaluation_metrics},
            "point_adjusted": {m: getattr(adjusted, m) for m in req.evaluation_metrics},
        }
    return series, model, data, cols, dropped, extra


def _regression(req, frame, deadline):
    target = req.roles.target_columns[0]
    features, dropped = _select_columns(frame, req.roles.feature_columns, req.unsupervised_fs)
    cols = features + [target]
    data = frame.select(cols)
    n_train = _fit_rows(len(data), req.train_test_split)
    norm, _ = zscore_normalize(data, slice(0, n_train))
    roles = ColumnRoles(req.roles.time_column, [target], req.roles.time_format, features)
    deadline.check()
    model = detectors.fit_regression_ad(norm, roles, req.detector, req.train_test_split)
    raw = detectors.score(model, norm.values(cols))
    series = build_series(norm.timestamps, raw, model.train_stats, req.labeling)
    return series, model, data, cols, dropped, {"n_train": n_train}


def _mixture(req, frame, deadline):
    cols, dropped = _select_columns(frame, req.roles.target_columns, req.unsupervised_fs)
    data = frame.select(cols)
    n_train = _fit_rows(len(data), req.train_test_split)
    norm, _ = zscore_normalize(data, slice(0, n_train))
    X = norm.values()
    model = detectors.fit(X[:n_train], cols, req.detector, deadline=deadline)
    deadline.check()
    raw = detectors.score(model, X)
    series = build_series(norm.timestamps, raw, model.train_stats, req.labeling)
    mode, resp, _ = identify_mode(model, X)
    series.extra = {"mode": mode.astype(np.int64), "responsibility": resp}
    return series, model, data, cols, dropped, {"n_train": n_train, "n_components": model.meta["n_components"]}


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _model_summary(model: FittedModel) -> dict:
    out = {"kind": model.kind}
    meta = model.meta
    for key in ("estimator", "selected", "n_components", "threshold", "val_f1"):
        if key in meta:
            out[key] = meta[key]
    if model.kind == "SemiSupervised":
        out["candidates"] = meta["candidates"]
    return out


def run_detection(
    request: DetectionRequest,
    data,
    recent=None,
    deadline: Deadline = NO_DEADLINE,
) -> DetectionResult:
    """Run the full detect pipeline for ``request`` on the CSV bytes ``data``.

    ``recent`` carries the recent-data CSV for stream requests. Results
    depend only on the inputs and the configured seed.
    """
    frame = load_frame(data, request.roles, request)
    deadline.check()
    endpoint = request.endpoint
    if endpoint in ("univariate", "multivariate"):
        if request.prediction_type == "stream" and recent is None:
            raise SpecMismatch("stream prediction needs recent data")
        series, model, shown, cols, dropped, extra = _unsupervised(request, frame, recent, deadline)
    elif endpoint == "semisupervised":
        series, model, shown, cols, dropped, extra = _semisupervised(request, frame, deadline)
    elif endpoint == "regression":
        series, model, shown, cols, dropped, extra = _regression(request, frame, deadline)
    else:
        series, model, shown, cols, dropped, extra = _mixture(request, frame, deadline)

    anomalies = series.anomalies
    top = []
    for i in sorted(series.attribution):
        for col, w in series.attribution[i][:TOP_ATTRIBUTIONS]:
            top.append({"timestamp": iso_time(series.timestamps[i]), "column": col, "weight": w})
    labeling = request.labeling
    summary = {
        "endpoint": endpoint,
        "series_id": request.series_id,
        "prediction_type": request.prediction_type if endpoint in ("univariate", "multivariate") else "batch",
        "columns": cols,
        "dropped_columns": dropped,
        "rows_scored": int(np.sum(series.label != 0)),
        "anomaly_count": int(len(anomalies)),
        "anomalies": [iso_time(series.timestamps[i]) for i in anomalies],
        "labeling": {"method": labeling.labeling_method, "threshold": labeling.labeling_threshold}
        if endpoint != "semisupervised"
        else {"method": "selected_threshold", "threshold": model.meta["threshold"]},
        "model": _model_summary(model),
        "train_stats": {"mean": model.train_stats.mean, "std": model.train_stats.std},
        "seed": request.seed,
        "top_attributions": top,
        **extra,
    }
    return DetectionResult(series, summary, model, shown, cols)
