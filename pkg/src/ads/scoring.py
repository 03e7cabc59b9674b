"""Turn raw detector scores into p-values, +1/-1 labels and metric attributions."""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from .detectors import FittedModel, TrainStats
from .detectors import score as score_model
from .errors import (
    InsufficientRecentData,
    ModelNotFitted,
    NonFiniteScore,
    SpecMismatch,
    TooFewNormalRows,
)
from .tsdata import MetricFrame, NormStats, WindowSpec, apply_normalization, iso_time

NORMAL, ANOMALY, UNSCORED = 1, -1, 0
LABELING_METHODS = ("pvalue_threshold", "contamination_quantile", "std_multiple")
PCA_VARIANCE = 0.90


class DegenerateStats(UserWarning):
    """Training scores have zero spread, so every p-value is 1."""


@dataclass(frozen=True)
class LabelingSpec:
    labeling_method: str = "pvalue_threshold"
    labeling_threshold: float = 0.01

    def __post_init__(self):
        m, t = self.labeling_method, float(self.labeling_threshold)
        if m not in LABELING_METHODS:
            raise SpecMismatch(f"labeling_method must be one of {LABELING_METHODS}, got {m!r}")
        if m in ("pvalue_threshold", "contamination_quantile") and not 0 < t < 1:
            raise SpecMismatch(f"{m} needs a threshold in (0, 1), got {t}")
        if m == "std_multiple" and not t > 0:
            raise SpecMismatch(f"std_multiple needs a positive threshold, got {t}")


@dataclass
class ScoreSeries:
    timestamps: np.ndarray
    raw: np.ndarray
    p_value: np.ndarray
    label: np.ndarray
    attribution: dict[int, list[tuple[str, float]]] = field(default_factory=dict)
    extra: dict[str, np.ndarray] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.raw)

    @property
    def anomalies(self) -> np.ndarray:
        return np.flatnonzero(self.label == ANOMALY)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["timestamp", "raw", "p_value", "label", *self.extra])
        for i in range(len(self)):
            row = [iso_time(self.timestamps[i]), _num(self.raw[i]), _num(self.p_value[i]), _label(self.label[i])]
            row += [str(int(v[i])) if v.dtype.kind in "iu" else _num(v[i]) for v in self.extra.values()]
            w.writerow(row)
        return buf.getvalue()

    def attribution_json(self) -> str:
        records = [
            {
                "row": int(i),
                "timestamp": iso_time(self.timestamps[i]),
                "contributions": [{"column": c, "weight": w} for c, w in self.attribution[i]],
            }
            for i in sorted(self.attribution)
        ]
        return json.dumps(records, indent=1) + "\n"


def _num(x) -> str:
    x = float(x)
    return "" if math.isnan(x) else repr(x)


def _label(v) -> str:
    return {NORMAL: "1", ANOMALY: "-1"}.get(int(v), "")


def read_scores_csv(text: str) -> ScoreSeries:
    """Inverse of :meth:`ScoreSeries.to_csv` (attribution not included)."""
    rows = list(csv.reader(io.StringIO(text)))
    header, body = rows[0], rows[1:]
    extras = header[4:]

    def f(s):
        return float(s) if s else np.nan

    ts = []
    for r in body:
        dt = datetime.strptime(r[0], "%Y-%m-%dT%H:%M:%S.%fZ").replace(tzinfo=timezone.utc)
        ts.append(int(round(dt.timestamp() * 1000)))
    return ScoreSeries(
        timestamps=np.array(ts, dtype=np.int64),
        raw=np.array([f(r[1]) for r in body]),
        p_value=np.array([f(r[2]) for r in body]),
        label=np.array([int(r[3]) if r[3] else UNSCORED for r in body], dtype=np.int8),
        extra={name: np.array([f(r[4 + j]) for r in body]) for j, name in enumerate(extras)},
    )


# ---------------------------------------------------------------------------
# p-values
# ---------------------------------------------------------------------------


def chi2_sf_1dof(q: float) -> float:
    """Upper tail of the chi-square(1) law: ``P(X > q) = erfc(sqrt(q / 2))``."""
    return math.erfc(math.sqrt(q / 2.0))


def chi_square_pvalues(raw: np.ndarray, stats: TrainStats) -> np.ndarray:
    """One-sided p-value of each raw score against the training score distribution.

    The score is standardized with the training mean and std and its square
    is referred to chi-square with one degree of freedom. Scores at or below
    the mean get p = 1; unscored rows (NaN) stay NaN.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if np.any(np.isinf(raw)):
        raise NonFiniteScore("raw scores contain infinities")
    p = np.where(np.isnan(raw), np.nan, 1.0)
    if not stats.std > 0:
        warnings.warn(DegenerateStats("training score std is zero; all p-values set to 1"), stacklevel=2)
        return p
    z = (raw - stats.mean) / stats.std
    for i in np.flatnonzero(z > 0):
        p[i] = chi2_sf_1dof(z[i] * z[i])
    return p


# ---------------------------------------------------------------------------
# labelling
# ---------------------------------------------------------------------------


def apply_labeling(
    raw: np.ndarray,
    spec: LabelingSpec,
    p_value: np.ndarray | None = None,
    stats: TrainStats | None = None,
) -> np.ndarray:
    """Return int8 labels: 1 normal, -1 anomalous, 0 unscored."""
    raw = np.asarray(raw, dtype=np.float64)
    scored = ~np.isnan(raw)
    labels = np.where(scored, NORMAL, UNSCORED).astype(np.int8)
    method, thr = spec.labeling_method, float(spec.labeling_threshold)
    if method == "pvalue_threshold":
        if p_value is None:
            raise SpecMismatch("pvalue_threshold labelling needs p-values")
        p = np.asarray(p_value, dtype=np.float64)
        labels[scored & (p < thr)] = ANOMALY
    elif method == "contamination_quantile":
        idx = np.flatnonzero(scored)
        m = math.ceil(thr * len(idx))
        # highest score first; equal scores resolve to the earlier row
        order = idx[np.lexsort((idx, -raw[idx]))]
        labels[order[:m]] = ANOMALY
    else:
        st = stats or TrainStats.of(raw)
        labels[scored & (raw > st.mean + thr * st.std)] = ANOMALY
    return labels


# ---------------------------------------------------------------------------
# PCA attribution
# ---------------------------------------------------------------------------


def pca_attribution(
    frame: MetricFrame,
    anomalous_rows,
    normal_rows=None,
    model: FittedModel | None = None,
    variance: float = PCA_VARIANCE,
    reference: np.ndarray | None = None,
) -> dict[int, list[tuple[str, float]]]:
    """Rank each anomalous row's columns by their share of its deviation from normal.

    PCA is fit on the normal rows and the leading components explaining
    ``variance`` of the total are kept. A row's deviation is whitened inside
    that subspace and scaled by the residual spread outside it; each
    column's squared component of the result, normalized to sum to one, is
    its contribution. ``reference`` supplies the normal rows directly (same
    column order as ``frame``) in place of ``normal_rows``.
    """
    names = frame.names
    if model is not None:
        model.check_schema(names)
    if len(names) < 2:
        raise SpecMismatch("attribution needs at least two target columns")
    X = frame.values()
    anomalous = np.asarray(sorted(int(i) for i in anomalous_rows), dtype=int)
    if reference is not None:
        normal = np.asarray(reference, dtype=np.float64)
    elif normal_rows is None:
        mask = np.ones(len(frame), dtype=bool)
        mask[anomalous] = False
        normal = X[mask]
    else:
        normal = X[np.asarray(normal_rows)]
    d = X.shape[1]
    if normal.shape[0] < d + 1:
        raise TooFewNormalRows(f"need at least {d + 1} normal rows for PCA, got {normal.shape[0]}")

    mu = normal.mean(axis=0)
    centered = normal - mu
    eigval, eigvec = np.linalg.eigh(centered.T @ centered / normal.shape[0])
    eigval, eigvec = np.clip(eigval[::-1], 0.0, None), eigvec[:, ::-1]
    total = eigval.sum()
    k = d if total <= 0 else int(np.searchsorted(np.cumsum(eigval) / total, variance - 1e-12) + 1)
    k = min(k, d)
    P = eigvec[:, :k]
    floor = max(1e-12, 1e-12 * total)
    lam = np.maximum(eigval[:k], floor)
    resid_var = max(float(eigval[k:].mean()), floor) if k < d else floor

    out = {}
    for i in anomalous:
        delta = X[i] - mu
        t = P.T @ delta
        v = P @ (t / np.sqrt(lam)) + (delta - P @ t) / math.sqrt(resid_var)
        sq = v * v
        total_sq = sq.sum()
        w = np.full(d, 1.0 / d) if total_sq <= 0 else sq / total_sq
        order = np.lexsort((np.arange(d), -w))
        out[int(i)] = [(names[j], float(w[j])) for j in order]
    return out


# ---------------------------------------------------------------------------
# stream scoring
# ---------------------------------------------------------------------------


def build_series(
    timestamps: np.ndarray,
    raw: np.ndarray,
    stats: TrainStats,
    labeling: LabelingSpec,
) -> ScoreSeries:
    p = chi_square_pvalues(raw, stats)
    labels = apply_labeling(raw, labeling, p, stats)
    return ScoreSeries(np.asarray(timestamps), np.asarray(raw, dtype=np.float64), p, labels)


def stream_score(
    model: FittedModel | None,
    norm_stats: NormStats,
    recent: MetricFrame,
    spec: WindowSpec,
    labeling: LabelingSpec,
) -> ScoreSeries:
    """Score only the last ``observation_window`` rows of ``recent`` with frozen state."""
    if model is None:
        raise ModelNotFitted("stream scoring needs a model fit on history")
    need = spec.observation_window + model.lookback
    if len(recent) < need:
        raise InsufficientRecentData(f"recent data has {len(recent)} rows, need {need}")
    model.check_schema(recent.names)
    norm = apply_normalization(recent, norm_stats)
    tail = norm.take(slice(len(norm) - need, len(norm)))
    raw = score_model(model, tail.values())[model.lookback :]
    ts = tail.timestamps[model.lookback :]
    return build_series(ts, raw, model.train_stats, labeling)
