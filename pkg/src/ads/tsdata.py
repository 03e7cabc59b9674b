"""Time-series ingestion and preprocessing.

A :class:`MetricFrame` is the in-memory form of one uploaded ``data_file``:
epoch-millisecond timestamps, named numeric columns, and optional label and
train/val/test split columns.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import IO, Iterable, Sequence

import numpy as np

from .errors import (
    BadLabel,
    DuplicateTimestamp,
    EmptyFitRange,
    MissingColumn,
    NonNumericValue,
    SeriesTooShort,
    TimeParseError,
    UnknownSplitValue,
)

EPS = 1e-12
SPLIT_VALUES = ("train", "val", "test")
DEFAULT_TIME_FORMAT = "%Y-%m-%d %H:%M:%S"
_LABELS = {"1": 1, "+1": 1, "-1": -1}


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class MetricFrame:
    timestamps: np.ndarray
    columns: dict[str, np.ndarray]
    label_column: str | None = None
    labels: np.ndarray | None = None
    split_column: str | None = None
    splits: np.ndarray | None = None

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=np.int64)
        n = len(ts)
        if n > 1 and not np.all(np.diff(ts) > 0):
            raise ValueError("timestamps must strictly increase")
        cols = {}
        for name, values in self.columns.items():
            v = np.asarray(values, dtype=np.float64)
            if v.shape != (n,):
                raise ValueError(f"column {name!r} has length {len(v)}, expected {n}")
            cols[str(name)] = _frozen(v)
        object.__setattr__(self, "timestamps", _frozen(ts))
        object.__setattr__(self, "columns", cols)
        if self.labels is not None:
            lab = np.asarray(self.labels, dtype=np.int8)
            if lab.shape != (n,) or not np.all(np.isin(lab, (-1, 1))):
                raise ValueError("labels must be +1/-1 and aligned with timestamps")
            object.__setattr__(self, "labels", _frozen(lab))
        if self.splits is not None:
            sp = np.asarray(self.splits, dtype=object)
            if sp.shape != (n,):
                raise ValueError("split column misaligned")
            object.__setattr__(self, "splits", _frozen(sp))

    def __len__(self) -> int:
        return len(self.timestamps)

    @property
    def names(self) -> list[str]:
        return list(self.columns)

    def values(self, names: Sequence[str] | None = None) -> np.ndarray:
        """Return an ``(n_rows, n_columns)`` float array in the requested order."""
        names = self.names if names is None else list(names)
        for nm in names:
            if nm not in self.columns:
                raise MissingColumn(nm)
        if not names:
            return np.empty((len(self), 0))
        return np.column_stack([self.columns[nm] for nm in names])

    def take(self, rows) -> "MetricFrame":
        idx = np.arange(len(self))[rows] if isinstance(rows, slice) else np.asarray(rows)
        return MetricFrame(
            timestamps=self.timestamps[idx],
            columns={k: v[idx] for k, v in self.columns.items()},
            label_column=self.label_column,
            labels=None if self.labels is None else self.labels[idx],
            split_column=self.split_column,
            splits=None if self.splits is None else self.splits[idx],
        )

    def select(self, names: Sequence[str]) -> "MetricFrame":
        """Keep only ``names`` (in that order) among the numeric columns."""
        return MetricFrame(
            timestamps=self.timestamps,
            columns={nm: self.values([nm])[:, 0] for nm in names},
            label_column=self.label_column,
            labels=self.labels,
            split_column=self.split_column,
            splits=self.splits,
        )

    def replace_columns(self, columns: dict[str, np.ndarray]) -> "MetricFrame":
        return MetricFrame(
            timestamps=self.timestamps,
            columns=columns,
            label_column=self.label_column,
            labels=self.labels,
            split_column=self.split_column,
            splits=self.splits,
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, MetricFrame):
            return NotImplemented
        if self.names != other.names or not np.array_equal(self.timestamps, other.timestamps):
            return False
        if any(not np.array_equal(self.columns[k], other.columns[k]) for k in self.names):
            return False
        if (self.label_column, self.split_column) != (other.label_column, other.split_column):
            return False
        for a, b in ((self.labels, other.labels), (self.splits, other.splits)):
            if (a is None) != (b is None) or (a is not None and not np.array_equal(a, b)):
                return False
        return True

    __hash__ = None


@dataclass(frozen=True)
class ColumnRoles:
    time_column: str
    target_columns: list[str]
    time_format: str = DEFAULT_TIME_FORMAT
    feature_columns: list[str] | None = None
    label_column: str | None = None
    split_column: str | None = None

    def __post_init__(self):
        if not self.target_columns:
            raise ValueError("target_columns must be non-empty")
        if self.feature_columns and set(self.feature_columns) & set(self.target_columns):
            raise ValueError("feature_columns and target_columns overlap")

    @property
    def numeric_columns(self) -> list[str]:
        return list(self.target_columns) + list(self.feature_columns or [])


@dataclass(frozen=True)
class WindowSpec:
    lookback_window: int = 8
    observation_window: int = 10

    def __post_init__(self):
        if int(self.lookback_window) < 1 or int(self.observation_window) < 1:
            raise ValueError("lookback_window and observation_window must be >= 1")


# ---------------------------------------------------------------------------
# timestamps
# ---------------------------------------------------------------------------


def parse_time(value: str, fmt: str) -> int:
    """Parse one timestamp cell into epoch milliseconds (naive times are UTC)."""
    value = value.strip()
    if fmt == "epoch_ms":
        return int(value)
    if fmt == "epoch_s":
        return int(round(float(value) * 1000))
    dt = datetime.strptime(value, fmt)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    delta = dt - datetime(1970, 1, 1, tzinfo=timezone.utc)
    return (delta.days * 86_400 + delta.seconds) * 1000 + delta.microseconds // 1000


def format_time(ms: int, fmt: str) -> str:
    ms = int(ms)
    if fmt == "epoch_ms":
        return str(ms)
    if fmt == "epoch_s":
        return repr(ms / 1000) if ms % 1000 else str(ms // 1000)
    dt = datetime.fromtimestamp(ms / 1000, tz=timezone.utc)
    return dt.strftime(fmt)


def iso_time(ms: int) -> str:
    dt = datetime.fromtimestamp(int(ms) // 1000, tz=timezone.utc)
    return dt.strftime("%Y-%m-%dT%H:%M:%S") + f".{int(ms) % 1000:03d}Z"


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------


def _as_text(raw) -> str:
    if isinstance(raw, (bytes, bytearray)):
        return raw.decode("utf-8-sig")
    if isinstance(raw, str):
        return raw
    data = raw.read()
    return data.decode("utf-8-sig") if isinstance(data, bytes) else data


def read_header(raw) -> list[str]:
    reader = csv.reader(io.StringIO(_as_text(raw)))
    return [h.strip() for h in next(reader, [])]


def parse_csv(raw: bytes | str | IO, roles: ColumnRoles) -> MetricFrame:
    """Parse delimited text into a :class:`MetricFrame`, sorting rows by time.

    Row numbers in errors are 1-based data rows (the header is row 0).
    """
    reader = csv.reader(io.StringIO(_as_text(raw)))
    header = [h.strip() for h in next(reader, [])]
    pos = {name: i for i, name in enumerate(header)}
    wanted = [roles.time_column, *roles.numeric_columns]
    wanted += [c for c in (roles.label_column, roles.split_column) if c]
    for name in wanted:
        if name not in pos:
            raise MissingColumn(name)

    numeric = roles.numeric_columns
    ts, vals, labels, splits = [], [], [], []
    for rownum, row in enumerate(reader, start=1):
        if not row or all(not c.strip() for c in row):
            continue
        try:
            cell = row[pos[roles.time_column]]
            ts.append(parse_time(cell, roles.time_format))
        except (ValueError, IndexError, OverflowError):
            raise TimeParseError(rownum, row[pos[roles.time_column]] if len(row) > pos[roles.time_column] else "",
                                 roles.time_format) from None
        out = []
        for name in numeric:
            text = row[pos[name]].strip() if len(row) > pos[name] else ""
            try:
                x = float(text)
            except ValueError:
                raise NonNumericValue(rownum, name, text) from None
            if not math.isfinite(x):
                raise NonNumericValue(rownum, name, text)
            out.append(x)
        vals.append(out)
        if roles.label_column:
            text = row[pos[roles.label_column]].strip()
            if text not in _LABELS:
                raise BadLabel(f"row {rownum}: label {text!r} not in 1/+1/-1", row=rownum)
            labels.append(_LABELS[text])
        if roles.split_column:
            splits.append(row[pos[roles.split_column]].strip())

    ts_arr = np.asarray(ts, dtype=np.int64)
    order = np.argsort(ts_arr, kind="stable")
    sorted_ts = ts_arr[order]
    if len(sorted_ts) > 1:
        dup = np.flatnonzero(np.diff(sorted_ts) == 0)
        if len(dup):
            raise DuplicateTimestamp(int(order[dup[0] + 1]) + 1)
    mat = np.asarray(vals, dtype=np.float64).reshape(len(ts), len(numeric))[order]
    return MetricFrame(
        timestamps=sorted_ts,
        columns={name: mat[:, j] for j, name in enumerate(numeric)},
        label_column=roles.label_column,
        labels=np.asarray(labels, dtype=np.int8)[order] if roles.label_column else None,
        split_column=roles.split_column,
        splits=np.asarray(splits, dtype=object)[order] if roles.split_column else None,
    )


def to_csv(frame: MetricFrame, time_column: str = "timestamp", time_format: str = "epoch_ms") -> str:
    """Serialize a frame so that :func:`parse_csv` reproduces it exactly."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = [time_column, *frame.names]
    if frame.label_column:
        header.append(frame.label_column)
    if frame.split_column:
        header.append(frame.split_column)
    w.writerow(header)
    for i in range(len(frame)):
        row = [format_time(frame.timestamps[i], time_format)]
        row += [repr(float(frame.columns[nm][i])) for nm in frame.names]
        if frame.label_column:
            row.append("1" if frame.labels[i] == 1 else "-1")
        if frame.split_column:
            row.append(frame.splits[i])
        w.writerow(row)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# normalization
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NormStats:
    mean: dict[str, float]
    std: dict[str, float]

    def to_dict(self) -> dict:
        return {"mean": dict(self.mean), "std": dict(self.std)}

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        return cls({k: float(v) for k, v in d["mean"].items()}, {k: float(v) for k, v in d["std"].items()})


def zscore_normalize(frame: MetricFrame, fit_rows=None) -> tuple[MetricFrame, NormStats]:
    """Standardize every numeric column with moments estimated on ``fit_rows``.

    ``fit_rows`` is anything that indexes a 1-D array (slice, range, index
    array, boolean mask); ``None`` means the whole frame.
    """
    idx = np.arange(len(frame))
    if fit_rows is not None:
        idx = idx[fit_rows] if isinstance(fit_rows, (slice, np.ndarray)) else np.asarray(list(fit_rows), dtype=int)
    if len(idx) == 0:
        raise EmptyFitRange("fit_rows selects no rows")
    mean, std = {}, {}
    for name, v in frame.columns.items():
        sub = v[idx]
        mean[name] = float(sub.mean())
        std[name] = float(sub.std())
    stats = NormStats(mean, std)
    return apply_normalization(frame, stats), stats


def apply_normalization(frame: MetricFrame, stats: NormStats) -> MetricFrame:
    cols = {}
    for name, v in frame.columns.items():
        if name not in stats.mean:
            raise MissingColumn(name)
        cols[name] = (v - stats.mean[name]) / max(stats.std[name], EPS)
    return frame.replace_columns(cols)


def inverse_normalization(frame: MetricFrame, stats: NormStats) -> MetricFrame:
    return frame.replace_columns(
        {name: v * max(stats.std[name], EPS) + stats.mean[name] for name, v in frame.columns.items()}
    )


# ---------------------------------------------------------------------------
# windows, feature selection, splits
# ---------------------------------------------------------------------------


def make_windows(frame: MetricFrame | np.ndarray, spec: WindowSpec) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(inputs, targets)`` with shapes ``(m, L, d)`` and ``(m, d)``.

    Pair ``i`` uses rows ``[i, i+L)`` as input and row ``i+L`` as target, so
    ``m = len(frame) - L``.
    """
    X = frame.values() if isinstance(frame, MetricFrame) else np.asarray(frame, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    L = int(spec.lookback_window)
    n = X.shape[0]
    if n <= L:
        raise SeriesTooShort(f"series length {n} must exceed lookback_window {L}")
    windows = np.lib.stride_tricks.sliding_window_view(X, L, axis=0)[: n - L]
    # sliding_window_view puts the window axis last: (m, d, L) -> (m, L, d)
    return np.ascontiguousarray(windows.transpose(0, 2, 1)), X[L:].copy()


def unsupervised_feature_select(frame: MetricFrame, columns: Iterable[str], corr_threshold: float = 0.99) -> list[str]:
    """Drop constant columns, then any column highly correlated with an earlier one."""
    columns = list(columns)
    X = frame.values(columns)
    varying = [j for j in range(len(columns)) if np.ptp(X[:, j]) > 0 and X[:, j].std() > EPS]
    if not varying:
        return []
    sub = X[:, varying]
    centered = sub - sub.mean(axis=0)
    scale = np.sqrt((centered**2).sum(axis=0))
    corr = (centered.T @ centered) / np.outer(scale, scale)
    keep = []
    for a in range(len(varying)):
        if not any(abs(corr[b, a]) > corr_threshold for b in range(a)):
            keep.append(columns[varying[a]])
    return keep


def split_by_column(frame: MetricFrame) -> tuple[MetricFrame, MetricFrame, MetricFrame]:
    if frame.splits is None:
        raise MissingColumn(frame.split_column or "train_val_test_column")
    for i, tag in enumerate(frame.splits):
        if tag not in SPLIT_VALUES:
            raise UnknownSplitValue(i + 1, str(tag))
    return tuple(frame.take(np.flatnonzero(frame.splits == tag)) for tag in SPLIT_VALUES)
