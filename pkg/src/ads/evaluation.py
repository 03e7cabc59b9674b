"""Point-adjusted precision/recall/F1 and the per-asset benchmark harness.

Labels follow the service convention: ``-1`` marks an anomaly (the positive
class) and ``+1`` a normal row.
"""

from __future__ import annotations

import csv
import io
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .detectors import ESTIMATORS, Deadline, DetectorConfig, fit_score
from .detectors import score as score_model
from .errors import (
    ADSError,
    BudgetExceeded,
    DeadlineExceeded,
    LengthMismatch,
    MissingAssetFiles,
    NoAnomaliesInTruth,
)
from .tsdata import ColumnRoles, WindowSpec, apply_normalization, parse_csv, read_header, zscore_normalize

ASSET_FILES = ("train.csv", "test.csv", "labels.csv")
TABLE_COLUMNS = ("estimator", "dataset", "f1", "precision", "recall", "assets_evaluated", "assets_skipped")

# Average F1 per dataset as published for the hosted service; None = not reported.
PUBLISHED_F1 = {
    "DAEMON": {"SMD": 0.963, "SMAP": 0.91, "MSL": 0.953},
    "DNN_AutoEncoder": {"SMD": 0.862, "SMAP": 0.647, "MSL": 0.829},
    "IsolationForest": {"SMD": 0.865, "SMAP": 0.715, "MSL": 0.809},
    "AnomalyEnsembler": {"SMD": 0.876, "SMAP": 0.715, "MSL": 0.817},
    "NearestNeighbor": {"SMD": 0.812, "SMAP": 0.713, "MSL": 0.650},
    "WindowedLinear": {"SMD": 0.903, "SMAP": 0.851, "MSL": 0.934},
    "GMM_L1": {"SMD": 0.947, "SMAP": None, "MSL": 0.957},
    "GMM_L0": {"SMD": 0.956, "SMAP": 0.985, "MSL": 0.956},
    "Covariance": {"SMD": 0.741, "SMAP": 0.589, "MSL": 0.682},
}


class BenchmarkWarning(UserWarning):
    pass


@dataclass
class EvalResult:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    per_asset: dict[str, "EvalResult"] | None = None

    @classmethod
    def from_counts(cls, tp: int, fp: int, fn: int) -> "EvalResult":
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * p * r / (p + r) if p + r else 0.0
        return cls(p, r, f1, int(tp), int(fp), int(fn))


def _pm1(a) -> np.ndarray:
    return np.asarray(a).astype(np.int64)


def truth_segments(truth) -> list[tuple[int, int]]:
    """Half-open ``[start, end)`` ranges of consecutive ``-1`` rows."""
    anomalous = np.concatenate([[False], _pm1(truth) == -1, [False]])
    edges = np.flatnonzero(np.diff(anomalous.astype(np.int8)))
    return list(zip(edges[::2].tolist(), edges[1::2].tolist()))


def point_adjust(pred, truth) -> np.ndarray:
    """Mark a whole true anomaly segment as detected if any of its rows is flagged."""
    pred, truth = _pm1(pred), _pm1(truth)
    if pred.shape != truth.shape:
        raise LengthMismatch(f"pred has {len(pred)} rows, truth has {len(truth)}")
    out = pred.copy()
    for start, end in truth_segments(truth):
        if np.any(pred[start:end] == -1):
            out[start:end] = -1
    return out


def prf1(pred, truth) -> EvalResult:
    pred, truth = _pm1(pred), _pm1(truth)
    if pred.shape != truth.shape:
        raise LengthMismatch(f"pred has {len(pred)} rows, truth has {len(truth)}")
    p, t = pred == -1, truth == -1
    return EvalResult.from_counts(int(np.sum(p & t)), int(np.sum(p & ~t)), int(np.sum(~p & t)))


def best_f1_threshold_sweep(raw, truth, adjust: bool = True) -> tuple[float, EvalResult]:
    """Best F1 over thresholds for the rule "anomalous iff score > threshold".

    Candidates are the midpoints between consecutive distinct scores plus
    one threshold below the minimum (everything flagged). Unscored (NaN)
    rows are ignored. Ties go to the higher threshold.
    """
    raw = np.asarray(raw, dtype=np.float64)
    truth = _pm1(truth)
    if raw.shape != truth.shape:
        raise LengthMismatch(f"scores have {len(raw)} rows, truth has {len(truth)}")
    keep = ~np.isnan(raw)
    raw, truth = raw[keep], truth[keep]
    if not np.any(truth == -1):
        raise NoAnomaliesInTruth("ground truth contains no anomalies")
    positive = truth == -1
    effective = raw.copy()
    if adjust:
        for start, end in truth_segments(truth):
            effective[start:end] = raw[start:end].max()
    distinct = np.unique(raw)
    thresholds = np.concatenate([[distinct[0] - 1.0], (distinct[:-1] + distinct[1:]) / 2.0])
    pos_sorted = np.sort(effective[positive])
    neg_sorted = np.sort(raw[~positive])
    tp = len(pos_sorted) - np.searchsorted(pos_sorted, thresholds, side="right")
    fp = len(neg_sorted) - np.searchsorted(neg_sorted, thresholds, side="right")
    fn = len(pos_sorted) - tp
    f1 = np.where(tp > 0, 2.0 * tp / np.maximum(2.0 * tp + fp + fn, 1), 0.0)
    best = int(np.flatnonzero(f1 == f1.max())[-1])
    return float(thresholds[best]), EvalResult.from_counts(int(tp[best]), int(fp[best]), int(fn[best]))


# ---------------------------------------------------------------------------
# benchmark
# ---------------------------------------------------------------------------


@dataclass
class BenchmarkSpec:
    root: Path
    estimators: list[str] = field(default_factory=lambda: list(ESTIMATORS))
    datasets: list[str] | None = None
    assets: list[str] | None = None
    evaluation_metrics: tuple[str, ...] = ("f1", "precision", "recall")
    evaluation_time: float = 7200.0
    seed: int = 42
    lookback_window: int = 8
    algorithm_config: dict = field(default_factory=dict)
    jobs: int = 1

    def __post_init__(self):
        self.root = Path(self.root)
        if not self.evaluation_time > 0:
            raise ValueError("evaluation_time must be positive")
        unknown = [e for e in self.estimators if e not in ESTIMATORS]
        if unknown:
            raise ValueError(f"unknown estimators {unknown}; valid names: {', '.join(ESTIMATORS)}")
        bad = [m for m in self.evaluation_metrics if m not in ("f1", "precision", "recall")]
        if bad:
            raise ValueError(f"unknown evaluation metrics {bad}")


@dataclass
class BenchmarkRow:
    estimator: str
    dataset: str
    f1: float
    precision: float
    recall: float
    assets_evaluated: int
    assets_skipped: int
    per_asset: dict[str, EvalResult] = field(default_factory=dict)
    skipped: dict[str, str] = field(default_factory=dict)


def discover(spec: BenchmarkSpec) -> dict[str, list[Path]]:
    """Map dataset name to its asset directories; raises if any asset is incomplete."""
    if not spec.root.is_dir():
        raise MissingAssetFiles(f"dataset root {spec.root} does not exist", missing=[str(spec.root)])
    datasets = spec.datasets or sorted(p.name for p in spec.root.iterdir() if p.is_dir())
    layout, missing = {}, []
    for ds in datasets:
        ds_dir = spec.root / ds
        if not ds_dir.is_dir():
            missing.append(str(ds_dir))
            continue
        names = spec.assets or sorted(p.name for p in ds_dir.iterdir() if p.is_dir())
        assets = []
        for name in names:
            asset = ds_dir / name
            for f in ASSET_FILES:
                if not (asset / f).is_file():
                    missing.append(str(asset / f))
            assets.append(asset)
        layout[ds] = assets
    if missing:
        raise MissingAssetFiles("missing benchmark files: " + ", ".join(missing), missing=missing)
    return layout


def load_asset(asset: Path):
    """Read one asset's train/test frames and the test ground truth (+1/-1)."""
    header = read_header((asset / "train.csv").read_bytes())
    if "timestamp" in header:
        time_col, cols, fmt = "timestamp", [h for h in header if h != "timestamp"], "epoch_ms"
    else:
        time_col, cols, fmt = None, header, None

    def read(path: Path):
        raw = path.read_text()
        if time_col is None:
            lines = raw.splitlines()
            raw = "\n".join(["__row__," + lines[0]] + [f"{i},{line}" for i, line in enumerate(lines[1:]) if line.strip()])
            roles = ColumnRoles("__row__", cols, "epoch_ms")
        else:
            roles = ColumnRoles(time_col, cols, fmt)
        return parse_csv(raw, roles)

    train, test = read(asset / "train.csv"), read(asset / "test.csv")
    lab_text = (asset / "labels.csv").read_text().split()
    labels = np.array([int(v) for v in lab_text[1:]] if lab_text and lab_text[0] == "label" else [int(v) for v in lab_text])
    if len(labels) != len(test):
        raise LengthMismatch(f"{asset}: labels has {len(labels)} rows, test has {len(test)}")
    if not np.all(np.isin(labels, (-1, 1))):
        raise ValueError(f"{asset}: labels must be +1/-1")
    return train, test, labels


def evaluate_asset(asset: Path, estimator: str, spec: BenchmarkSpec) -> EvalResult:
    train, test, truth = load_asset(asset)
    train_n, stats = zscore_normalize(train)
    test_n = apply_normalization(test, stats)
    cfg = DetectorConfig.for_estimator(estimator, **{**spec.algorithm_config, "random_seed": spec.seed})
    window = WindowSpec(spec.lookback_window, 1)
    started = time.monotonic()
    deadline = Deadline(spec.evaluation_time)
    try:
        model, _ = fit_score(train_n.values(), train_n.names, cfg, window, deadline)
        context = min(model.lookback, len(train_n))
        X = np.vstack([train_n.values()[len(train_n) - context :], test_n.values()])
        scores = score_model(model, X)[context:]
    except DeadlineExceeded:
        raise BudgetExceeded(f"{asset.name} exceeded evaluation_time {spec.evaluation_time}s") from None
    if time.monotonic() - started > spec.evaluation_time:
        raise BudgetExceeded(f"{asset.name} exceeded evaluation_time {spec.evaluation_time}s")
    _, result = best_f1_threshold_sweep(scores, truth, adjust=True)
    return result


def _mean(values) -> float:
    return float(np.mean(values)) if values else float("nan")


def run_benchmark(spec: BenchmarkSpec) -> list[BenchmarkRow]:
    layout = discover(spec)
    tasks = [(est, ds, asset) for est in spec.estimators for ds in sorted(layout) for asset in layout[ds]]

    def run(task):
        est, ds, asset = task
        try:
            return task, evaluate_asset(asset, est, spec), None
        except (ADSError, ValueError, np.linalg.LinAlgError) as exc:
            return task, None, f"{type(exc).__name__}: {exc}"

    if spec.jobs > 1:
        with ThreadPoolExecutor(max_workers=spec.jobs) as pool:
            outcomes = list(pool.map(run, tasks))
    else:
        outcomes = [run(t) for t in tasks]

    rows = []
    for est in spec.estimators:
        for ds in sorted(layout):
            per_asset, skipped = {}, {}
            for (e, d, asset), result, error in outcomes:
                if (e, d) != (est, ds):
                    continue
                if error is None:
                    per_asset[asset.name] = result
                else:
                    skipped[asset.name] = error
                    warnings.warn(BenchmarkWarning(f"{est}/{ds}/{asset.name} skipped: {error}"), stacklevel=2)
            per_asset = dict(sorted(per_asset.items()))
            rows.append(
                BenchmarkRow(
                    estimator=est,
                    dataset=ds,
                    f1=_mean([r.f1 for r in per_asset.values()]),
                    precision=_mean([r.precision for r in per_asset.values()]),
                    recall=_mean([r.recall for r in per_asset.values()]),
                    assets_evaluated=len(per_asset),
                    assets_skipped=len(skipped),
                    per_asset=per_asset,
                    skipped=dict(sorted(skipped.items())),
                )
            )
    return rows


def _fmt(x: float) -> str:
    return "" if x != x else f"{x:.6f}"


def _short(x: float) -> str:
    return "NA" if x != x else f"{x:.3f}"


def table_csv(rows: list[BenchmarkRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TABLE_COLUMNS)
    for r in rows:
        w.writerow([r.estimator, r.dataset, _fmt(r.f1), _fmt(r.precision), _fmt(r.recall), r.assets_evaluated, r.assets_skipped])
    return buf.getvalue()


def table_text(rows: list[BenchmarkRow], metrics=("f1", "precision", "recall"), reference: bool = False) -> str:
    """Aligned text table, one line per (estimator, dataset)."""
    header = ["estimator", "dataset", *metrics, "evaluated", "skipped"]
    if reference:
        header.append("published_f1")
    body = []
    for r in rows:
        line = [r.estimator, r.dataset, *[_short(getattr(r, m)) for m in metrics], str(r.assets_evaluated), str(r.assets_skipped)]
        if reference:
            pub = PUBLISHED_F1.get(r.estimator, {}).get(r.dataset)
            line.append("NA" if pub is None else f"{pub:.3f}")
        body.append(line)
    widths = [max(len(str(c)) for c in col) for col in zip(header, *body)]
    fmt = "  ".join(f"{{:<{w}}}" for w in widths)
    return "\n".join(fmt.format(*line).rstrip() for line in [header, *body]) + "\n"
