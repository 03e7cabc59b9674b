from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import ads.evaluation as ev
from ads.errors import LengthMismatch, MissingAssetFiles, NoAnomaliesInTruth
from ads.evaluation import (
    TABLE_COLUMNS,
    BenchmarkSpec,
    BenchmarkWarning,
    EvalResult,
    best_f1_threshold_sweep,
    point_adjust,
    prf1,
    run_benchmark,
    table_csv,
)
from oracles import counts, exhaustive_best_f1, f1_of, f1_is_close, segment_scan_adjust

MINI = Path(ev.__file__).parent / "data" / "mini"


# --- point_adjust ----------------------------------------------------------


def test_segment_filled_from_single_hit():
    truth = [1, 1, -1, -1, -1, 1]
    pred = [1, 1, 1, -1, 1, 1]
    assert point_adjust(pred, truth).tolist() == [1, 1, -1, -1, -1, 1]


def test_false_positive_outside_segment_stays():
    truth = [1, 1, -1, -1, 1]
    pred = [-1, 1, 1, 1, 1]
    assert point_adjust(pred, truth).tolist() == pred


@pytest.mark.parametrize("seed", range(5))
def test_point_adjust_matches_segment_scan(seed):
    rng = np.random.default_rng(seed)
    truth = np.where(rng.random(30) < 0.35, -1, 1)
    pred = np.where(rng.random(30) < 0.2, -1, 1)
    assert point_adjust(pred, truth).tolist() == segment_scan_adjust(pred, truth)


pm1 = st.lists(st.sampled_from([-1, 1]), min_size=1, max_size=60)


@settings(max_examples=100, deadline=None)
@given(st.data())
def test_point_adjust_recall_and_false_positives(data):
    truth = data.draw(pm1)
    pred = data.draw(st.lists(st.sampled_from([-1, 1]), min_size=len(truth), max_size=len(truth)))
    before, after = prf1(pred, truth), prf1(point_adjust(pred, truth), truth)
    assert after.recall >= before.recall
    assert after.fp == before.fp


def test_length_mismatch():
    with pytest.raises(LengthMismatch):
        point_adjust([1, 1], [1])
    with pytest.raises(LengthMismatch):
        prf1([1], [1, -1])


# --- prf1 ------------------------------------------------------------------


def test_perfect_prediction():
    r = prf1([-1, 1, -1], [-1, 1, -1])
    assert (r.precision, r.recall, r.f1) == (1.0, 1.0, 1.0)


def test_nothing_flagged():
    r = prf1([1, 1, 1], [-1, 1, 1])
    assert r.recall == 0.0 and r.f1 == 0.0


def test_hand_counted_case():
    r = prf1([-1, 1, -1, 1], [-1, -1, 1, 1])
    assert (r.tp, r.fp, r.fn) == (1, 1, 1)
    assert r.precision == r.recall == r.f1 == 0.5


@settings(max_examples=100, deadline=None)
@given(st.data())
def test_prf1_permutation_symmetric(data):
    truth = data.draw(pm1)
    pred = data.draw(st.lists(st.sampled_from([-1, 1]), min_size=len(truth), max_size=len(truth)))
    perm = data.draw(st.permutations(range(len(truth))))
    a = prf1(pred, truth)
    b = prf1([pred[i] for i in perm], [truth[i] for i in perm])
    assert (a.tp, a.fp, a.fn, a.f1) == (b.tp, b.fp, b.fn, b.f1)
    assert (a.tp, a.fp, a.fn) == counts(pred, truth)


# --- threshold sweep -------------------------------------------------------


def test_separated_scores():
    raw = [0.1, 0.2, 5.0, 6.0, 0.3]
    thr, r = best_f1_threshold_sweep(raw, [1, 1, -1, -1, 1], adjust=False)
    assert r.f1 == 1.0
    assert 0.3 < thr < 5.0


def test_all_equal_scores_give_flag_everything_baseline():
    truth = np.array([1, -1, 1, 1, -1, 1, 1, 1])
    _, r = best_f1_threshold_sweep(np.full(8, 2.0), truth, adjust=False)
    positives = int((truth == -1).sum())
    precision = positives / len(truth)
    assert r.f1 == pytest.approx(2 * precision / (precision + 1), abs=1e-15)


@pytest.mark.parametrize("seed", range(8))
@pytest.mark.parametrize("adjust", [False, True])
def test_sweep_matches_exhaustive_enumeration(seed, adjust):
    rng = np.random.default_rng(seed)
    truth = np.where(rng.random(40) < 0.25, -1, 1)
    truth[rng.integers(40)] = -1
    raw = np.round(rng.normal(size=40) - 1.5 * (truth == -1), 1)  # rounding forces ties
    thr, r = best_f1_threshold_sweep(raw, truth, adjust=adjust)
    assert f1_is_close(r.f1, exhaustive_best_f1(raw, truth, adjust))
    pred = np.where(raw > thr, -1, 1)
    if adjust:
        pred = segment_scan_adjust(pred, truth)
    assert f1_is_close(f1_of(*counts(pred, truth)), r.f1)


def test_sweep_ignores_unscored_rows():
    raw = [np.nan, np.nan, 0.0, 9.0]
    _, r = best_f1_threshold_sweep(raw, [-1, -1, 1, -1], adjust=False)
    assert r.f1 == 1.0 and r.tp == 1


def test_sweep_needs_anomalies():
    with pytest.raises(NoAnomaliesInTruth):
        best_f1_threshold_sweep([0.0, 1.0], [1, 1])


# --- benchmark -------------------------------------------------------------


def write_asset(root: Path, dataset: str, name: str, train, test, labels):
    d = root / dataset / name
    d.mkdir(parents=True)
    for fname, X in (("train.csv", train), ("test.csv", test)):
        lines = ["a,b"] + [f"{r[0]!r},{r[1]!r}" for r in X.tolist()]
        (d / fname).write_text("\n".join(lines) + "\n")
    (d / "labels.csv").write_text("label\n" + "\n".join(str(int(v)) for v in labels) + "\n")


def test_dataset_score_is_mean_of_asset_scores(tmp_path, monkeypatch):
    rng = np.random.default_rng(0)
    for name in ("asset_a", "asset_b"):
        write_asset(tmp_path, "toy", name, rng.normal(size=(50, 2)), rng.normal(size=(20, 2)), [1] * 19 + [-1])
    fixed = {"asset_a": EvalResult.from_counts(4, 0, 0), "asset_b": EvalResult.from_counts(1, 1, 1)}
    monkeypatch.setattr(ev, "evaluate_asset", lambda asset, est, spec: fixed[asset.name])
    (row,) = run_benchmark(BenchmarkSpec(tmp_path, estimators=["Covariance"]))
    assert row.f1 == 0.75
    assert row.assets_evaluated == 2 and row.assets_skipped == 0


def test_separable_asset_scores_one(tmp_path):
    rng = np.random.default_rng(1)
    test = rng.normal(size=(60, 2))
    labels = np.ones(60, dtype=int)
    test[[20, 40]] = 25.0
    labels[[20, 40]] = -1
    write_asset(tmp_path, "toy", "asset_a", rng.normal(size=(200, 2)), test, labels)
    (row,) = run_benchmark(BenchmarkSpec(tmp_path, estimators=["Covariance"]))
    assert row.f1 == 1.0


def test_budget_overrun_skips_asset_with_warning():
    spec = BenchmarkSpec(MINI, estimators=["DNN_AutoEncoder"], assets=["asset_1"], evaluation_time=1e-6)
    with pytest.warns(BenchmarkWarning, match="BudgetExceeded"):
        (row,) = run_benchmark(spec)
    assert row.assets_evaluated == 0 and row.assets_skipped == 1
    assert np.isnan(row.f1)
    assert table_csv([row]).splitlines()[1] == "DNN_AutoEncoder,synthetic,,,,0,1"


def test_missing_asset_files_listed(tmp_path):
    (tmp_path / "toy" / "asset_a").mkdir(parents=True)
    (tmp_path / "toy" / "asset_a" / "train.csv").write_text("a\n1\n")
    with pytest.raises(MissingAssetFiles) as err:
        run_benchmark(BenchmarkSpec(tmp_path, estimators=["Covariance"]))
    missing = err.value.details["missing"]
    assert any(m.endswith("test.csv") for m in missing) and any(m.endswith("labels.csv") for m in missing)


def test_benchmark_deterministic_and_bounded():
    spec = BenchmarkSpec(MINI, estimators=["IsolationForest", "Covariance"], seed=3)
    first, second = run_benchmark(spec), run_benchmark(spec)
    assert table_csv(first) == table_csv(second)
    for row in first:
        values = [r.f1 for r in row.per_asset.values()]
        assert min(values) <= row.f1 <= max(values)


def test_table_columns():
    rows = run_benchmark(BenchmarkSpec(MINI, estimators=["Covariance"], assets=["asset_1"]))
    lines = table_csv(rows).splitlines()
    assert tuple(lines[0].split(",")) == TABLE_COLUMNS
    assert len(lines) == 2


def test_spec_validation():
    with pytest.raises(ValueError):
        BenchmarkSpec(MINI, evaluation_time=0)
    with pytest.raises(ValueError):
        BenchmarkSpec(MINI, estimators=["Prophet"])
    with pytest.raises(ValueError):
        BenchmarkSpec(MINI, evaluation_metrics=("auc",))
