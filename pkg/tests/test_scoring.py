import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ads.detectors import DetectorConfig, TrainStats, fit_score
from ads.errors import InsufficientRecentData, ModelNotFitted, NonFiniteScore, SpecMismatch, TooFewNormalRows
from ads.scoring import (
    DegenerateStats,
    LabelingSpec,
    ScoreSeries,
    apply_labeling,
    build_series,
    chi2_sf_1dof,
    chi_square_pvalues,
    pca_attribution,
    read_scores_csv,
    stream_score,
)
from ads.tsdata import MetricFrame, WindowSpec, zscore_normalize
from oracles import normal_two_sided_tail
from synth import timestamps

UNIT = TrainStats(0.0, 1.0)


def frame_of(X, names=None):
    X = np.asarray(X, dtype=float)
    names = names or [f"c{j}" for j in range(X.shape[1])]
    return MetricFrame(timestamps(len(X)), {n: X[:, j] for j, n in enumerate(names)})


# --- p-values --------------------------------------------------------------


def test_pvalue_at_mean_is_one():
    assert chi_square_pvalues(np.array([3.0]), TrainStats(3.0, 2.0))[0] == 1.0


def test_pvalue_at_196_sigma():
    stats = TrainStats(10.0, 2.0)
    p = chi_square_pvalues(np.array([10 + 1.95996 * 2]), stats)[0]
    assert p == pytest.approx(0.0500, abs=1e-4)
    assert p == pytest.approx(normal_two_sided_tail(1.95996**2), abs=1e-12)


def test_pvalue_at_one_sigma():
    p = chi_square_pvalues(np.array([1.0]), UNIT)[0]
    assert p == pytest.approx(0.3173, abs=1e-4)


@pytest.mark.parametrize("q", [0.01, 1.0, 3.8415, 4.0, 9.0])
def test_chi_square_normal_tail_identity(q):
    assert abs(chi2_sf_1dof(q) - normal_two_sided_tail(q)) < 1e-9


def test_below_mean_is_one_sided():
    p = chi_square_pvalues(np.array([-5.0, 0.0, 5.0]), UNIT)
    assert p[0] == 1.0 and p[1] == 1.0 and p[2] < 1e-6


def test_unscored_rows_stay_nan():
    p = chi_square_pvalues(np.array([np.nan, 2.0]), UNIT)
    assert math.isnan(p[0]) and 0 < p[1] < 1


def test_degenerate_stats_warn():
    with pytest.warns(DegenerateStats):
        p = chi_square_pvalues(np.array([1.0, 9.0]), TrainStats(1.0, 0.0))
    assert p.tolist() == [1.0, 1.0]


def test_infinite_score_rejected():
    with pytest.raises(NonFiniteScore):
        chi_square_pvalues(np.array([np.inf]), UNIT)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0, 40, allow_nan=False), min_size=2, max_size=30))
def test_pvalues_monotone_above_mean(xs):
    raw = np.sort(np.array(xs))
    p = chi_square_pvalues(raw, UNIT)
    assert np.all((p >= 0) & (p <= 1))
    assert np.all(np.diff(p) <= 0)


# --- labelling -------------------------------------------------------------


def test_pvalue_threshold_labels():
    labels = apply_labeling(np.zeros(3), LabelingSpec("pvalue_threshold", 0.01), p_value=np.array([1, 0.5, 0.001]))
    assert labels.tolist() == [1, 1, -1]


def test_contamination_count():
    raw = np.random.default_rng(0).normal(size=20)
    labels = apply_labeling(raw, LabelingSpec("contamination_quantile", 0.1))
    assert (labels == -1).sum() == 2
    assert set(np.flatnonzero(labels == -1)) == set(np.argsort(-raw)[:2])


def test_contamination_ties_prefer_earlier_rows():
    raw = np.array([1.0, 5.0, 5.0, 5.0, 0.0])
    labels = apply_labeling(raw, LabelingSpec("contamination_quantile", 0.4))
    assert labels.tolist() == [1, -1, -1, 1, 1]


@settings(max_examples=60, deadline=None)
@given(st.lists(st.sampled_from([0.0, 1.0, 2.0, np.nan]), min_size=1, max_size=40), st.floats(0.01, 0.99))
def test_contamination_counts_scored_rows(raw, thr):
    raw = np.array(raw)
    labels = apply_labeling(raw, LabelingSpec("contamination_quantile", thr))
    scored = int((~np.isnan(raw)).sum())
    assert (labels == -1).sum() == math.ceil(thr * scored)
    assert np.all(labels[np.isnan(raw)] == 0)


def test_std_multiple_tail_rate():
    raw = np.random.default_rng(42).normal(size=10_000)
    labels = apply_labeling(raw, LabelingSpec("std_multiple", 3.0), stats=TrainStats(0.0, 1.0))
    assert abs((labels == -1).mean() - 0.00135) < 0.001


def test_std_multiple_uses_given_stats():
    labels = apply_labeling(np.array([1.0, 1.9, 4.0]), LabelingSpec("std_multiple", 2.0), stats=TrainStats(0.0, 1.0))
    assert labels.tolist() == [1, 1, -1]


def test_unscored_rows_stay_unscored():
    raw = np.array([np.nan, 0.1, 9.0])
    p = chi_square_pvalues(raw, UNIT)
    labels = apply_labeling(raw, LabelingSpec(), p_value=p)
    assert labels.tolist() == [0, 1, -1]


@pytest.mark.parametrize(
    "method, thr",
    [("pvalue_threshold", 0.0), ("pvalue_threshold", 1.0), ("contamination_quantile", 1.5), ("std_multiple", 0.0), ("vote", 0.5)],
)
def test_labeling_spec_bounds(method, thr):
    with pytest.raises(SpecMismatch):
        LabelingSpec(method, thr)


def test_pvalue_labeling_needs_pvalues():
    with pytest.raises(SpecMismatch):
        apply_labeling(np.zeros(2), LabelingSpec())


# --- attribution -----------------------------------------------------------


def test_single_varying_column_dominates():
    rng = np.random.default_rng(1)
    X = np.column_stack([rng.normal(size=200), 1e-3 * rng.normal(size=200)])
    X = np.vstack([X, [[6.0, 0.0]]])
    out = pca_attribution(frame_of(X, ["A", "B"]), [200])
    (first, w), _ = out[200]
    assert first == "A" and w > 0.9


def test_symmetric_displacement_splits_evenly():
    # normal rows: +-1 on each axis independently, so the covariance is exactly I
    base = np.array([[a, b] for a in (-1.0, 1.0) for b in (-1.0, 1.0)] * 10)
    X = np.vstack([base, [[4.0, 4.0]]])
    out = pca_attribution(frame_of(X), [len(base)])
    weights = dict(out[len(base)])
    assert weights["c0"] == pytest.approx(0.5, abs=1e-6)
    assert weights["c1"] == pytest.approx(0.5, abs=1e-6)


def test_contributions_are_probability_vectors():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(300, 4)) @ rng.normal(size=(4, 4))
    rows = rng.choice(300, size=5, replace=False)
    X[rows] += rng.normal(scale=8, size=(5, 4))
    out = pca_attribution(frame_of(X), rows)
    assert sorted(out) == sorted(int(r) for r in rows)
    for ranked in out.values():
        w = np.array([v for _, v in ranked])
        assert abs(w.sum() - 1) < 1e-9 and np.all(w >= 0)
        assert np.all(np.diff(w) <= 0)


def test_attribution_needs_normal_rows_and_two_columns():
    with pytest.raises(TooFewNormalRows):
        pca_attribution(frame_of(np.zeros((3, 3))), [0])
    with pytest.raises(SpecMismatch):
        pca_attribution(frame_of(np.zeros((10, 1))), [0])


# --- stream scoring --------------------------------------------------------


def history_model(seed=0, n=500):
    rng = np.random.default_rng(seed)
    hist = frame_of(rng.normal(size=(n, 2)), ["a", "b"])
    norm, stats = zscore_normalize(hist)
    model, _ = fit_score(norm.values(), norm.names, DetectorConfig.for_estimator("Covariance"))
    return model, stats


def test_clean_recent_data_is_rarely_flagged():
    model, stats = history_model()
    spec, labeling = WindowSpec(8, 10), LabelingSpec("pvalue_threshold", 0.001)
    clean = 0
    for trial in range(100):
        recent = frame_of(np.random.default_rng(1000 + trial).normal(size=(10, 2)), ["a", "b"])
        out = stream_score(model, stats, recent, spec, labeling)
        clean += int(not np.any(out.label == -1))
    assert clean >= 95


def test_spike_in_recent_data_is_flagged():
    model, stats = history_model()
    X = np.random.default_rng(7).normal(size=(20, 2))
    X[15] = [10.0, -10.0]
    out = stream_score(model, stats, frame_of(X, ["a", "b"]), WindowSpec(8, 10), LabelingSpec("pvalue_threshold", 0.001))
    assert len(out) == 10
    assert out.label[5] == -1
    assert out.timestamps[5] == timestamps(20)[15]


def test_recent_data_too_short():
    model, stats = history_model()
    with pytest.raises(InsufficientRecentData):
        stream_score(model, stats, frame_of(np.zeros((4, 2)), ["a", "b"]), WindowSpec(8, 5), LabelingSpec())


def test_stream_needs_model():
    with pytest.raises(ModelNotFitted):
        stream_score(None, None, frame_of(np.zeros((4, 2))), WindowSpec(8, 1), LabelingSpec())


def test_windowed_stream_uses_lookback_context():
    x = np.sin(np.arange(300) / 5.0)
    hist = frame_of(x[:200, None], ["a"])
    norm, stats = zscore_normalize(hist)
    model, _ = fit_score(norm.values(), ["a"], DetectorConfig.for_estimator("WindowedLinear"), WindowSpec(4))
    out = stream_score(model, stats, frame_of(x[200:220, None], ["a"]), WindowSpec(4, 6), LabelingSpec())
    assert len(out) == 6 and not np.isnan(out.raw).any()
    with pytest.raises(InsufficientRecentData):
        stream_score(model, stats, frame_of(x[200:209, None], ["a"]), WindowSpec(4, 6), LabelingSpec())


# --- serialization ---------------------------------------------------------


def test_scores_csv_round_trip():
    raw = np.array([np.nan, 0.5, 4.0])
    s = build_series(timestamps(3), raw, UNIT, LabelingSpec())
    s.extra["mode"] = np.array([0, 1, 1])
    text = s.to_csv()
    assert text.splitlines()[0] == "timestamp,raw,p_value,label,mode"
    assert text.splitlines()[1] == "2024-01-01T00:00:00.000Z,,,,0"
    back = read_scores_csv(text)
    assert np.array_equal(back.raw, raw, equal_nan=True)
    assert back.label.tolist() == s.label.tolist()
    assert back.timestamps.tolist() == s.timestamps.tolist()


def test_attribution_json_records():
    s = ScoreSeries(timestamps(2), np.zeros(2), np.ones(2), np.array([1, -1]), {1: [("a", 0.75), ("b", 0.25)]})
    text = s.attribution_json()
    assert '"column": "a"' in text and '"row": 1' in text


def test_no_warning_on_normal_path():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        build_series(timestamps(2), np.array([0.0, 1.0]), UNIT, LabelingSpec())
