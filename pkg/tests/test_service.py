import json
import threading
import time

import httpx
import numpy as np
import pytest
from fastapi.testclient import TestClient

from ads.errors import (
    AuthFailed,
    CapacityExceeded,
    NetworkError,
    NoResults,
    NotFound,
    NotReady,
    ObjectNotFound,
    TooLarge,
    ValidationFailed,
)
from ads.service.app import create_app
from ads.service.jobs import CANCELLED, EXPIRED, FAILED, QUEUED, RUNNING, SUCCEEDED, JobManager
from ads.service.objstore import fetch_object
from ads.service.schema import ENDPOINTS, INSTANCE_SIZES, ObjectLocator, validate_request
from synth import csv_text, spike_series, timestamps

# Admissibility typed in by hand from the published argument matrix, columns in
# the order univariate, multivariate, semisupervised, regression, mixture.
ARGUMENT_MATRIX = """
data_file              x x x x x
time_column            x x x x x
time_format            x x x x x
target_columns         x x x x x
label_column           . . x . .
feature_columns        . . . x .
prediction_type        x x . . .
recent_data            x x . . .
algorithm_config       x x x x x
algorithm_type         x x . . .
anomaly_estimator      x x . . .
lookback_window        x x . . .
observation_window     x x . . .
labeling_method        x x . . .
labeling_threshold     x x . . .
train_val_test_column  . . x . .
evaluation_metrics     x x x x x
evaluation_time        x x x x x
instance_size          x x x x x
unsupervised_fs        x x x x x
train_test_split       . . . x x
train_cv_split         . . . x x
"""
EXPECTED = {
    line.split()[0]: {ep for ep, mark in zip(ENDPOINTS, line.split()[1:]) if mark == "x"}
    for line in ARGUMENT_MATRIX.strip().splitlines()
}

TINY_CSV = "timestamp,a,b,c,y,s\n" + "".join(f"{i},{i % 7},{i % 5},{i % 3},1,train\n" for i in range(30))

BASE = {
    "univariate": {"target_columns": ["a"]},
    "multivariate": {"target_columns": ["a", "b"]},
    "semisupervised": {"target_columns": ["a", "b"], "label_column": "y", "train_val_test_column": "s"},
    "regression": {"target_columns": ["a"], "feature_columns": ["b"]},
    "mixture": {"target_columns": ["a", "b"]},
}

SAMPLE = {
    "data_file": TINY_CSV,
    "time_column": "timestamp",
    "time_format": "epoch_ms",
    "label_column": "y",
    "feature_columns": ["c"],
    "prediction_type": "batch",
    "recent_data": TINY_CSV,
    "algorithm_config": {"random_seed": 1},
    "algorithm_type": "ReconstructAD",
    "anomaly_estimator": "DNN_AutoEncoder",
    "lookback_window": 8,
    "observation_window": 1,
    "labeling_method": "pvalue_threshold",
    "labeling_threshold": 0.01,
    "train_val_test_column": "s",
    "evaluation_metrics": ["f1"],
    "evaluation_time": 60,
    "instance_size": "S",
    "unsupervised_fs": True,
    "train_test_split": 0.8,
    "train_cv_split": 3,
}


def base_body(endpoint):
    return {"data_file": TINY_CSV, "time_column": "timestamp", "time_format": "epoch_ms", **BASE[endpoint]}


# --- validation ------------------------------------------------------------


def test_matrix_covers_every_argument():
    assert set(EXPECTED) == set(SAMPLE) | {"target_columns"}
    assert len(EXPECTED) == 22


@pytest.mark.parametrize("endpoint", ENDPOINTS)
@pytest.mark.parametrize("argument", list(EXPECTED))
def test_argument_endpoint_matrix(argument, endpoint):
    body = base_body(endpoint)
    if argument != "target_columns":
        body[argument] = SAMPLE[argument]
    if argument == "recent_data":
        body["prediction_type"] = "stream"
    request, violations = validate_request(endpoint, body)
    if endpoint in EXPECTED[argument]:
        assert violations == [] and request is not None
    else:
        assert request is None
        assert any(v.startswith(argument) for v in violations)


def test_label_column_rejected_for_multivariate():
    _, violations = validate_request("multivariate", {**base_body("multivariate"), "label_column": "y"})
    assert violations == ["label_column not accepted by the multivariate endpoint"]


def test_stream_needs_recent_data():
    _, violations = validate_request("univariate", {**base_body("univariate"), "prediction_type": "stream"})
    assert any("recent_data" in v for v in violations)


def test_all_violations_reported_together():
    body = {"label_column": "y", "lookback_window": 0, "instance_size": "XL", "bogus": 1}
    _, violations = validate_request("univariate", body)
    for needle in ("label_column", "data_file", "time_column", "target_columns", "lookback_window", "instance_size", "bogus"):
        assert any(needle in v for v in violations), needle


def test_defaults_filled():
    request, _ = validate_request("univariate", base_body("univariate"))
    assert request.detector.anomaly_estimator == "DNN_AutoEncoder"
    assert request.window.lookback_window == 8 and request.window.observation_window == 10
    assert (request.labeling.labeling_method, request.labeling.labeling_threshold) == ("pvalue_threshold", 0.01)
    assert request.instance_size.label == "M" and request.prediction_type == "batch"


def test_incompatible_estimator():
    body = {**base_body("univariate"), "algorithm_type": "PredAD", "anomaly_estimator": "Covariance"}
    _, violations = validate_request("univariate", body)
    assert any("not compatible" in v for v in violations)


def test_inline_secrets_refused():
    body = {**base_body("univariate"), "data_file": {"bucket": "b", "key": "k", "secret_key": "hunter2"}}
    _, violations = validate_request("univariate", body)
    assert any("credentials" in v for v in violations)
    body["data_file"] = {"bucket": "b", "key": "k", "credentials": "PROD"}
    request, _ = validate_request("univariate", body)
    assert request.data_file == ObjectLocator("b", "k", None, "PROD")


def test_instance_sizes_strictly_ordered():
    s, m, l = (INSTANCE_SIZES[k] for k in "SML")
    for field in ("max_seconds", "max_rows", "max_columns", "max_bytes"):
        assert getattr(s, field) < getattr(m, field) < getattr(l, field)
    assert (s.max_seconds, s.max_rows, s.max_columns) == (600, 50_000, 50)
    assert (l.max_seconds, l.max_rows, l.max_columns) == (7200, 5_000_000, 500)


# --- job manager -----------------------------------------------------------


def spike_body(seed=0, **extra):
    x = spike_series(seed)
    return {
        "data_file": csv_text({"cpu": x}),
        "time_column": "timestamp",
        "time_format": "epoch_ms",
        "target_columns": ["cpu"],
        "labeling_threshold": 0.001,
        "series_id": "vsi-1",
        **extra,
    }


@pytest.fixture
def manager(tmp_path):
    m = JobManager(tmp_path / "store", workers=2)
    yield m
    m.shutdown()


def test_burst_of_150_admits_100(tmp_path):
    m = JobManager(tmp_path / "store", workers=0)
    outcomes = []
    lock = threading.Lock()

    def submit():
        try:
            m.submit("univariate", base_body("univariate"))
            result = "ok"
        except CapacityExceeded:
            result = "rejected"
        with lock:
            outcomes.append(result)

    threads = [threading.Thread(target=submit) for _ in range(150)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert outcomes.count("ok") == 100 and outcomes.count("rejected") == 50
    assert m.active_count() == 100


def test_invalid_submission_is_not_persisted(tmp_path):
    m = JobManager(tmp_path / "store", workers=0)
    with pytest.raises(ValidationFailed):
        m.submit("univariate", {"label_column": "y"})
    assert m.store.all() == []


def slow_runner(request, deadline):
    while True:
        deadline.check()
        time.sleep(0.01)


def test_wall_clock_cap_expires_job(tmp_path):
    m = JobManager(tmp_path / "store", workers=1, wall_clock_limit=2, runner=slow_runner)
    job = m.submit("univariate", base_body("univariate"))
    status = m.wait(job, timeout=10)
    m.shutdown()
    assert status["state"] == EXPIRED
    assert status["reason"]["message"] == "wall-clock limit 2s"


def test_large_instance_gets_two_hour_cap(tmp_path):
    m = JobManager(tmp_path / "store", workers=1, runner=slow_runner)
    job = m.submit("univariate", {**base_body("univariate"), "instance_size": "L"})
    for _ in range(200):
        if m.get(job)["state"] == RUNNING:
            break
        time.sleep(0.01)
    assert m.get(job)["limits"]["max_seconds"] == 7200
    assert m.cancel(job)["state"] == CANCELLED
    m.shutdown()


def test_cancel_is_idempotent(tmp_path):
    m = JobManager(tmp_path / "store", workers=0)
    job = m.submit("univariate", base_body("univariate"))
    assert m.cancel(job)["state"] == CANCELLED
    finished = m.get(job)["finished"]
    assert m.cancel(job)["state"] == CANCELLED
    assert m.get(job)["finished"] == finished


def test_cancel_leaves_succeeded_job(manager):
    job = manager.submit("univariate", spike_body())
    assert manager.wait(job)["state"] == SUCCEEDED
    assert manager.cancel(job)["state"] == SUCCEEDED


def test_result_before_completion(tmp_path):
    m = JobManager(tmp_path / "store", workers=0)
    job = m.submit("univariate", base_body("univariate"))
    with pytest.raises(NotReady):
        m.result(job)
    with pytest.raises(NotFound):
        m.get("does-not-exist")


def test_restart_recovery(tmp_path):
    first = JobManager(tmp_path / "store", workers=1)
    done = first.submit("univariate", spike_body())
    assert first.wait(done)["state"] == SUCCEEDED
    first.shutdown()

    second = JobManager(tmp_path / "store", workers=0)
    queued = second.submit("univariate", base_body("univariate"))
    running = second.submit("univariate", base_body("univariate"))
    second.store.transition(running, RUNNING)

    third = JobManager(tmp_path / "store", workers=0)
    assert third.get(done)["state"] == SUCCEEDED
    assert "scores.csv" in third.result(done)
    assert third.get(queued)["state"] == QUEUED
    status = third.get(running)
    assert status["state"] == FAILED and status["reason"]["code"] == "interrupted"


def test_univariate_spike_found(manager):
    job = manager.submit("univariate", spike_body())
    assert manager.wait(job)["state"] == SUCCEEDED
    summary = json.loads(manager.result(job)["summary.json"])
    assert summary["anomaly_count"] == 1
    assert summary["anomalies"] == ["2024-01-01T02:30:00.000Z"]  # row 150


def test_size_s_row_cap(manager):
    n = INSTANCE_SIZES["S"].max_rows + 1
    body = {**spike_body(), "data_file": csv_text({"cpu": np.zeros(n)}), "instance_size": "S"}
    status = manager.wait(manager.submit("univariate", body))
    assert status["state"] == FAILED
    assert status["reason"]["code"] == "limit_exceeded"
    assert status["started"] is not None


def test_stream_scores_observation_window(manager):
    rng = np.random.default_rng(5)
    recent = csv_text({"a": rng.normal(size=12), "b": rng.normal(size=12)}, ts=timestamps(512)[500:])
    body = {
        "data_file": csv_text({"a": rng.normal(size=500), "b": rng.normal(size=500)}),
        "time_column": "timestamp",
        "time_format": "epoch_ms",
        "target_columns": ["a", "b"],
        "anomaly_estimator": "Covariance",
        "prediction_type": "stream",
        "recent_data": recent,
        "observation_window": 5,
    }
    job = manager.submit("multivariate", body)
    assert manager.wait(job)["state"] == SUCCEEDED
    scores = manager.result(job)["scores.csv"].splitlines()
    assert len(scores) == 1 + 5


def test_same_seed_gives_identical_results(manager):
    body = spike_body(algorithm_config={"random_seed": 9})
    a, b = manager.submit("univariate", body), manager.submit("univariate", body)
    manager.wait(a), manager.wait(b)
    assert manager.result(a) == manager.result(b)
    da, db = manager.store.result_dir(a), manager.store.result_dir(b)
    assert (da / "model.npz").read_bytes() == (db / "model.npz").read_bytes()


def test_query_anomalies(manager):
    job = manager.submit("univariate", spike_body())
    manager.wait(job)
    spike_ts = int(timestamps(300)[150])
    rows = manager.query_anomalies("vsi-1", spike_ts - 60_000, spike_ts + 60_000)
    assert [r["label"] for r in rows] == [1, -1, 1]
    flagged = manager.query_anomalies("vsi-1", label=-1)
    assert len(flagged) == json.loads(manager.result(job)["summary.json"])["anomaly_count"]
    assert [r["timestamp"] for r in rows] == sorted(r["timestamp"] for r in rows)
    with pytest.raises(NoResults):
        manager.query_anomalies("vsi-1", 0, 1000)
    with pytest.raises(NoResults):
        manager.query_anomalies("unknown-series")


# --- object store ----------------------------------------------------------


LOCATOR = ObjectLocator("bucket", "dir/data.csv", endpoint="http://store.test")


def scripted(statuses, body=b"t,x\n1,2\n"):
    seen = []

    def handler(request):
        seen.append(str(request.url))
        return httpx.Response(statuses[min(len(seen), len(statuses)) - 1], content=body)

    return httpx.Client(transport=httpx.MockTransport(handler)), seen


def test_fetch_returns_fixture_bytes():
    client, seen = scripted([200], b"exact bytes\x00\xff")
    assert fetch_object(LOCATOR, 1000, client=client, sleep=lambda s: None) == b"exact bytes\x00\xff"
    assert seen == ["http://store.test/bucket/dir/data.csv"]


def test_auth_failure_is_not_retried():
    client, seen = scripted([403])
    sleeps = []
    with pytest.raises(AuthFailed):
        fetch_object(LOCATOR, 1000, client=client, sleep=sleeps.append)
    assert len(seen) == 1 and sleeps == []


def test_transient_errors_retried_with_backoff():
    client, _ = scripted([503, 503, 200])
    sleeps, attempts = [], []
    data = fetch_object(LOCATOR, 1000, client=client, sleep=sleeps.append, attempts_log=attempts)
    assert data == b"t,x\n1,2\n"
    assert [a["status"] for a in attempts] == [503, 503, 200]
    assert sleeps == [1.0, 2.0]


def test_gives_up_after_three_attempts():
    client, seen = scripted([500])
    with pytest.raises(NetworkError):
        fetch_object(LOCATOR, 1000, client=client, sleep=lambda s: None)
    assert len(seen) == 3


def test_missing_object():
    client, _ = scripted([404])
    with pytest.raises(ObjectNotFound):
        fetch_object(LOCATOR, 1000, client=client, sleep=lambda s: None)


def test_object_too_large():
    client, _ = scripted([200], b"x" * 5000)
    with pytest.raises(TooLarge):
        fetch_object(LOCATOR, 1000, client=client, sleep=lambda s: None)


def test_job_reads_from_object_store(tmp_path, monkeypatch):
    payload = spike_body()["data_file"].encode()
    fetched = []

    def fake_fetch(locator, max_bytes):
        fetched.append((locator, max_bytes))
        return payload

    m = JobManager(tmp_path / "store", workers=1, fetch=fake_fetch)
    body = {**spike_body(), "data_file": {"bucket": "b", "key": "k.csv", "credentials": "TEAM"}}
    status = m.wait(m.submit("univariate", body))
    m.shutdown()
    assert status["state"] == SUCCEEDED
    assert fetched[0][0] == ObjectLocator("b", "k.csv", None, "TEAM")
    assert fetched[0][1] == INSTANCE_SIZES["M"].max_bytes


# --- HTTP routes -----------------------------------------------------------


def test_http_routes(tmp_path):
    m = JobManager(tmp_path / "store", workers=1)
    client = TestClient(create_app(m))
    resp = client.post("/v1/anomaly/univariate", json=spike_body())
    assert resp.status_code == 202
    job = resp.json()["job_id"]
    assert resp.json()["state"] in (QUEUED, RUNNING)
    m.wait(job)
    assert client.get(f"/v1/jobs/{job}").json()["state"] == SUCCEEDED
    result = client.get(f"/v1/jobs/{job}/result").json()
    assert result["summary"]["anomaly_count"] == 1
    csv = client.get(f"/v1/jobs/{job}/result", params={"format": "csv"})
    assert csv.text.startswith("timestamp,raw,p_value,label")
    rows = client.get("/v1/anomalies", params={"series": "vsi-1", "from": "2024-01-01T02:30:00Z", "to": "2024-01-01T02:30:00Z"})
    assert [r["label"] for r in rows.json()["rows"]] == [-1]
    assert client.get("/v1/anomalies", params={"series": "nope"}).status_code == 404
    assert client.delete(f"/v1/jobs/{job}").json() == {"job_id": job, "state": SUCCEEDED, "acknowledged": True}
    assert client.get("/v1/jobs/missing").status_code == 404
    assert client.get("/v1/health").json()["max_jobs"] == 100
    m.shutdown()


def test_http_error_codes(tmp_path):
    m = JobManager(tmp_path / "store", workers=0, max_jobs=1)
    client = TestClient(create_app(m))
    assert client.post("/v1/anomaly/forecasting", json=base_body("univariate")).status_code == 400
    bad = client.post("/v1/anomaly/multivariate", json={**base_body("multivariate"), "label_column": "y"})
    assert bad.status_code == 400 and bad.json()["error"]["code"] == "validation_failed"
    first = client.post("/v1/anomaly/univariate", json=base_body("univariate"))
    assert first.status_code == 202
    assert client.get(f"/v1/jobs/{first.json()['job_id']}/result").status_code == 409
    assert client.post("/v1/anomaly/univariate", json=base_body("univariate")).status_code == 429
