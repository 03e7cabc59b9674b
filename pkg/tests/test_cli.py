import json
import subprocess
import sys

import numpy as np
import pytest

from ads.cli import EXIT_INVALID, EXIT_OK, EXIT_RUNTIME, main
from ads.detectors import ESTIMATORS
from ads.modeler.clients import FIXTURES
from ads.service.jobs import SUCCEEDED, JobManager
from synth import csv_text, spike_series, timestamps

SUBCOMMANDS = ("detect", "benchmark", "plan", "validate", "serve")


@pytest.fixture
def spike_csv(tmp_path):
    path = tmp_path / "spike.csv"
    path.write_text(csv_text({"cpu": spike_series()}))
    return path


def detect_args(data, out, *extra):
    return ["detect", "--endpoint", "univariate", "--data-file", str(data), "--time-column", "timestamp",
            "--time-format", "epoch_ms", "--target-columns", "cpu", "--labeling-threshold", "0.001",
            "--output-dir", str(out), *extra]


@pytest.mark.parametrize("sub", SUBCOMMANDS)
def test_every_subcommand_has_help_and_seed(sub, capsys):
    with pytest.raises(SystemExit) as exc:
        main([sub, "--help"])
    assert exc.value.code == 0
    assert "--seed" in capsys.readouterr().out


def test_console_script_entry_point():
    out = subprocess.run([sys.executable, "-m", "ads.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "detect" in out.stdout


def test_detect_reports_injected_spike(spike_csv, tmp_path, capsys):
    assert main(detect_args(spike_csv, tmp_path / "out", "--seed", "1", "--plot")) == EXIT_OK
    out = capsys.readouterr().out
    assert "anomalies: 1" in out
    assert "2024-01-01T02:30:00.000Z" in out
    for name in ("scores.csv", "summary.json", "attribution.json", "plot_data.csv", "detection.png"):
        assert (tmp_path / "out" / name).is_file()
    plot = (tmp_path / "out" / "plot_data.csv").read_text().splitlines()
    assert plot[0] == "timestamp,column,value,label" and len(plot) == 301


def test_detect_missing_time_column(spike_csv, tmp_path, capsys):
    args = [a for a in detect_args(spike_csv, tmp_path) if a not in ("--time-column", "timestamp")]
    assert main(args) == EXIT_INVALID
    assert "time_column is required for the univariate endpoint" in capsys.readouterr().err


def test_detect_runtime_failure(tmp_path, capsys):
    path = tmp_path / "bad.csv"
    path.write_text("timestamp,cpu\n1,abc\n")
    assert main(detect_args(path, tmp_path / "o")) == EXIT_RUNTIME
    assert "non_numeric_value" in capsys.readouterr().err


def test_detect_stream(tmp_path, capsys):
    rng = np.random.default_rng(3)
    hist, recent = tmp_path / "h.csv", tmp_path / "r.csv"
    hist.write_text(csv_text({"a": rng.normal(size=400), "b": rng.normal(size=400)}))
    recent.write_text(csv_text({"a": rng.normal(size=20), "b": rng.normal(size=20)}, ts=timestamps(420)[400:]))
    args = ["detect", "--endpoint", "multivariate", "--data-file", str(hist), "--time-column", "timestamp",
            "--time-format", "epoch_ms", "--target-columns", "a,b", "--anomaly-estimator", "Covariance",
            "--prediction-type", "stream", "--recent-data", str(recent), "--observation-window", "7",
            "--output-dir", str(tmp_path / "o")]
    assert main(args) == EXIT_OK
    assert len((tmp_path / "o" / "scores.csv").read_text().splitlines()) == 1 + 7


def test_detect_config_file_and_flag_override(spike_csv, tmp_path):
    cfg = tmp_path / "req.json"
    cfg.write_text(json.dumps({"endpoint": "univariate", "body": {
        "data_file": str(spike_csv), "time_column": "timestamp", "time_format": "epoch_ms",
        "target_columns": ["cpu"], "labeling_threshold": 0.5}}))
    assert main(["detect", "--config", str(cfg), "--labeling-threshold", "0.001", "--output-dir", str(tmp_path / "o")]) == EXIT_OK
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert summary["labeling"]["threshold"] == 0.001


def test_detect_matches_service_bytes(spike_csv, tmp_path):
    assert main(detect_args(spike_csv, tmp_path / "cli", "--seed", "5")) == EXIT_OK
    manager = JobManager(tmp_path / "store", workers=1)
    body = {"data_file": spike_csv.read_text(), "time_column": "timestamp", "time_format": "epoch_ms",
            "target_columns": ["cpu"], "labeling_threshold": 0.001, "algorithm_config": {"random_seed": 5}}
    job = manager.submit("univariate", body)
    assert manager.wait(job)["state"] == SUCCEEDED
    manager.shutdown()
    files = manager.result(job)
    for name in ("scores.csv", "attribution.json", "summary.json"):
        assert files[name] == (tmp_path / "cli" / name).read_text()


def test_benchmark_repeatable(tmp_path, capsys):
    args = ["benchmark", "--estimators", "IsolationForest,Covariance", "--seed", "7"]
    assert main([*args, "--output-dir", str(tmp_path / "a")]) == EXIT_OK
    assert main([*args, "--output-dir", str(tmp_path / "b")]) == EXIT_OK
    a = (tmp_path / "a" / "benchmark.csv").read_text()
    assert a == (tmp_path / "b" / "benchmark.csv").read_text()
    assert len(a.splitlines()) == 3
    assert (tmp_path / "a" / "benchmark.png").stat().st_size > 0


@pytest.mark.slow
def test_benchmark_all_estimators(tmp_path, capsys):
    assert main(["benchmark", "--estimators", "all", "--reference", "--output-dir", str(tmp_path)]) == EXIT_OK
    rows = (tmp_path / "benchmark.csv").read_text().splitlines()[1:]
    assert sorted(r.split(",")[0] for r in rows) == sorted(ESTIMATORS)
    assert len(rows) == 8
    assert "published_f1" in capsys.readouterr().out


def test_benchmark_unknown_estimator(tmp_path, capsys):
    assert main(["benchmark", "--estimators", "Prophet", "--output-dir", str(tmp_path)]) == EXIT_INVALID
    err = capsys.readouterr().err
    assert "Prophet" in err and "IsolationForest" in err


def test_benchmark_missing_assets(tmp_path, capsys):
    (tmp_path / "root" / "ds" / "a1").mkdir(parents=True)
    assert main(["benchmark", "--root", str(tmp_path / "root"), "--estimators", "Covariance",
                 "--output-dir", str(tmp_path / "o")]) == EXIT_RUNTIME
    assert "labels.csv" in capsys.readouterr().err


def test_plan_with_cloud_fixture(tmp_path, capsys):
    out = tmp_path / "plan"
    header = tmp_path / "metrics.csv"
    header.write_text(",".join((FIXTURES / "cloud_columns.txt").read_text().split()) + "\n")
    args = ["plan", "--replay", str(FIXTURES / "cloud_replay.json"), "--domain", "cloud infrastructure",
            "--header-from", str(header), "--data-file", "metrics.csv",
            "--time-format", "epoch_ms", "--output-dir", str(out)]
    assert main(args) == EXIT_OK
    assert "CPU Usage -> ibm_is_instance_average_cpu_usage_percentage" in capsys.readouterr().out
    requests = sorted(str(p) for p in (out / "requests").glob("*.json"))
    assert requests
    assert main(["validate", *requests]) == EXIT_OK


def test_plan_without_matches(tmp_path, capsys):
    args = ["plan", "--columns", "timestamp,foo,bar", "--output-dir", str(tmp_path)]
    assert main(args) == EXIT_RUNTIME
    captured = capsys.readouterr()
    assert "unmapped CPU Usage" in captured.out


def test_validate_flags(tmp_path, capsys):
    data = tmp_path / "d.csv"
    data.write_text("t,a,b,y\n1,2,3,1\n")
    assert main(["validate", "--endpoint", "multivariate", "--data-file", str(data), "--time-column", "t",
                 "--target-columns", "a,b", "--label-column", "y"]) == EXIT_INVALID
    assert "label_column not accepted" in capsys.readouterr().err
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"endpoint": "regression", "body": {"data_file": "t,a\n1,2\n"}}))
    assert main(["validate", str(bad)]) == EXIT_INVALID


def test_usage_errors_exit_one(capsys):
    assert main(["detect", "--no-such-flag"]) == EXIT_INVALID
    assert main(["validate", "--target-columns", "a"]) == EXIT_INVALID
