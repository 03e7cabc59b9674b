"""Persistent job store and the worker pool that runs detection jobs.

Each job lives in ``<store>/<job id>/`` with ``request.json``, ``status.json``
and, after success, the result files written by the pipeline. All store
writes go through one lock and land via atomic rename, so a crash never
leaves a half-written status file.
"""

from __future__ import annotations

import json
import logging
import os
import queue
import threading
import time
import uuid
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable

from ..detectors import Deadline
from ..errors import ADSError, CapacityExceeded, DeadlineExceeded, NoResults, NotFound, NotReady, ValidationFailed
from ..scoring import read_scores_csv
from ..tsdata import iso_time
from .objstore import fetch_object
from .schema import DetectionRequest, ObjectLocator, validate_request

log = logging.getLogger(__name__)

QUEUED, RUNNING, SUCCEEDED, FAILED, CANCELLED, EXPIRED = (
    "queued", "running", "succeeded", "failed", "cancelled", "expired",
)
ACTIVE = (QUEUED, RUNNING)
TERMINAL = (SUCCEEDED, FAILED, CANCELLED, EXPIRED)
TRANSITIONS = {
    QUEUED: {RUNNING, CANCELLED},
    RUNNING: {SUCCEEDED, FAILED, CANCELLED, EXPIRED},
}
WALL_CLOCK_LIMIT = 7200.0
DEFAULT_MAX_JOBS = 100


class IllegalTransition(RuntimeError):
    pass


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds").replace("+00:00", "Z")


def _write_atomic(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


class JobStore:
    """One directory per job; a single lock serializes every mutation."""

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.lock = threading.RLock()

    def _dir(self, job_id: str) -> Path:
        if not job_id or "/" in job_id or job_id.startswith("."):
            raise NotFound(f"no job {job_id!r}")
        return self.root / job_id

    def create(self, endpoint: str, body: dict, seq: int) -> dict:
        job_id = uuid.uuid4().hex
        status = {
            "id": job_id,
            "endpoint": endpoint,
            "state": QUEUED,
            "seq": seq,
            "submitted": _now(),
            "started": None,
            "finished": None,
            "reason": None,
            "limits": None,
            "result": None,
        }
        with self.lock:
            d = self._dir(job_id)
            d.mkdir()
            _write_atomic(d / "request.json", json.dumps({"endpoint": endpoint, "body": body}, indent=1, sort_keys=True))
            _write_atomic(d / "status.json", json.dumps(status, indent=1, sort_keys=True))
        return status

    def status(self, job_id: str) -> dict:
        path = self._dir(job_id) / "status.json"
        with self.lock:
            if not path.exists():
                raise NotFound(f"no job {job_id!r}")
            return json.loads(path.read_text(encoding="utf-8"))

    def request(self, job_id: str) -> dict:
        return json.loads((self._dir(job_id) / "request.json").read_text(encoding="utf-8"))

    def transition(self, job_id: str, new_state: str, expect: tuple = (), **fields) -> dict | None:
        """Move a job to ``new_state``; return ``None`` (no change) if its state is not in ``expect``."""
        with self.lock:
            status = self.status(job_id)
            state = status["state"]
            if expect and state not in expect:
                return None
            if new_state not in TRANSITIONS.get(state, ()):
                raise IllegalTransition(f"{state} -> {new_state}")
            status.update(fields, state=new_state)
            if new_state == RUNNING:
                status["started"] = _now()
            elif new_state in TERMINAL:
                status["finished"] = _now()
            _write_atomic(self._dir(job_id) / "status.json", json.dumps(status, indent=1, sort_keys=True))
            return status

    def result_dir(self, job_id: str) -> Path:
        return self._dir(job_id) / "result"

    def all(self) -> list[dict]:
        with self.lock:
            out = []
            for d in self.root.iterdir():
                if (d / "status.json").exists():
                    out.append(json.loads((d / "status.json").read_text(encoding="utf-8")))
            return sorted(out, key=lambda s: (s["seq"], s["id"]))


def _json_float(x) -> float | None:
    x = float(x)
    return None if x != x else x


def _resolve(data, size_bytes: int, fetch) -> bytes | str:
    return fetch(data, max_bytes=size_bytes) if isinstance(data, ObjectLocator) else data


class JobManager:
    """Admit, queue and run jobs with a bound on active jobs.

    ``workers=0`` admits jobs without running them, which is how the
    capacity tests hold jobs in the queue. ``wall_clock_limit`` caps every
    job and can be shrunk for tests. ``default_seed`` is filled into requests
    that do not set ``algorithm_config.random_seed``.
    """

    def __init__(
        self,
        store_dir,
        max_jobs: int | None = None,
        workers: int | None = None,
        wall_clock_limit: float = WALL_CLOCK_LIMIT,
        fetch: Callable = fetch_object,
        runner: Callable | None = None,
        default_seed: int | None = None,
    ):
        self.store = JobStore(store_dir)
        self.max_jobs = int(max_jobs if max_jobs is not None else os.environ.get("ADS_MAX_JOBS", DEFAULT_MAX_JOBS))
        if workers is None:
            workers = os.cpu_count() or 1
        self.n_workers = min(int(workers), self.max_jobs)
        self.wall_clock_limit = float(wall_clock_limit)
        self.fetch = fetch
        self._runner = runner
        self.default_seed = default_seed
        self._queue: queue.Queue = queue.Queue()
        self._cancel: dict[str, threading.Event] = {}
        self._seq = 0
        self._stop = threading.Event()
        self._recover()
        self._threads = [
            threading.Thread(target=self._work, name=f"ads-worker-{i}", daemon=True) for i in range(self.n_workers)
        ]
        for t in self._threads:
            t.start()

    # -- admission -----------------------------------------------------------

    def _recover(self) -> None:
        for status in self.store.all():
            self._seq = max(self._seq, status["seq"] + 1)
            if status["state"] == RUNNING:
                self.store.transition(status["id"], FAILED, reason={"code": "interrupted", "message": "interrupted"})
            elif status["state"] == QUEUED:
                self._cancel[status["id"]] = threading.Event()
                self._queue.put(status["id"])

    def active_count(self) -> int:
        return sum(1 for s in self.store.all() if s["state"] in ACTIVE)

    def submit(self, endpoint: str, body: dict) -> str:
        config = body.get("algorithm_config") if isinstance(body, dict) else None
        if self.default_seed is not None and (config is None or (isinstance(config, dict) and "random_seed" not in config)):
            body = {**body, "algorithm_config": {**(config or {}), "random_seed": self.default_seed}}
        request, violations = validate_request(endpoint, body)
        if violations:
            raise ValidationFailed(violations)
        with self.store.lock:
            if self.active_count() >= self.max_jobs:
                raise CapacityExceeded(f"{self.max_jobs} jobs already queued or running")
            status = self.store.create(endpoint, body, self._seq)
            self._seq += 1
            self._cancel[status["id"]] = threading.Event()
        self._queue.put(status["id"])
        return status["id"]

    # -- queries -------------------------------------------------------------

    def get(self, job_id: str) -> dict:
        status = self.store.status(job_id)
        status["request"] = self.store.request(job_id)
        return status

    def result(self, job_id: str) -> dict[str, str]:
        status = self.store.status(job_id)
        if status["state"] != SUCCEEDED:
            raise NotReady(f"job {job_id} is {status['state']}")
        d = self.store.result_dir(job_id)
        return {name: (d / name).read_text(encoding="utf-8") for name in status["result"]["files"]}

    def cancel(self, job_id: str) -> dict:
        """Cancel a queued or running job. Terminal jobs are left unchanged."""
        status = self.store.transition(job_id, CANCELLED, expect=ACTIVE, reason={"code": "cancelled", "message": "cancelled by request"})
        event = self._cancel.get(job_id)
        if status is not None and event is not None:
            event.set()
        return self.store.status(job_id)

    def query_anomalies(self, series: str, start: int | None = None, end: int | None = None, label: int | None = None) -> list[dict]:
        """Dashboard rows for ``series`` from every succeeded job, ordered by timestamp.

        ``start`` and ``end`` are inclusive epoch milliseconds.
        """
        rows = []
        for status in self.store.all():
            if status["state"] != SUCCEEDED or self.store.request(status["id"])["body"].get("series_id") != series:
                continue
            files = self.result(status["id"])
            scores = read_scores_csv(files["scores.csv"])
            summary = json.loads(files["summary.json"])
            top = {rec["row"]: rec["contributions"][0] for rec in json.loads(files["attribution.json"]) if rec["contributions"]}
            metric = ",".join(summary["columns"])
            for i, ts in enumerate(scores.timestamps.tolist()):
                if (start is not None and ts < start) or (end is not None and ts > end):
                    continue
                lab = int(scores.label[i])
                if label is not None and lab != label:
                    continue
                rows.append({
                    "timestamp": iso_time(ts),
                    "job_id": status["id"],
                    "metric": metric,
                    "raw": _json_float(scores.raw[i]),
                    "p_value": _json_float(scores.p_value[i]),
                    "label": lab or None,
                    "top_attribution": top.get(i),
                    "_key": (ts, status["seq"]),
                })
        if not rows:
            raise NoResults(f"no scored rows for series {series!r} in the requested range")
        rows.sort(key=lambda r: r.pop("_key"))
        return rows

    def wait(self, job_id: str, timeout: float = 60.0, poll: float = 0.02) -> dict:
        end = time.monotonic() + timeout
        while True:
            status = self.store.status(job_id)
            if status["state"] in TERMINAL or time.monotonic() > end:
                return status
            time.sleep(poll)

    # -- execution -----------------------------------------------------------

    def _work(self) -> None:
        while not self._stop.is_set():
            try:
                job_id = self._queue.get(timeout=0.1)
            except queue.Empty:
                continue
            try:
                self._run(job_id)
            except Exception:  # keep the worker alive whatever a job does
                log.exception("job %s crashed the worker loop", job_id)
            finally:
                self._queue.task_done()

    def _run(self, job_id: str) -> None:
        saved = self.store.request(job_id)
        request, violations = validate_request(saved["endpoint"], saved["body"])
        if violations:
            self.store.transition(job_id, RUNNING, expect=(QUEUED,))
            self.store.transition(job_id, FAILED, expect=(RUNNING,), reason=ValidationFailed(violations).reason())
            return
        size = request.instance_size
        limit = min(size.max_seconds, self.wall_clock_limit)
        if request.evaluation_time is not None:
            limit = min(limit, request.evaluation_time)
        limits = {
            "instance_size": size.label,
            "max_seconds": limit,
            "max_rows": size.max_rows,
            "max_columns": size.max_columns,
            "max_bytes": size.max_bytes,
        }
        if self.store.transition(job_id, RUNNING, expect=(QUEUED,), limits=limits) is None:
            return  # cancelled while queued
        event = self._cancel.setdefault(job_id, threading.Event())

        def expire():
            text = f"wall-clock limit {limit:g}s"
            if self.store.transition(job_id, EXPIRED, expect=(RUNNING,), reason={"code": "expired", "message": text}):
                event.set()

        watchdog = threading.Timer(limit, expire)
        watchdog.daemon = True
        watchdog.start()
        try:
            deadline = Deadline(limit, cancelled=event.is_set)
            result = self._execute(request, deadline)
            if event.is_set():
                return
            out = self.store.result_dir(job_id)
            paths = result.write(out)
            self.store.transition(
                job_id,
                SUCCEEDED,
                expect=(RUNNING,),
                result={"dir": str(out), "files": sorted(p.name for p in paths.values() if p.suffix != ".npz")},
                summary={k: result.summary[k] for k in ("anomaly_count", "rows_scored")},
            )
        except DeadlineExceeded:
            # the watchdog or a cancel already recorded the terminal state
            self.store.transition(job_id, EXPIRED, expect=(RUNNING,), reason={"code": "expired", "message": f"wall-clock limit {limit:g}s"})
        except ADSError as exc:
            self.store.transition(job_id, FAILED, expect=(RUNNING,), reason=exc.reason())
        except Exception as exc:
            log.exception("job %s failed", job_id)
            self.store.transition(job_id, FAILED, expect=(RUNNING,), reason={"code": "internal_error", "message": repr(exc)})
        finally:
            watchdog.cancel()

    def _execute(self, request: DetectionRequest, deadline: Deadline):
        if self._runner is not None:
            return self._runner(request, deadline)
        from ..pipeline import run_detection

        data = _resolve(request.data_file, request.instance_size.max_bytes, self.fetch)
        return run_detection(request, data, request.recent_data, deadline)

    def shutdown(self, wait: bool = True) -> None:
        self._stop.set()
        if wait:
            for t in self._threads:
                t.join(timeout=5)
