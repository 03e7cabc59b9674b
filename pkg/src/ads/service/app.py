"""HTTP routes. The wire schema is documented in ``docs/api.md``."""

from __future__ import annotations

import json
import os
from datetime import datetime, timezone

from fastapi import Body, FastAPI, Query
from fastapi.responses import JSONResponse, PlainTextResponse

from ..errors import ADSError, CapacityExceeded, NoResults, NotFound, NotReady, ValidationFailed
from .jobs import JobManager
from .schema import ENDPOINTS

STATUS_OF = {
    ValidationFailed: 400,
    CapacityExceeded: 429,
    NotFound: 404,
    NoResults: 404,
    NotReady: 409,
}


def _error(exc: ADSError) -> JSONResponse:
    code = next((v for k, v in STATUS_OF.items() if isinstance(exc, k)), 500)
    return JSONResponse(status_code=code, content={"error": exc.reason()})


def _instant(text: str | None) -> int | None:
    """Epoch milliseconds from either an integer string or an ISO-8601 instant."""
    if text is None or text == "":
        return None
    if text.lstrip("-").isdigit():
        return int(text)
    dt = datetime.fromisoformat(text.replace("Z", "+00:00"))
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(round(dt.timestamp() * 1000))


def create_app(manager: JobManager | None = None) -> FastAPI:
    if manager is None:
        manager = JobManager(os.environ.get("ADS_STORE_DIR", "ads-store"))
    app = FastAPI(title="ads", version="1")
    app.state.manager = manager

    @app.exception_handler(ADSError)
    async def _handle(request, exc: ADSError):
        return _error(exc)

    @app.post("/v1/anomaly/{endpoint}", status_code=202)
    def submit(endpoint: str, body: dict = Body(...)):
        if endpoint not in ENDPOINTS:
            raise ValidationFailed([f"unknown endpoint {endpoint!r}; expected one of {', '.join(ENDPOINTS)}"])
        job_id = manager.submit(endpoint, body)
        return {"job_id": job_id, "state": manager.store.status(job_id)["state"]}

    @app.get("/v1/jobs/{job_id}")
    def get_job(job_id: str):
        return manager.get(job_id)

    @app.get("/v1/jobs/{job_id}/result")
    def get_result(job_id: str, format: str = "json"):
        files = manager.result(job_id)
        if format == "csv":
            return PlainTextResponse(files["scores.csv"], media_type="text/csv")
        return {
            "job_id": job_id,
            "scores_csv": files["scores.csv"],
            "attribution": json.loads(files["attribution.json"]),
            "summary": json.loads(files["summary.json"]),
        }

    @app.delete("/v1/jobs/{job_id}")
    def cancel_job(job_id: str):
        status = manager.cancel(job_id)
        return {"job_id": job_id, "state": status["state"], "acknowledged": True}

    @app.get("/v1/anomalies")
    def anomalies(
        series: str,
        start: str | None = Query(None, alias="from"),
        end: str | None = Query(None, alias="to"),
        label: int | None = None,
    ):
        try:
            lo, hi = _instant(start), _instant(end)
        except ValueError as exc:
            raise ValidationFailed([f"bad time bound: {exc}"]) from None
        return {"series": series, "rows": manager.query_anomalies(series, lo, hi, label)}

    @app.get("/v1/health")
    def health():
        return {"status": "ok", "active_jobs": manager.active_count(), "max_jobs": manager.max_jobs}

    return app


def serve(
    host: str = "127.0.0.1",
    port: int | None = None,
    store_dir: str | None = None,
    max_jobs: int | None = None,
    workers: int | None = None,
    default_seed: int | None = None,
) -> None:
    import uvicorn

    port = int(port or os.environ.get("ADS_PORT", 8080))
    store = store_dir or os.environ.get("ADS_STORE_DIR", "ads-store")
    manager = JobManager(store, max_jobs=max_jobs, workers=workers, default_seed=default_seed)
    uvicorn.run(create_app(manager), host=host, port=port)
