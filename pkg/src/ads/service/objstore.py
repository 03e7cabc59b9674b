"""Fetch input objects from an S3-style HTTP object store."""

from __future__ import annotations

import logging
import os
import time
from typing import Callable

import httpx

from ..errors import AuthFailed, NetworkError, ObjectNotFound, TooLarge

log = logging.getLogger(__name__)

ATTEMPTS = 3
BACKOFF = (1.0, 2.0, 4.0)
RETRYABLE_STATUS = {408, 425, 429, 500, 502, 503, 504}
CHUNK = 1 << 16


def credentials(reference: str | None = None) -> tuple[str, str] | None:
    """Look up ``<REF>_KEY_ID`` / ``<REF>_SECRET`` in the environment (default prefix ``ADS_OBJSTORE``)."""
    prefix = (reference or "ADS_OBJSTORE").upper()
    key_id, secret = os.environ.get(f"{prefix}_KEY_ID"), os.environ.get(f"{prefix}_SECRET")
    if key_id and secret:
        return key_id, secret
    return None


def object_url(locator) -> str:
    endpoint = locator.endpoint or os.environ.get("ADS_OBJSTORE_ENDPOINT")
    if not endpoint:
        raise NetworkError("no object-store endpoint: set ADS_OBJSTORE_ENDPOINT or give one in the locator")
    return f"{endpoint.rstrip('/')}/{locator.bucket}/{locator.key.lstrip('/')}"


def fetch_object(
    locator,
    max_bytes: int,
    client: httpx.Client | None = None,
    sleep: Callable[[float], None] = time.sleep,
    attempts_log: list | None = None,
    timeout: float = 30.0,
) -> bytes:
    """Download one object, retrying transient failures up to three attempts.

    Waits ``BACKOFF[i]`` seconds after failed attempt ``i``. 401/403 and 404
    are final. The body is streamed and abandoned once it passes ``max_bytes``.
    """
    url = object_url(locator)
    auth = credentials(locator.credentials)
    own = client is None
    client = client or httpx.Client(timeout=timeout, follow_redirects=True)
    log_ = attempts_log if attempts_log is not None else []
    try:
        last = None
        for attempt in range(1, ATTEMPTS + 1):
            try:
                with client.stream("GET", url, auth=auth) as resp:
                    log_.append({"attempt": attempt, "status": resp.status_code})
                    if resp.status_code in (401, 403):
                        raise AuthFailed(f"object store refused access to {locator.bucket}/{locator.key} ({resp.status_code})")
                    if resp.status_code == 404:
                        raise ObjectNotFound(f"{locator.bucket}/{locator.key} does not exist")
                    if resp.status_code in RETRYABLE_STATUS:
                        last = f"HTTP {resp.status_code}"
                    elif resp.status_code >= 400:
                        raise NetworkError(f"object store returned HTTP {resp.status_code}")
                    else:
                        declared = resp.headers.get("content-length")
                        if declared is not None and declared.isdigit() and int(declared) > max_bytes:
                            raise TooLarge(f"object is {declared} bytes; limit is {max_bytes}")
                        buf = bytearray()
                        for chunk in resp.iter_bytes(CHUNK):
                            buf += chunk
                            if len(buf) > max_bytes:
                                raise TooLarge(f"object exceeds the {max_bytes}-byte limit")
                        return bytes(buf)
            except httpx.TransportError as exc:
                log_.append({"attempt": attempt, "error": type(exc).__name__})
                last = f"{type(exc).__name__}: {exc}"
            if attempt < ATTEMPTS:
                log.info("fetch %s failed (%s); retrying in %.0fs", url, last, BACKOFF[attempt - 1])
                sleep(BACKOFF[attempt - 1])
        raise NetworkError(f"giving up on {url} after {ATTEMPTS} attempts: {last}")
    finally:
        if own:
            client.close()
