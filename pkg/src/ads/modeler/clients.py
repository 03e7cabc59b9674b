"""Text-generation clients: a live chat-completion client and an offline replay client."""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Protocol

import httpx

from ..errors import ClientUnavailable

FIXTURES = Path(__file__).parent / "fixtures"


class TextClient(Protocol):
    def complete(self, stage: str, subject: str, prompt: str) -> str:
        """Return the model's reply to ``prompt``.

        ``stage`` and ``subject`` identify the call within the prompt chain;
        live clients may ignore them, replay clients key on them.
        """


class ReplayClient:
    """Serves recorded responses keyed by ``(stage, subject)``."""

    def __init__(self, responses: dict[str, dict[str, str]]):
        self.responses = responses
        self.calls: list[tuple[str, str]] = []

    @classmethod
    def from_file(cls, path) -> "ReplayClient":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(doc["responses"])

    @classmethod
    def cloud_fixture(cls) -> "ReplayClient":
        return cls.from_file(FIXTURES / "cloud_replay.json")

    def complete(self, stage: str, subject: str, prompt: str) -> str:
        self.calls.append((stage, subject))
        try:
            return self.responses[stage][subject]
        except KeyError:
            raise ClientUnavailable(f"no recorded response for {stage} / {subject}") from None


class HttpClient:
    """Chat-completion style endpoint (``POST <endpoint>`` with a ``messages`` list).

    Safe to share between threads: each call is an independent request on an
    ``httpx.Client``, which is itself thread-safe.
    """

    def __init__(
        self,
        endpoint: str | None = None,
        api_key: str | None = None,
        model: str = "default",
        timeout: float = 60.0,
        transport: httpx.BaseTransport | None = None,
    ):
        self.endpoint = endpoint or os.environ.get("ADS_LLM_ENDPOINT")
        if not self.endpoint:
            raise ClientUnavailable("set ADS_LLM_ENDPOINT or pass an endpoint")
        key = api_key or os.environ.get("ADS_LLM_API_KEY")
        headers = {"Authorization": f"Bearer {key}"} if key else {}
        self.model = model
        self._http = httpx.Client(timeout=timeout, headers=headers, transport=transport)

    def complete(self, stage: str, subject: str, prompt: str) -> str:
        payload = {"model": self.model, "temperature": 0, "messages": [{"role": "user", "content": prompt}]}
        try:
            resp = self._http.post(self.endpoint, json=payload)
        except httpx.HTTPError as exc:
            raise ClientUnavailable(f"{stage}: {exc}") from exc
        if resp.status_code != 200:
            raise ClientUnavailable(f"{stage}: endpoint returned HTTP {resp.status_code}")
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError):
            raise ClientUnavailable(f"{stage}: reply is not a chat completion") from None

    def close(self) -> None:
        self._http.close()
