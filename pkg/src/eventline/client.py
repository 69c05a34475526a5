"""HTTP client for a chat-completions-shaped text-generation endpoint.

Backend-agnostic: any service accepting {"model", "messages", ...} and
answering {"choices": [{"message": {"content": ...}}]} works. Requests
are serialized with sorted keys so identical inputs produce identical
request bytes. Timeouts and 5xx responses are retried with exponential
backoff up to a bounded attempt count; each failure mode raises its own
exception type so callers can pick a fallback policy.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass

import requests


class GenerationError(Exception):
    """Base class for external-generation failures."""


class GenerationTimeout(GenerationError):
    pass


class GenerationHTTPError(GenerationError):
    def __init__(self, status: int, body: str):
        super().__init__(f"backend returned HTTP {status}: {body[:200]}")
        self.status = status
        self.body = body


class GenerationFormatError(GenerationError):
    pass


@dataclass(frozen=True)
class GenerationRequest:
    prompt: str
    max_output_chars: int = 256
    temperature: float = 0.0
    seed: int | None = None


@dataclass(frozen=True)
class GenerationResponse:
    text: str
    latency_ms: float
    backend_id: str
    retries: int = 0


class GenerationClient:
    def __init__(self, base_url: str, model: str = "default",
                 timeout_s: float = 10.0, retries: int = 2,
                 backoff_s: float = 0.5, max_in_flight: int = 4,
                 session: requests.Session | None = None):
        if not base_url:
            raise ValueError("base_url must be configured")
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.timeout_s = timeout_s
        self.retries = retries
        self.backoff_s = backoff_s
        self._session = session or requests.Session()
        self._slots = threading.BoundedSemaphore(max_in_flight)

    def request_bytes(self, request: GenerationRequest) -> bytes:
        """Canonical request body; identical requests map to identical bytes."""
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_output_chars,
        }
        if request.seed is not None:
            payload["seed"] = request.seed
        return json.dumps(payload, ensure_ascii=False, sort_keys=True,
                          separators=(",", ":")).encode("utf-8")

    def generate(self, request: GenerationRequest) -> GenerationResponse:
        """POST the prompt; retry timeouts and 5xx with exponential backoff."""
        url = self.base_url + "/chat/completions"
        body = self.request_bytes(request)
        headers = {"Content-Type": "application/json"}
        start = time.monotonic()
        last_error: GenerationError | None = None

        for attempt in range(self.retries + 1):
            if attempt:
                time.sleep(self.backoff_s * 2 ** (attempt - 1))
            try:
                with self._slots:
                    resp = self._session.post(url, data=body, headers=headers,
                                              timeout=self.timeout_s)
            except requests.Timeout:
                last_error = GenerationTimeout(
                    f"no response within {self.timeout_s}s from {url}")
                continue
            except requests.ConnectionError as exc:
                last_error = GenerationTimeout(f"connection failed: {exc}")
                continue

            if 500 <= resp.status_code < 600:
                last_error = GenerationHTTPError(resp.status_code, resp.text)
                continue
            if resp.status_code != 200:
                raise GenerationHTTPError(resp.status_code, resp.text)

            text = self._extract_text(resp)
            latency_ms = (time.monotonic() - start) * 1000.0
            backend_id = self._backend_id(resp)
            return GenerationResponse(text=text, latency_ms=latency_ms,
                                      backend_id=backend_id, retries=attempt)

        assert last_error is not None
        raise last_error

    def _extract_text(self, resp) -> str:
        try:
            data = resp.json()
        except ValueError as exc:
            raise GenerationFormatError(f"response is not JSON: {exc}") from exc
        try:
            text = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise GenerationFormatError(
                f"response missing choices[0].message.content: {exc}") from exc
        if not isinstance(text, str) or not text:
            raise GenerationFormatError("response text empty")
        return text

    def _backend_id(self, resp) -> str:
        try:
            return str(resp.json().get("model") or self.model)
        except ValueError:
            return self.model
