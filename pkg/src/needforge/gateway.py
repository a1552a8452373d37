"""Transport to an OpenAI-compatible chat endpoint and the embedding sidecar.

Responses are cached on disk keyed by a digest of the full request, so that
re-runs over identical inputs never touch the network. Transient failures
(timeouts, 429, 5xx) are retried with exponential backoff. In-flight
requests are bounded by a semaphore.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import requests

API_KEY_ENV = "NEEDFORGE_API_KEY"

RETRYABLE_STATUS = {429, 500, 502, 503, 504}


class TransportError(RuntimeError):
    pass


class ProtocolError(RuntimeError):
    pass


@dataclass(frozen=True)
class LlmRequest:
    model: str
    user_prompt: str
    system_prompt: str = ""
    temperature: float = 0.0
    max_tokens: int = 2048
    reasoning_effort: str | None = None

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")
        if self.reasoning_effort not in (None, "low", "medium", "high"):
            raise ValueError(f"bad reasoning_effort {self.reasoning_effort!r}")

    def cache_key(self) -> str:
        payload = json.dumps(
            {
                "model": self.model,
                "system_prompt": self.system_prompt,
                "user_prompt": self.user_prompt,
                "temperature": self.temperature,
                "max_tokens": self.max_tokens,
                "reasoning_effort": self.reasoning_effort,
            },
            sort_keys=True,
            ensure_ascii=False,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class ResponseCache:
    """Write-once content-addressed cache; one JSON file per request digest."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def _path(self, key: str) -> Path:
        return self.root / f"{key}.json"

    def get(self, key: str) -> str | None:
        p = self._path(key)
        if not p.is_file():
            return None
        return json.loads(p.read_text(encoding="utf-8"))["response"]

    def put(self, key: str, response: str) -> None:
        with self._lock:
            p = self._path(key)
            if p.exists():
                return
            tmp = p.with_suffix(".tmp")
            tmp.write_text(json.dumps({"response": response}, ensure_ascii=False),
                           encoding="utf-8")
            tmp.replace(p)


class LlmGateway:
    def __init__(
        self,
        base_url: str,
        cache_dir: str | Path | None = None,
        api_key: str | None = None,
        sidecar_url: str | None = None,
        max_in_flight: int = 4,
        max_retries: int = 3,
        backoff_base: float = 0.5,
        timeout: float = 120.0,
        session: requests.Session | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.base_url = base_url.rstrip("/")
        self.sidecar_url = sidecar_url.rstrip("/") if sidecar_url else None
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV, "")
        self.cache = ResponseCache(cache_dir) if cache_dir else None
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        self.timeout = timeout
        self.session = session or requests.Session()
        self._sem = threading.Semaphore(max_in_flight)
        self._sleep = sleep

    def _post_with_retries(self, url: str, body: dict) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last_error = "no attempt made"
        for attempt in range(self.max_retries + 1):
            if attempt:
                self._sleep(self.backoff_base * 2 ** (attempt - 1))
            try:
                with self._sem:
                    resp = self.session.post(url, json=body, headers=headers,
                                             timeout=self.timeout)
            except requests.RequestException as e:
                last_error = f"transport failure: {e}"
                continue
            if resp.status_code in RETRYABLE_STATUS:
                last_error = f"status {resp.status_code}"
                continue
            if resp.status_code != 200:
                raise TransportError(f"endpoint returned status {resp.status_code}")
            try:
                return resp.json()
            except ValueError as e:
                raise ProtocolError(f"non-JSON endpoint reply: {e}") from e
        raise TransportError(f"retries exhausted; last error: {last_error}")

    def complete(self, req: LlmRequest) -> str:
        """Return the assistant message text, served from cache when possible."""
        key = req.cache_key()
        if self.cache is not None:
            cached = self.cache.get(key)
            if cached is not None:
                return cached
        messages = []
        if req.system_prompt:
            messages.append({"role": "system", "content": req.system_prompt})
        messages.append({"role": "user", "content": req.user_prompt})
        body: dict = {
            "model": req.model,
            "messages": messages,
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        }
        if req.reasoning_effort is not None:
            body["reasoning_effort"] = req.reasoning_effort
        data = self._post_with_retries(f"{self.base_url}/v1/chat/completions", body)
        try:
            text = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as e:
            raise ProtocolError(f"malformed chat completion response: {e}") from e
        if not isinstance(text, str):
            raise ProtocolError("assistant message content is not text")
        if self.cache is not None:
            self.cache.put(key, text)
        return text

    def embed_tokens(self, text: str) -> list[tuple[str, list[float]]]:
        """Fetch token-level embeddings from the sidecar, one vector per token."""
        if not self.sidecar_url:
            raise TransportError("no sidecar configured")
        data = self._post_with_retries(f"{self.sidecar_url}/embed-tokens", {"text": text})
        tokens = data.get("tokens")
        vectors = data.get("vectors")
        if not isinstance(tokens, list) or not isinstance(vectors, list):
            raise ProtocolError("sidecar reply missing tokens/vectors")
        if len(tokens) != len(vectors):
            raise ProtocolError(
                f"token/vector misalignment: {len(tokens)} vs {len(vectors)}"
            )
        dims = {len(v) for v in vectors}
        if len(dims) > 1:
            raise ProtocolError(f"inconsistent vector dimensions: {sorted(dims)}")
        return list(zip(tokens, vectors))
