"""Chat-completion backends: live HTTP, deterministic replay, and recording.

Every backend exposes one method, ``complete(request) -> response``. The
replay backend answers from a store keyed by a fingerprint of the prompts,
which makes whole pipeline runs reproducible offline; the recording backend
wraps a live backend and captures such a store.
"""

from __future__ import annotations

import hashlib
import json
import logging
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol

import requests

from .errors import (
    AuthMissing,
    ConfigError,
    MalformedResponse,
    RateLimited,
    ReplayMiss,
)

logger = logging.getLogger(__name__)

DEFAULT_MODEL_ID = "llama3.3-70b-versatile"
DEFAULT_MAX_TOKENS = 4096
DEFAULT_RETRY_MAX = 5
API_KEY_ENV_VAR = "FSMFLOW_API_KEY"

_RETRYABLE_STATUS = frozenset({429, 500, 502, 503, 504})


@dataclass(frozen=True)
class CompletionRequest:
    system_prompt: str
    user_prompt: str
    model_id: str = DEFAULT_MODEL_ID
    max_tokens: int = DEFAULT_MAX_TOKENS
    temperature: float = 0.0

    def __post_init__(self):
        if not self.system_prompt or not self.user_prompt:
            raise ValueError("prompts must be non-empty")
        if not 0.0 <= self.temperature <= 1.0:
            raise ValueError(f"temperature out of range: {self.temperature}")
        if self.max_tokens <= 0:
            raise ValueError(f"max_tokens must be positive: {self.max_tokens}")


@dataclass(frozen=True)
class TokenUsage:
    prompt: int = 0
    completion: int = 0

    def __post_init__(self):
        if self.prompt < 0 or self.completion < 0:
            raise ValueError("token counts must be non-negative")


@dataclass(frozen=True)
class CompletionResponse:
    text: str
    model_id: str
    token_usage: TokenUsage = TokenUsage()
    latency_ms: int = 0


def fingerprint(req: CompletionRequest) -> str:
    """Stable hash of the request identity.

    Depends only on the prompts and model id; temperature, token limits and
    timing never change the fingerprint, so a store recorded once replays
    under any sampling settings.
    """
    payload = json.dumps(
        [req.system_prompt, req.user_prompt, req.model_id],
        ensure_ascii=True,
        separators=(",", ":"),
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class ChatBackend(Protocol):
    def complete(self, req: CompletionRequest) -> CompletionResponse: ...


@dataclass
class ReplayStore:
    """Recorded responses keyed by request fingerprint.

    On disk: a JSON array of ``{fingerprint, request:{system,user,model},
    response:{text,usage}}`` objects.
    """

    entries: dict[str, dict] = field(default_factory=dict)

    @classmethod
    def load(cls, path: str | Path) -> "ReplayStore":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except ValueError as exc:
            raise ConfigError(f"replay store {path} is not valid JSON: {exc}") from exc
        if not isinstance(raw, list):
            raise ConfigError(f"replay store {path} is not a JSON array")
        entries = {}
        for i, item in enumerate(raw):
            try:
                entries[item["fingerprint"]] = item
            except (TypeError, KeyError) as exc:
                raise ConfigError(
                    f"replay store {path}: entry {i} lacks a fingerprint"
                ) from exc
        return cls(entries=entries)

    def save(self, path: str | Path) -> None:
        items = [self.entries[fp] for fp in self.entries]
        Path(path).write_text(
            json.dumps(items, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
        )

    def put(self, req: CompletionRequest, resp: CompletionResponse) -> str:
        fp = fingerprint(req)
        self.entries[fp] = {
            "fingerprint": fp,
            "request": {
                "system": req.system_prompt,
                "user": req.user_prompt,
                "model": req.model_id,
            },
            "response": {
                "text": resp.text,
                "usage": {
                    "prompt": resp.token_usage.prompt,
                    "completion": resp.token_usage.completion,
                },
            },
        }
        return fp

    def response_for(self, fp: str) -> CompletionResponse | None:
        item = self.entries.get(fp)
        if item is None:
            return None
        usage = item["response"].get("usage", {})
        return CompletionResponse(
            text=item["response"]["text"],
            model_id=item["request"]["model"],
            token_usage=TokenUsage(
                prompt=int(usage.get("prompt", 0)),
                completion=int(usage.get("completion", 0)),
            ),
            latency_ms=0,
        )

    def __len__(self) -> int:
        return len(self.entries)


class ReplayBackend:
    """Deterministic stand-in that answers from a recorded store."""

    def __init__(self, store: ReplayStore):
        self.store = store

    def complete(self, req: CompletionRequest) -> CompletionResponse:
        resp = self.store.response_for(fingerprint(req))
        if resp is None:
            raise ReplayMiss(fingerprint(req))
        return resp


class HttpChatBackend:
    """Live backend speaking the common chat-completions JSON shape.

    Retries HTTP 429/5xx and transport failures with exponential backoff
    (1 s, doubling) up to `retry_max` attempts, then raises RateLimited.
    Safe to call from multiple threads; each call is independent.
    """

    def __init__(
        self,
        endpoint_url: str,
        api_key: str | None,
        *,
        retry_max: int = DEFAULT_RETRY_MAX,
        timeout_s: float = 120.0,
        session: requests.Session | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if not api_key:
            raise AuthMissing(
                f"no API credential; set the {API_KEY_ENV_VAR} environment variable"
            )
        self.endpoint_url = endpoint_url
        self._api_key = api_key
        self.retry_max = retry_max
        self.timeout_s = timeout_s
        self._session = session or requests.Session()
        self._sleep = sleep

    def complete(self, req: CompletionRequest) -> CompletionResponse:
        body = {
            "model": req.model_id,
            "messages": [
                {"role": "system", "content": req.system_prompt},
                {"role": "user", "content": req.user_prompt},
            ],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        }
        headers = {
            "Authorization": f"Bearer {self._api_key}",
            "Content-Type": "application/json",
        }

        delay = 1.0
        last_failure = "no attempt made"
        for attempt in range(1, self.retry_max + 1):
            try:
                started = time.monotonic()
                http_resp = self._session.post(
                    self.endpoint_url, json=body, headers=headers, timeout=self.timeout_s
                )
                latency_ms = int((time.monotonic() - started) * 1000)
            except requests.RequestException as exc:
                last_failure = f"transport error: {exc}"
                logger.warning("attempt %d/%d failed: %s", attempt, self.retry_max, exc)
            else:
                if http_resp.status_code in (401, 403):
                    raise AuthMissing(
                        f"endpoint rejected the credential (HTTP {http_resp.status_code})"
                    )
                if http_resp.status_code in _RETRYABLE_STATUS:
                    last_failure = f"HTTP {http_resp.status_code}"
                    logger.warning(
                        "attempt %d/%d got %s", attempt, self.retry_max, last_failure
                    )
                else:
                    return self._parse(http_resp, req, latency_ms)
            if attempt < self.retry_max:
                self._sleep(delay)
                delay *= 2
        raise RateLimited(
            f"retry budget exhausted after {self.retry_max} attempts ({last_failure})"
        )

    @staticmethod
    def _parse(
        http_resp: requests.Response, req: CompletionRequest, latency_ms: int
    ) -> CompletionResponse:
        if http_resp.status_code != 200:
            raise MalformedResponse(
                f"HTTP {http_resp.status_code}: {http_resp.text[:200]}"
            )
        try:
            data = http_resp.json()
        except ValueError as exc:
            raise MalformedResponse(f"response body is not JSON: {exc}") from exc
        try:
            text = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise MalformedResponse(
                "response JSON lacks choices[0].message.content"
            ) from exc
        if not isinstance(text, str):
            raise MalformedResponse("completion content is not a string")
        usage = data.get("usage") or {}
        return CompletionResponse(
            text=text,
            model_id=str(data.get("model", req.model_id)),
            token_usage=TokenUsage(
                prompt=int(usage.get("prompt_tokens", 0)),
                completion=int(usage.get("completion_tokens", 0)),
            ),
            latency_ms=latency_ms,
        )


class RecordingBackend:
    """Wraps a live backend, persisting every response to a replay store."""

    def __init__(self, live: ChatBackend, store_path: str | Path):
        self.live = live
        self.store_path = Path(store_path)
        # Extend an existing store rather than clobbering earlier sessions.
        self.store = (
            ReplayStore.load(self.store_path) if self.store_path.exists() else ReplayStore()
        )
        self._lock = threading.Lock()
        # Fail fast before any live call if the path cannot be written.
        try:
            self.store.save(self.store_path)
        except OSError as exc:
            raise OSError(f"replay store path not writable: {exc}") from exc

    def complete(self, req: CompletionRequest) -> CompletionResponse:
        resp = self.live.complete(req)
        with self._lock:
            self.store.put(req, resp)
            self.store.save(self.store_path)
        return resp


def record_mode(live_backend: ChatBackend, store_path: str | Path) -> RecordingBackend:
    """Wrap `live_backend` so the session is captured for later replay."""
    return RecordingBackend(live_backend, store_path)
