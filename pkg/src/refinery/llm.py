"""Chat-completion backends.

Two implementations share one ``complete(request)`` contract:

* :class:`OpenAICompatibleBackend` talks to any ``/chat/completions`` endpoint.
* :class:`ScriptedBackend` replays canned responses keyed by request tag, so a
  whole refinement episode can be driven deterministically in tests.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Protocol, Sequence

import httpx

log = logging.getLogger(__name__)

API_KEY_ENV = "REFINERY_API_KEY"
REPAIR_NOTE = "Return only the JSON object."


class BackendError(RuntimeError):
    """The backend could not produce a usable response."""


class ScriptExhausted(BackendError):
    pass


class ParseError(ValueError):
    """Model output did not match the expected format."""


@dataclass(frozen=True)
class ChatRequest:
    system_prompt: str
    user_prompt: str
    tag: str
    temperature: float = 0.0
    max_output_tokens: int = 512
    # Sample key; lets one script hold separate responses per sample.
    scope: str = ""

    def __post_init__(self) -> None:
        if not self.system_prompt.strip() or not self.user_prompt.strip():
            raise ValueError("prompts must be non-empty")
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")

    def with_user_note(self, note: str) -> ChatRequest:
        return ChatRequest(
            system_prompt=self.system_prompt,
            user_prompt=f"{self.user_prompt}\n\n{note}",
            tag=self.tag,
            temperature=self.temperature,
            max_output_tokens=self.max_output_tokens,
            scope=self.scope,
        )

    def digest(self) -> str:
        payload = json.dumps(
            [self.system_prompt, self.user_prompt, self.tag, self.temperature,
             self.max_output_tokens, self.scope],
            ensure_ascii=False,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class ChatResponse:
    text: str
    usage: tuple[int, int] | None = None


class Backend(Protocol):
    def complete(self, request: ChatRequest) -> ChatResponse: ...


class ScriptedBackend:
    """Replays canned responses per tag, in order.

    Script keys are tags such as ``"planner#1"``, optionally prefixed by a
    sample scope (``"u1|i1/planner#1"``). A key ending in ``#*`` is a default
    returned forever once the exact list is missing or used up. Lookup order:
    scoped exact, exact, scoped default, default.
    """

    def __init__(self, script: Mapping[str, Sequence[str] | str]):
        self._queues: dict[str, list[str]] = {}
        self._defaults: dict[str, str] = {}
        for key, value in script.items():
            if key.endswith("#*"):
                if not isinstance(value, str):
                    if len(value) != 1:
                        raise ValueError(f"default entry {key!r} needs exactly one response")
                    value = value[0]
                self._defaults[key] = value
            else:
                self._queues[key] = [value] if isinstance(value, str) else list(value)
        self._lock = threading.Lock()
        self.calls: list[ChatRequest] = []

    @classmethod
    def from_file(cls, path: str | Path) -> ScriptedBackend:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise BackendError(f"cannot read script {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise BackendError(f"script {path} must be a JSON object")
        return cls(data)

    def complete(self, request: ChatRequest) -> ChatResponse:
        role = request.tag.split("#", 1)[0]
        scoped = f"{request.scope}/" if request.scope else None
        with self._lock:
            self.calls.append(request)
            for key in ([scoped + request.tag] if scoped else []) + [request.tag]:
                queue = self._queues.get(key)
                if queue:
                    return ChatResponse(queue.pop(0))
            for key in ([f"{scoped}{role}#*"] if scoped else []) + [f"{role}#*"]:
                if key in self._defaults:
                    return ChatResponse(self._defaults[key])
        where = f"{request.scope}/{request.tag}" if request.scope else request.tag
        raise ScriptExhausted(f"script exhausted for tag {where!r}")

    def calls_for(self, tag: str) -> list[ChatRequest]:
        return [c for c in self.calls if c.tag == tag]


_TRANSIENT = {408, 409, 425, 429, 500, 502, 503, 504}


class OpenAICompatibleBackend:
    """POSTs to ``{base_url}/chat/completions`` with retry and rate limiting."""

    def __init__(
        self,
        base_url: str,
        model: str,
        *,
        api_key: str | None = None,
        api_key_env: str = API_KEY_ENV,
        max_attempts: int = 3,
        backoff_base: float = 1.0,
        backoff_max: float = 30.0,
        timeout: float = 60.0,
        max_in_flight: int = 4,
        requests_per_second: float | None = None,
        client: httpx.Client | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        self.url = base_url.rstrip("/") + "/chat/completions"
        self.model = model
        self.api_key = api_key if api_key is not None else os.environ.get(api_key_env)
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self.backoff_max = backoff_max
        self._client = client or httpx.Client(timeout=timeout)
        self._slots = threading.BoundedSemaphore(max_in_flight)
        self._min_interval = 1.0 / requests_per_second if requests_per_second else 0.0
        self._rate_lock = threading.Lock()
        self._next_start = 0.0
        self._sleep = sleep

    def _wait_for_rate(self) -> None:
        if not self._min_interval:
            return
        with self._rate_lock:
            now = time.monotonic()
            start = max(now, self._next_start)
            self._next_start = start + self._min_interval
        if start > now:
            self._sleep(start - now)

    def payload(self, request: ChatRequest) -> dict[str, Any]:
        return {
            "model": self.model,
            "messages": [
                {"role": "system", "content": request.system_prompt},
                {"role": "user", "content": request.user_prompt},
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        }

    def complete(self, request: ChatRequest) -> ChatResponse:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        body = self.payload(request)
        last_error = "no attempt made"
        for attempt in range(1, self.max_attempts + 1):
            self._wait_for_rate()
            with self._slots:
                try:
                    resp = self._client.post(self.url, json=body, headers=headers)
                except httpx.TransportError as exc:
                    last_error = f"transport error: {exc}"
                    resp = None
            if resp is not None:
                if resp.status_code == 200:
                    return self._parse(resp)
                last_error = f"HTTP {resp.status_code}: {resp.text[:200]}"
                if resp.status_code not in _TRANSIENT:
                    raise BackendError(last_error)
            if attempt < self.max_attempts:
                delay = min(self.backoff_max, self.backoff_base * 2 ** (attempt - 1))
                log.warning("%s (tag %s); retry %d in %.2fs", last_error, request.tag, attempt, delay)
                self._sleep(delay)
        raise BackendError(f"giving up after {self.max_attempts} attempts: {last_error}")

    @staticmethod
    def _parse(resp: httpx.Response) -> ChatResponse:
        try:
            data = resp.json()
            text = data["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"malformed completion payload: {exc}") from exc
        if not isinstance(text, str):
            raise BackendError("completion content is not a string")
        usage = data.get("usage") or {}
        pair = None
        if "prompt_tokens" in usage and "completion_tokens" in usage:
            pair = (int(usage["prompt_tokens"]), int(usage["completion_tokens"]))
        return ChatResponse(text=text, usage=pair)

    def close(self) -> None:
        self._client.close()


@dataclass
class CachingBackend:
    """Memoizes responses of an inner backend by request digest."""

    inner: Backend
    _cache: dict[str, ChatResponse] = field(default_factory=dict)
    _lock: threading.Lock = field(default_factory=threading.Lock)

    def complete(self, request: ChatRequest) -> ChatResponse:
        key = request.digest()
        with self._lock:
            hit = self._cache.get(key)
        if hit is not None:
            return hit
        resp = self.inner.complete(request)
        with self._lock:
            self._cache[key] = resp
        return resp


_decoder = json.JSONDecoder()


def extract_json_object(text: str, required_field: str, expected_type: type | tuple | None = None):
    """Return ``required_field`` from the first JSON object embedded in ``text``.

    Surrounding prose and code fences are ignored.
    """
    pos = text.find("{")
    obj = None
    while pos != -1:
        try:
            candidate, _ = _decoder.raw_decode(text, pos)
        except json.JSONDecodeError:
            pos = text.find("{", pos + 1)
            continue
        if isinstance(candidate, dict):
            obj = candidate
            break
        pos = text.find("{", pos + 1)
    if obj is None:
        raise ParseError("no JSON object found in model output")
    if required_field not in obj:
        raise ParseError(f"JSON object lacks field {required_field!r}")
    value = obj[required_field]
    if expected_type is not None:
        # bool is an int subclass; never accept it for numeric fields
        if isinstance(value, bool) and bool not in _as_tuple(expected_type):
            raise ParseError(f"field {required_field!r} has wrong type bool")
        if not isinstance(value, expected_type):
            raise ParseError(f"field {required_field!r} has wrong type {type(value).__name__}")
    return value


def _as_tuple(t) -> tuple:
    return t if isinstance(t, tuple) else (t,)


def call_parsed(
    backend: Backend,
    request: ChatRequest,
    parse: Callable[[str], Any],
    max_attempts: int = 3,
    repair_note: str = REPAIR_NOTE,
):
    """Call ``backend`` until ``parse`` accepts the output.

    Each retry re-issues the original request with ``repair_note`` appended.
    """
    if max_attempts < 1:
        raise ValueError("max_attempts must be >= 1")
    current = request
    error: Exception | None = None
    for _ in range(max_attempts):
        text = backend.complete(current).text
        try:
            if not text.strip():
                raise ParseError("empty model output")
            return parse(text)
        except ParseError as exc:
            error = exc
            log.debug("unparseable output for %s: %s", request.tag, exc)
            current = request.with_user_note(repair_note)
    raise ParseError(f"{request.tag}: malformed output after {max_attempts} attempts: {error}")


def call_with_repair(
    backend: Backend,
    request: ChatRequest,
    required_field: str,
    max_attempts: int = 3,
    *,
    expected_type: type | tuple | None = None,
    validate: Callable[[Any], Any] | None = None,
):
    """JSON-field flavour of :func:`call_parsed`.

    ``validate`` may transform the value or raise :class:`ParseError`, which
    counts as a malformed reply and triggers another attempt.
    """

    def parse(text: str):
        value = extract_json_object(text, required_field, expected_type)
        return validate(value) if validate else value

    return call_parsed(backend, request, parse, max_attempts)
