"""Uniform chat-completion access: remote OpenAI-compatible HTTP or offline mock.

Every other module talks to an LLM exclusively through :class:`Gateway`,
which layers retry, rate limiting, an on-disk response cache, and token
budgeting over a pluggable backend. The mock backend is fully deterministic
so the whole pipeline can run (and be byte-reproduced) offline.
"""

from __future__ import annotations

import json
import math
import os
import re
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

import httpx

from .errors import (
    BackendUnavailable,
    BudgetExceeded,
    InvalidRequest,
    TransientBackendError,
)
from .jsonl import canonical_json, sha256_text

ROLES = ("system", "user", "assistant")

#: Test-only directive: a message containing ``[[echo:...]]`` makes the mock
#: backend reply with exactly the bracketed payload.
_ECHO_DIRECTIVE = re.compile(r"\[\[echo:(.*?)\]\]", re.DOTALL)


@dataclass(frozen=True)
class ChatRequest:
    model: str
    messages: tuple[tuple[str, str], ...]  # (role, content) pairs
    temperature: float = 0.0
    max_tokens: int = 1024
    seed: int | None = None
    template_id: str = "adhoc"

    def __post_init__(self) -> None:
        if not self.messages:
            raise InvalidRequest("messages must be non-empty")
        for role, _ in self.messages:
            if role not in ROLES:
                raise InvalidRequest(f"unknown role {role!r}")
        if self.messages[-1][0] != "user":
            raise InvalidRequest("last message must have role 'user'")
        if self.temperature < 0:
            raise InvalidRequest("temperature must be >= 0")
        if self.max_tokens <= 0:
            raise InvalidRequest("max_tokens must be positive")

    @classmethod
    def build(
        cls,
        model: str,
        user: str,
        system: str | None = None,
        *,
        temperature: float = 0.0,
        max_tokens: int = 2048,
        seed: int | None = None,
        template_id: str = "adhoc",
    ) -> "ChatRequest":
        msgs: list[tuple[str, str]] = []
        if system:
            msgs.append(("system", system))
        msgs.append(("user", user))
        return cls(
            model=model,
            messages=tuple(msgs),
            temperature=temperature,
            max_tokens=max_tokens,
            seed=seed,
            template_id=template_id,
        )

    def cache_key(self) -> str:
        payload = {
            "template_id": self.template_id,
            "messages": [list(m) for m in self.messages],
            "model": self.model,
            "temperature": self.temperature,
            "seed": self.seed,
        }
        return sha256_text(canonical_json(payload))

    def request_hash(self) -> str:
        return self.cache_key()

    def joined_content(self) -> str:
        return "\n".join(content for _, content in self.messages)


@dataclass(frozen=True)
class ChatResponse:
    content: str
    prompt_tokens: int
    completion_tokens: int
    backend: str
    cached: bool = False


class Backend:
    """Minimal provider interface; handles are shareable and immutable."""

    name: str = "backend"

    def complete_raw(self, req: ChatRequest) -> tuple[str, int, int]:
        """Return (content, prompt_tokens, completion_tokens)."""
        raise NotImplementedError


def _approx_tokens(text: str) -> int:
    return max(1, math.ceil(len(text) / 4))


#: A script entry is either a canned string or a callable over the request.
ScriptFill = "str | Callable[[ChatRequest], str]"
ResponseScript = Mapping[str, Any]


class MockBackend(Backend):
    """Deterministic offline backend.

    Resolution order for a request:

    1. an ``[[echo:...]]`` directive anywhere in the messages,
    2. a script entry keyed by the request's template id,
    3. a registered handler for the template id (the simulators in
       :mod:`prosemill.mocksim` cover every pipeline template),
    4. a generic pseudo-response derived from (seed, request hash).
    """

    def __init__(
        self,
        seed: int = 0,
        script: ResponseScript | None = None,
        handlers: Mapping[str, Callable[["MockBackend", ChatRequest], str]] | None = None,
        name: str | None = None,
    ):
        self.seed = seed
        self.script = dict(script or {})
        if handlers is None:
            from . import mocksim  # default simulators; late import avoids a cycle

            handlers = mocksim.default_handlers()
        self.handlers = dict(handlers)
        self.name = name or f"mock@{seed}"
        self.calls: list[ChatRequest] = []  # inspection hook for tests
        self._lock = threading.Lock()

    def digest(self, *parts: object) -> str:
        return sha256_text("|".join(str(p) for p in (self.seed, *parts)))

    def complete_raw(self, req: ChatRequest) -> tuple[str, int, int]:
        with self._lock:
            self.calls.append(req)
        content = self._resolve(req)
        return content, _approx_tokens(req.joined_content()), _approx_tokens(content)

    def _resolve(self, req: ChatRequest) -> str:
        joined = req.joined_content()
        echo = _ECHO_DIRECTIVE.search(joined)
        if echo:
            return echo.group(1)
        fill = self.script.get(req.template_id)
        if fill is not None:
            return fill(req) if callable(fill) else str(fill)
        handler = self.handlers.get(req.template_id)
        if handler is not None:
            return handler(self, req)
        return f"mock-response {self.digest(req.request_hash())[:24]}"


class OpenAICompatibleBackend(Backend):
    """Chat-completions over HTTP (POST {base_url}/v1/chat/completions)."""

    TRANSIENT_STATUS = frozenset({408, 429, 500, 502, 503, 504})

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key_env: str = "OPENAI_API_KEY",
        timeout: float = 60.0,
        name: str | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key_env = api_key_env
        self.timeout = timeout
        self.name = name or f"openai:{model}"
        self._client = httpx.Client(timeout=timeout)

    def complete_raw(self, req: ChatRequest) -> tuple[str, int, int]:
        api_key = os.environ.get(self.api_key_env, "")
        if not api_key:
            raise BackendUnavailable(
                f"credential missing: set the {self.api_key_env} environment variable"
            )
        body: dict[str, Any] = {
            "model": req.model or self.model,
            "messages": [{"role": r, "content": c} for r, c in req.messages],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        }
        if req.seed is not None:
            body["seed"] = req.seed
        try:
            resp = self._client.post(
                f"{self.base_url}/v1/chat/completions",
                json=body,
                headers={"Authorization": f"Bearer {api_key}"},
            )
        except httpx.HTTPError as exc:
            raise TransientBackendError(f"connection failure: {exc}") from exc
        if resp.status_code in self.TRANSIENT_STATUS:
            raise TransientBackendError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        if resp.status_code != 200:
            raise BackendUnavailable(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            data = resp.json()
            content = data["choices"][0]["message"]["content"] or ""
            usage = data.get("usage") or {}
        except (KeyError, IndexError, TypeError, json.JSONDecodeError) as exc:
            raise BackendUnavailable(f"malformed completion payload: {exc}") from exc
        return (
            content,
            int(usage.get("prompt_tokens", _approx_tokens(req.joined_content()))),
            int(usage.get("completion_tokens", _approx_tokens(content))),
        )


@dataclass(frozen=True)
class GatewayLimits:
    rpm: int = 0  # 0 = unlimited
    max_in_flight: int = 8
    max_retries: int = 3
    backoff_base: float = 0.5
    backoff_multiplier: float = 2.0
    max_total_tokens: int = 0  # 0 = unlimited


@dataclass
class GatewayStats:
    requests: int = 0
    cache_hits: int = 0
    retries: int = 0
    prompt_tokens: int = 0
    completion_tokens: int = 0
    in_flight_peak: int = 0

    @property
    def total_tokens(self) -> int:
        return self.prompt_tokens + self.completion_tokens


class _DiskCache:
    """Content-addressed response cache; one JSON file per key."""

    def __init__(self, directory: str | Path):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def _path(self, key: str) -> Path:
        return self.dir / f"{key}.json"

    def get(self, key: str) -> dict[str, Any] | None:
        path = self._path(key)
        with self._lock:
            if not path.exists():
                return None
            return json.loads(path.read_text(encoding="utf-8"))

    def put(self, key: str, value: dict[str, Any]) -> None:
        path = self._path(key)
        tmp = path.with_suffix(".tmp")
        with self._lock:
            tmp.write_text(json.dumps(value, ensure_ascii=False), encoding="utf-8")
            os.replace(tmp, path)


class Gateway:
    """Thread-safe completion front door with retry/limits/cache/budget."""

    def __init__(
        self,
        backend: Backend,
        limits: GatewayLimits | None = None,
        cache_dir: str | Path | None = None,
        cache_enabled: bool = False,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.backend = backend
        self.limits = limits or GatewayLimits()
        self.cache = _DiskCache(cache_dir) if (cache_enabled and cache_dir) else None
        self.stats = GatewayStats()
        self._clock = clock
        self._sleep = sleep
        self._state_lock = threading.Lock()
        self._in_flight = 0
        self._slots = threading.BoundedSemaphore(max(1, self.limits.max_in_flight))
        self._recent: deque[float] = deque()  # request timestamps for rpm window

    # -- internals -----------------------------------------------------

    def _respect_rpm(self) -> None:
        if self.limits.rpm <= 0:
            return
        while True:
            with self._state_lock:
                now = self._clock()
                while self._recent and now - self._recent[0] >= 60.0:
                    self._recent.popleft()
                if len(self._recent) < self.limits.rpm:
                    self._recent.append(now)
                    return
                wait = 60.0 - (now - self._recent[0])
            self._sleep(max(wait, 0.001))

    def _charge(self, prompt_tokens: int, completion_tokens: int) -> None:
        with self._state_lock:
            self.stats.prompt_tokens += prompt_tokens
            self.stats.completion_tokens += completion_tokens

    def _check_budget(self) -> None:
        cap = self.limits.max_total_tokens
        if cap and self.stats.total_tokens >= cap:
            raise BudgetExceeded(
                f"token budget exhausted: {self.stats.total_tokens} >= {cap}"
            )

    def _call_with_retry(self, req: ChatRequest) -> tuple[str, int, int]:
        delay = self.limits.backoff_base
        last: Exception | None = None
        for attempt in range(self.limits.max_retries + 1):
            try:
                return self.backend.complete_raw(req)
            except TransientBackendError as exc:
                last = exc
                if attempt == self.limits.max_retries:
                    break
                with self._state_lock:
                    self.stats.retries += 1
                self._sleep(delay)
                delay *= self.limits.backoff_multiplier
        raise BackendUnavailable(
            f"backend {self.backend.name!r} failed after "
            f"{self.limits.max_retries + 1} attempts: {last}"
        ) from last

    # -- public API ------------------------------------------------------

    def complete(self, req: ChatRequest) -> ChatResponse:
        self._check_budget()

        if self.cache is not None:
            hit = self.cache.get(req.cache_key())
            if hit is not None:
                with self._state_lock:
                    self.stats.cache_hits += 1
                return ChatResponse(
                    content=hit["content"],
                    prompt_tokens=int(hit["prompt_tokens"]),
                    completion_tokens=int(hit["completion_tokens"]),
                    backend=hit.get("backend", self.backend.name),
                    cached=True,
                )

        self._respect_rpm()
        self._slots.acquire()
        try:
            with self._state_lock:
                self._in_flight += 1
                self.stats.in_flight_peak = max(self.stats.in_flight_peak, self._in_flight)
                self.stats.requests += 1
            content, p_tok, c_tok = self._call_with_retry(req)
        finally:
            with self._state_lock:
                self._in_flight -= 1
            self._slots.release()

        self._charge(p_tok, c_tok)
        if self.cache is not None:
            self.cache.put(
                req.cache_key(),
                {
                    "content": content,
                    "prompt_tokens": p_tok,
                    "completion_tokens": c_tok,
                    "backend": self.backend.name,
                },
            )
        return ChatResponse(content, p_tok, c_tok, self.backend.name, cached=False)


def mock_backend(seed: int = 0, script: ResponseScript | None = None) -> MockBackend:
    """Deterministic offline backend handle (see :class:`MockBackend`)."""
    return MockBackend(seed=seed, script=script)


def complete(req: ChatRequest, backend: Backend | Gateway) -> ChatResponse:
    """One-shot completion; wraps a bare backend in a default gateway."""
    gateway = backend if isinstance(backend, Gateway) else Gateway(backend)
    return gateway.complete(req)


def backend_from_config(config: Mapping[str, Any], seed: int = 0) -> Backend:
    """Build a backend from ``[backend]`` config keys."""
    kind = config.get("kind", "mock")
    if kind == "mock":
        return MockBackend(seed=int(config.get("seed", seed)),
                           name=config.get("name") or None)
    if kind == "openai_compatible":
        base_url = config.get("base_url", "")
        if not base_url:
            raise InvalidRequest("backend.base_url is required for openai_compatible")
        return OpenAICompatibleBackend(
            base_url=base_url,
            model=config.get("model", ""),
            api_key_env=config.get("api_key_env", "OPENAI_API_KEY"),
        )
    raise InvalidRequest(f"unknown backend.kind {kind!r}")


def gateway_from_config(config: Mapping[str, Any], seed: int = 0) -> Gateway:
    """Build a gateway from ``backend``/``limits``/``cache`` config sections."""
    limits_cfg = config.get("limits", {})
    cache_cfg = config.get("cache", {})
    limits = GatewayLimits(
        rpm=int(limits_cfg.get("rpm", 0)),
        max_in_flight=int(limits_cfg.get("max_in_flight", 8)),
        max_retries=int(limits_cfg.get("max_retries", 3)),
        backoff_base=float(limits_cfg.get("backoff_base", 0.5)),
        backoff_multiplier=float(limits_cfg.get("backoff_multiplier", 2.0)),
        max_total_tokens=int(limits_cfg.get("max_total_tokens", 0)),
    )
    return Gateway(
        backend_from_config(config.get("backend", {}), seed=seed),
        limits=limits,
        cache_dir=cache_cfg.get("dir"),
        cache_enabled=bool(cache_cfg.get("enabled", False)),
    )
