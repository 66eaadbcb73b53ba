"""Completion gateway: one system prompt plus one user prompt in, text out.

Backends are registered under an alias; each model name maps to one alias.
The gateway owns retries with exponential backoff and a per-alias cap on
in-flight requests, so it can be shared by any number of worker threads.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterable, Mapping, Protocol

import httpx

from .errors import (
    ConfigError,
    DuplicateFingerprint,
    EmptyCompletion,
    EndpointError,
    GatewayError,
    GatewayTimeout,
    RateLimited,
    ScriptMiss,
    UnknownModel,
)

logger = logging.getLogger(__name__)

DEFAULT_TEMPERATURE = 0.0
DEFAULT_MAX_TOKENS = 1024
DEFAULT_CONCURRENCY_CAP = 4
DEFAULT_RETRYABLE = frozenset({"timeout", "rate_limit", "server_error", "connection", "empty"})


class Clock:
    """Wall-clock timestamps and a monotonic timer."""

    def now(self) -> str:
        return datetime.now(timezone.utc).isoformat(timespec="seconds")

    def monotonic(self) -> float:
        return time.monotonic()


class FixedClock(Clock):
    """A clock that never moves; makes stores byte-reproducible."""

    def __init__(self, stamp: str = "1970-01-01T00:00:00+00:00"):
        self.stamp = stamp

    def now(self) -> str:
        return self.stamp

    def monotonic(self) -> float:
        return 0.0


@dataclass(frozen=True)
class ModelId:
    name: str
    backend_alias: str

    def __post_init__(self) -> None:
        if not self.name:
            raise ConfigError("model name must be non-empty")


@dataclass(frozen=True)
class CompletionRequest:
    model: str
    system_prompt: str
    user_prompt: str
    temperature: float | None = None
    max_tokens: int | None = None

    def __post_init__(self) -> None:
        if not self.system_prompt or not self.user_prompt:
            raise ValueError("system and user prompts must be non-empty")
        if self.temperature is not None and self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens is not None and self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")


@dataclass(frozen=True)
class Completion:
    text: str
    attempts: int
    latency: float


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 5
    base_backoff: float = 1.0
    backoff_multiplier: float = 2.0
    retryable_statuses: frozenset[str] = DEFAULT_RETRYABLE

    def __post_init__(self) -> None:
        if self.max_attempts < 1:
            raise ConfigError("max_attempts must be >= 1")
        if self.backoff_multiplier <= 1:
            raise ConfigError("backoff_multiplier must be > 1")
        if self.base_backoff < 0:
            raise ConfigError("base_backoff must be >= 0")

    def delay(self, attempt: int) -> float:
        """Sleep before retry number ``attempt`` (1 = first retry)."""
        return self.base_backoff * self.backoff_multiplier ** (attempt - 1)

    @classmethod
    def from_dict(cls, data: Mapping | None) -> "RetryPolicy":
        data = dict(data or {})
        statuses = data.pop("retryable_statuses", None)
        policy = cls(**data)
        if statuses is not None:
            policy = cls(
                policy.max_attempts, policy.base_backoff, policy.backoff_multiplier, frozenset(statuses)
            )
        return policy


def request_fingerprint(request: CompletionRequest) -> str:
    payload = json.dumps([request.model, request.system_prompt, request.user_prompt], ensure_ascii=False)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class Backend(Protocol):
    def send(self, request: CompletionRequest, temperature: float, max_tokens: int) -> str: ...


class OpenAIBackend:
    """OpenAI-compatible ``/chat/completions`` client."""

    def __init__(
        self,
        base_url: str,
        api_key: str | None,
        timeout: float = 120.0,
        client: httpx.Client | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key
        self.client = client or httpx.Client(timeout=timeout)

    def send(self, request: CompletionRequest, temperature: float, max_tokens: int) -> str:
        body = {
            "model": request.model,
            "messages": [
                {"role": "system", "content": request.system_prompt},
                {"role": "user", "content": request.user_prompt},
            ],
            "temperature": temperature,
            "max_tokens": max_tokens,
        }
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        try:
            resp = self.client.post(f"{self.base_url}/chat/completions", json=body, headers=headers)
        except httpx.TimeoutException as exc:
            raise GatewayTimeout(str(exc) or "request timed out") from exc
        except httpx.TransportError as exc:
            raise EndpointError(str(exc) or type(exc).__name__, kind="connection") from exc
        if resp.status_code == 429:
            raise RateLimited(f"HTTP 429 from {self.base_url}")
        if resp.status_code >= 400:
            raise EndpointError(f"HTTP {resp.status_code}: {resp.text[:200]}", status=resp.status_code)
        try:
            content = resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise EndpointError(f"malformed completion payload: {exc}", kind="malformed") from exc
        return content or ""


class ScriptedBackend:
    """Deterministic backend answering from a fingerprint -> text table.

    Requests missing from the table go to ``responder`` when one is given,
    otherwise they raise :class:`ScriptMiss`.  ``calls`` counts every request
    that reached the backend; ``call_log`` optionally appends each request
    fingerprint to a file so counts survive across processes.
    """

    def __init__(
        self,
        script: Mapping[str, str] | Iterable[tuple[str, str]] | None = None,
        responder: Callable[[CompletionRequest], str] | None = None,
        call_log: str | Path | None = None,
    ):
        self.script = _unique_script(script or {})
        self.responder = responder
        self.call_log = Path(call_log) if call_log else None
        self.calls = 0
        self.fingerprints: list[str] = []
        self._lock = threading.Lock()

    def send(self, request: CompletionRequest, temperature: float, max_tokens: int) -> str:
        fp = request_fingerprint(request)
        with self._lock:
            self.calls += 1
            self.fingerprints.append(fp)
            if self.call_log is not None:
                with self.call_log.open("a", encoding="utf-8") as fh:
                    fh.write(fp + "\n")
        if fp in self.script:
            return self.script[fp]
        if self.responder is not None:
            return self.responder(request)
        raise ScriptMiss(f"no scripted response for {request.model} ({fp[:12]})")


def _unique_script(script) -> dict[str, str]:
    items = script.items() if isinstance(script, Mapping) else script
    out: dict[str, str] = {}
    for fp, text in items:
        if fp in out:
            raise DuplicateFingerprint(f"fingerprint registered twice: {fp}")
        out[fp] = text
    return out


def load_script_file(path: str | Path) -> dict[str, str]:
    """Read a JSON script object, rejecting duplicate keys."""
    text = Path(path).read_text(encoding="utf-8")
    return json.loads(text, object_pairs_hook=_unique_script)


def synthetic_debater(request: CompletionRequest) -> str:
    """Canned debate text derived from the model name and both prompts."""
    h = request_fingerprint(request)
    return f"[{request.model}] argument {h[:10]}: point {int(h[10:12], 16) % 7 + 1} stands."


def synthetic_judge(request: CompletionRequest) -> str:
    """Canned verdict derived from the prompts only.

    The model name is left out on purpose: two judge names routed to the same
    synthetic backend return identical verdicts.
    """
    h = hashlib.sha256((request.system_prompt + "\x00" + request.user_prompt).encode("utf-8")).digest()
    s1, s2 = 5 + h[0] % 5, 5 + h[1] % 5
    if s1 != s2:
        winner = 1 if s1 > s2 else 2
    else:
        winner = 1 + h[2] % 2
    return f"side1: [[{s1}]], side2: [[{s2}]], winner: [[{winner}]]"


SYNTHETIC = {"debater": synthetic_debater, "judge": synthetic_judge}


@dataclass
class BackendEntry:
    backend: Backend
    policy: RetryPolicy = field(default_factory=RetryPolicy)
    concurrency_cap: int = DEFAULT_CONCURRENCY_CAP
    temperature: float = DEFAULT_TEMPERATURE
    max_tokens: int = DEFAULT_MAX_TOKENS
    semaphore: threading.BoundedSemaphore = field(init=False)

    def __post_init__(self) -> None:
        if self.concurrency_cap < 1:
            raise ConfigError("concurrency_cap must be >= 1")
        self.semaphore = threading.BoundedSemaphore(self.concurrency_cap)


class Gateway:
    def __init__(
        self,
        clock: Clock | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.backends: dict[str, BackendEntry] = {}
        self.models: dict[str, ModelId] = {}
        self.model_overrides: dict[str, dict] = {}
        self.clock = clock or Clock()
        self.sleep = sleep

    def add_backend(self, alias: str, backend: Backend, **options) -> BackendEntry:
        entry = BackendEntry(backend, **options)
        self.backends[alias] = entry
        return entry

    def add_model(self, name: str, backend_alias: str, **overrides) -> ModelId:
        if name in self.models:
            raise ConfigError(f"model {name!r} configured twice")
        model = ModelId(name, backend_alias)
        self.models[name] = model
        self.model_overrides[name] = overrides
        return model

    def register_script(
        self,
        backend_alias: str,
        script: Mapping[str, str] | Iterable[tuple[str, str]],
        responder: Callable[[CompletionRequest], str] | None = None,
        **options,
    ) -> ScriptedBackend:
        backend = ScriptedBackend(script, responder)
        self.add_backend(backend_alias, backend, **options)
        return backend

    def resolve(self, model: str) -> BackendEntry:
        if model not in self.models:
            raise UnknownModel(f"model {model!r} is not configured")
        alias = self.models[model].backend_alias
        if alias not in self.backends:
            raise UnknownModel(f"model {model!r} uses unknown backend {alias!r}")
        return self.backends[alias]

    def complete(self, request: CompletionRequest) -> Completion:
        entry = self.resolve(request.model)
        overrides = self.model_overrides.get(request.model, {})
        temperature = request.temperature
        if temperature is None:
            temperature = overrides.get("temperature", entry.temperature)
        max_tokens = request.max_tokens or overrides.get("max_tokens", entry.max_tokens)
        policy = entry.policy
        start = self.clock.monotonic()
        attempt = 0
        while True:
            attempt += 1
            try:
                with entry.semaphore:
                    text = entry.backend.send(request, temperature, max_tokens)
                if not text or not text.strip():
                    raise EmptyCompletion(f"{request.model} returned an empty completion")
                return Completion(text, attempt, self.clock.monotonic() - start)
            except GatewayError as exc:
                if exc.kind not in policy.retryable_statuses or attempt >= policy.max_attempts:
                    raise
                delay = policy.delay(attempt)
                logger.warning(
                    "%s attempt %d/%d failed (%s); retrying in %.1fs",
                    request.model, attempt, policy.max_attempts, exc.kind, delay,
                )
                self.sleep(delay)

    @classmethod
    def from_config(
        cls,
        config: Mapping,
        env: Mapping[str, str] | None = None,
        clock: Clock | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ) -> "Gateway":
        """Build a gateway from a config document (see README for the layout).

        API keys are read from the environment variable each backend names;
        they are never written anywhere.
        """
        env = os.environ if env is None else env
        gw = cls(clock=clock, sleep=sleep)
        backends = config.get("backends") or {}
        if not isinstance(backends, Mapping) or not backends:
            raise ConfigError("config needs a non-empty 'backends' object")
        for alias, spec in backends.items():
            spec = dict(spec)
            kind = spec.pop("type", "openai")
            options = {
                "policy": RetryPolicy.from_dict(spec.pop("retry", None)),
                "concurrency_cap": int(spec.pop("concurrency_cap", DEFAULT_CONCURRENCY_CAP)),
                "temperature": float(spec.pop("temperature", DEFAULT_TEMPERATURE)),
                "max_tokens": int(spec.pop("max_tokens", DEFAULT_MAX_TOKENS)),
            }
            if kind == "openai":
                if "base_url" not in spec:
                    raise ConfigError(f"backend {alias!r}: base_url is required")
                key_env = spec.pop("key_env_var", None)
                api_key = env.get(key_env) if key_env else None
                if key_env and not api_key:
                    logger.warning("backend %s: environment variable %s is not set", alias, key_env)
                backend = OpenAIBackend(spec.pop("base_url"), api_key, float(spec.pop("timeout", 120.0)))
            elif kind == "scripted":
                script = load_script_file(spec.pop("script_file")) if "script_file" in spec else {}
                synthetic = spec.pop("synthetic", None)
                if synthetic is not None and synthetic not in SYNTHETIC:
                    raise ConfigError(f"backend {alias!r}: synthetic must be one of {sorted(SYNTHETIC)}")
                backend = ScriptedBackend(
                    script, SYNTHETIC.get(synthetic), call_log=spec.pop("call_log", None)
                )
            else:
                raise ConfigError(f"backend {alias!r}: unknown type {kind!r}")
            if spec:
                raise ConfigError(f"backend {alias!r}: unknown keys {sorted(spec)}")
            gw.add_backend(alias, backend, **options)
        models = config.get("models") or {}
        if not isinstance(models, Mapping) or not models:
            raise ConfigError("config needs a non-empty 'models' object")
        for name, spec in models.items():
            if isinstance(spec, str):
                spec = {"backend": spec}
            spec = dict(spec)
            alias = spec.pop("backend", None)
            if alias not in gw.backends:
                raise ConfigError(f"model {name!r}: backend {alias!r} is not defined")
            unknown = set(spec) - {"temperature", "max_tokens"}
            if unknown:
                raise ConfigError(f"model {name!r}: unknown keys {sorted(unknown)}")
            gw.add_model(name, alias, **spec)
        return gw


def config_digest(config: Mapping) -> str:
    """Digest of the parts of a config that change model behaviour."""
    backends = {}
    for alias, spec in (config.get("backends") or {}).items():
        backends[alias] = {k: v for k, v in dict(spec).items() if k != "call_log"}
    doc = {"backends": backends, "models": config.get("models") or {}}
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode("utf-8")).hexdigest()
