"""Completion backends: a deterministic latency simulator and an HTTP client.

Backends never retry. Retry policy lives in :mod:`parafan.executor`, so a
backend either returns a response or raises a :class:`BackendError` tagged
transient or permanent.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import random
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import httpx

from .clock import MonotonicClock

logger = logging.getLogger(__name__)

ENV_API_KEY = "PARAFAN_API_KEY"
ENV_API_BASE = "PARAFAN_API_BASE"
ENV_MODEL = "PARAFAN_MODEL"
DEFAULT_API_BASE = "https://api.openai.com/v1"
DEFAULT_MODEL = "gpt-4-1106-preview"

TRANSIENT_KINDS = ("rate_limited", "timeout", "server_error")
PERMANENT_KINDS = ("auth", "config", "malformed")


class BackendError(Exception):
    transient = False

    def __init__(self, kind: str, message: str = ""):
        super().__init__(f"{kind}: {message}" if message else kind)
        self.kind = kind


class TransientError(BackendError):
    transient = True


class PermanentError(BackendError):
    transient = False


@dataclass(frozen=True)
class CompletionRequest:
    user: str
    system: str = ""
    max_output_tokens: int | None = None
    request_tag: str = ""
    # how many answers the prompt asks for; lets the simulator size a
    # monolithic prompt's output relative to a single subtask's
    expected_items: int = 1

    def __post_init__(self):
        if not self.user:
            raise ValueError("request user text must be non-empty")


@dataclass(frozen=True)
class CompletionResponse:
    text: str
    prompt_tokens: int
    output_tokens: int
    backend_latency: float


class Backend(Protocol):
    def complete(self, request: CompletionRequest, timeout: float | None = None) -> CompletionResponse:
        ...


def count_tokens(text: str, reported: int | None = None) -> int:
    """Backend-reported usage wins; otherwise ceil(codepoints / 4).

    The estimate is a rough heuristic, not a tokenizer.
    """
    if reported is not None:
        return reported
    return math.ceil(len(text) / 4)


# --- simulator ------------------------------------------------------------

@dataclass(frozen=True)
class ScriptedFailure:
    call: int
    kind: str


@dataclass(frozen=True)
class SimulatorConfig:
    base_latency: float = 0.5
    token_rate: float = 100.0
    output_mode: str = "fixed"
    output_value: float = 50
    failure_script: tuple[ScriptedFailure, ...] = ()
    seed: int = 0
    # replayed in call order instead of generated text; used to script
    # extraction and judge backends
    responses: tuple[str, ...] = ()

    def __post_init__(self):
        if self.token_rate <= 0:
            raise ValueError("token_rate must be positive")
        if self.base_latency < 0:
            raise ValueError("base_latency must be non-negative")
        if self.output_mode not in ("fixed", "proportional"):
            raise ValueError(f"unknown output mode {self.output_mode!r}")
        for f in self.failure_script:
            if f.kind not in ("rate_limited", "timeout"):
                raise ValueError(f"unknown scripted failure kind {f.kind!r}")

    @classmethod
    def from_dict(cls, obj: dict) -> SimulatorConfig:
        out = obj.get("output_tokens", {"fixed": 50})
        if len(out) != 1:
            raise ValueError("output_tokens must have exactly one of 'fixed' or 'proportional'")
        ((mode, value),) = out.items()
        return cls(
            base_latency=float(obj.get("base_latency", 0.5)),
            token_rate=float(obj.get("token_rate", 100.0)),
            output_mode=mode,
            output_value=value,
            failure_script=tuple(
                ScriptedFailure(int(f["call"]), f["kind"]) for f in obj.get("failure_script", [])
            ),
            seed=int(obj.get("seed", 0)),
            responses=tuple(obj.get("responses", ())),
        )

    @classmethod
    def load(cls, path: str | Path) -> SimulatorConfig:
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_dict(self) -> dict:
        out = {
            "base_latency": self.base_latency,
            "token_rate": self.token_rate,
            "output_tokens": {self.output_mode: self.output_value},
            "failure_script": [{"call": f.call, "kind": f.kind} for f in self.failure_script],
            "seed": self.seed,
        }
        if self.responses:
            out["responses"] = list(self.responses)
        return out


def simulated_latency(cfg: SimulatorConfig, output_tokens: int) -> float:
    return cfg.base_latency + output_tokens / cfg.token_rate


_WORDS = (
    "able bright calm daring eager fair gentle honest ideal jolly keen lively "
    "merry noble open proud quiet rapid steady tidy useful vivid warm young zesty "
    "room lamp table mirror light window garden river story answer detail point "
    "summary phrase item result note line word passage question idea theme style"
).split()
_LETTER = re.compile(r"start with the letter ([A-Z])\b")


def _simulated_text(seed: int, request: CompletionRequest, tokens: int) -> str:
    length = tokens * 4
    if length == 0:
        return ""
    digest = hashlib.sha256(
        f"{seed}\x00{request.request_tag}\x00{request.system}\x00{request.user}".encode()
    ).digest()
    rng = random.Random(digest)
    words: list[str] = []
    size = 0
    while size < length:
        w = rng.choice(_WORDS)
        words.append(w)
        size += len(w) + 1
    text = " ".join(words)[:length]
    m = _LETTER.search(request.system)
    if m:
        text = m.group(1) + text[1:]
    return text


class SimulatedBackend:
    """Latency model: ``base_latency + output_tokens / token_rate``.

    Output tokens are ``fixed * expected_items`` or
    ``ceil(proportional * prompt_tokens)``, capped by ``max_output_tokens``.
    Each call sleeps on the injected clock, so with a :class:`VirtualClock`
    the whole simulation runs in virtual time.
    """

    def __init__(self, config: SimulatorConfig, clock=None):
        self.config = config
        self.clock = clock or MonotonicClock()
        self._lock = threading.Lock()
        self._calls = 0
        self._failures = {f.call: f.kind for f in config.failure_script}

    @property
    def calls(self) -> int:
        return self._calls

    def output_tokens_for(self, request: CompletionRequest) -> int:
        cfg = self.config
        if cfg.output_mode == "fixed":
            tokens = int(cfg.output_value) * request.expected_items
        else:
            tokens = math.ceil(cfg.output_value * count_tokens(request.user))
        if request.max_output_tokens is not None:
            tokens = min(tokens, request.max_output_tokens)
        return tokens

    def complete(self, request: CompletionRequest, timeout: float | None = None) -> CompletionResponse:
        with self._lock:
            self._calls += 1
            ordinal = self._calls
        failure = self._failures.get(ordinal)
        if failure is not None:
            raise TransientError(failure, f"scripted failure on call {ordinal}")

        if self.config.responses:
            text = self.config.responses[(ordinal - 1) % len(self.config.responses)]
            tokens = count_tokens(text)
        else:
            tokens = self.output_tokens_for(request)
            text = _simulated_text(self.config.seed, request, tokens)
        latency = simulated_latency(self.config, tokens)

        if timeout is not None and latency > timeout:
            self.clock.sleep(timeout)
            raise TransientError("timeout", f"simulated latency {latency:.3f}s exceeds {timeout}s")
        self.clock.sleep(latency)
        return CompletionResponse(
            text=text,
            prompt_tokens=count_tokens(request.system + request.user),
            output_tokens=tokens,
            backend_latency=latency,
        )


# --- HTTP chat-completion client -------------------------------------------

def _env(name: str, prefix: str) -> str | None:
    if prefix:
        value = os.environ.get(prefix + name)
        if value:
            return value
    return os.environ.get(name) or None


@dataclass
class HttpBackend:
    """OpenAI-style ``/chat/completions`` client.

    One request per ``complete`` call, no internal retries.
    """

    api_key: str
    api_base: str = DEFAULT_API_BASE
    model: str = DEFAULT_MODEL
    transport: httpx.BaseTransport | None = None
    _client: httpx.Client | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if not self.api_key:
            raise PermanentError("config", f"{ENV_API_KEY} is not set")

    @classmethod
    def from_env(cls, prefix: str = "", transport: httpx.BaseTransport | None = None) -> HttpBackend:
        """Build from ``PARAFAN_*`` variables; ``prefix`` (e.g. ``"JUDGE_"``) overrides."""
        key = _env(ENV_API_KEY, prefix)
        if not key:
            raise PermanentError("config", f"{prefix}{ENV_API_KEY} / {ENV_API_KEY} is not set")
        return cls(
            api_key=key,
            api_base=_env(ENV_API_BASE, prefix) or DEFAULT_API_BASE,
            model=_env(ENV_MODEL, prefix) or DEFAULT_MODEL,
            transport=transport,
        )

    @property
    def client(self) -> httpx.Client:
        if self._client is None:
            self._client = httpx.Client(
                base_url=self.api_base.rstrip("/"),
                headers={"Authorization": f"Bearer {self.api_key}"},
                transport=self.transport,
            )
        return self._client

    def build_body(self, request: CompletionRequest) -> dict:
        messages = []
        if request.system:
            messages.append({"role": "system", "content": request.system})
        messages.append({"role": "user", "content": request.user})
        body = {"model": self.model, "messages": messages}
        if request.max_output_tokens is not None:
            body["max_tokens"] = request.max_output_tokens
        return body

    def complete(self, request: CompletionRequest, timeout: float | None = None) -> CompletionResponse:
        start = time.perf_counter()
        try:
            resp = self.client.post("/chat/completions", json=self.build_body(request), timeout=timeout)
        except httpx.TimeoutException as exc:
            raise TransientError("timeout", str(exc)) from exc
        except httpx.TransportError as exc:
            raise TransientError("server_error", str(exc)) from exc
        latency = time.perf_counter() - start

        status = resp.status_code
        if status == 429:
            raise TransientError("rate_limited", resp.text[:200])
        if status in (401, 403):
            raise PermanentError("auth", f"HTTP {status}")
        if status >= 500:
            raise TransientError("server_error", f"HTTP {status}")
        if status >= 400:
            raise PermanentError("config", f"HTTP {status}: {resp.text[:200]}")

        try:
            data = resp.json()
            text = data["choices"][0]["message"]["content"] or ""
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise PermanentError("malformed", f"unexpected response body: {exc}") from exc
        usage = data.get("usage") or {}
        return CompletionResponse(
            text=text,
            prompt_tokens=count_tokens(request.system + request.user, usage.get("prompt_tokens")),
            output_tokens=count_tokens(text, usage.get("completion_tokens")),
            backend_latency=latency,
        )

    def close(self) -> None:
        if self._client is not None:
            self._client.close()
            self._client = None
