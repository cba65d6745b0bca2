"""Text generation backends.

Every backend turns a :class:`PromptPayload` plus :class:`GenerationParams`
into a :class:`ProviderResponse`. :class:`ChatCompletionsProvider` talks to any
OpenAI-compatible ``/chat/completions`` endpoint; :class:`ReplayProvider`
answers from a JSON fixture keyed by request digest so tests run offline.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import tempfile
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping

import httpx

from bddgen.errors import BddGenError, ConfigError
from bddgen.prompts import PromptPayload

logger = logging.getLogger(__name__)

DEFAULT_TEMPERATURE = 0.2
DEFAULT_TOP_P = 1.0
DEFAULT_MAX_TOKENS = 1024


class ProviderError(BddGenError):
    def __init__(self, message: str, status: int | None = None, body: str = ""):
        super().__init__(message)
        self.status = status
        self.body = body


class AuthError(ProviderError):
    pass


class RateLimited(ProviderError):
    pass


class Timeout(ProviderError):
    pass


class ReplayMiss(ProviderError):
    def __init__(self, digest: str):
        super().__init__(f"no recorded response for request digest {digest}")
        self.digest = digest


class FixtureWriteError(ProviderError):
    pass


@dataclass(frozen=True)
class GenerationParams:
    model_id: str
    temperature: float = DEFAULT_TEMPERATURE
    top_p: float = DEFAULT_TOP_P
    max_tokens: int = DEFAULT_MAX_TOKENS
    extra: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not self.model_id:
            raise ConfigError("model_id must be non-empty")
        if not 0.0 <= self.temperature <= 2.0:
            raise ConfigError(f"temperature must be in [0, 2], got {self.temperature}")
        if not 0.0 < self.top_p <= 1.0:
            raise ConfigError(f"top_p must be in (0, 1], got {self.top_p}")
        if isinstance(self.max_tokens, bool) or not isinstance(self.max_tokens, int) or self.max_tokens < 1:
            raise ConfigError(f"max_tokens must be a positive integer, got {self.max_tokens!r}")
        for key, value in self.extra.items():
            if not isinstance(key, str) or not isinstance(value, str):
                raise ConfigError("extra parameters must map strings to strings")

    def to_dict(self) -> dict[str, Any]:
        return {
            "model_id": self.model_id,
            "temperature": self.temperature,
            "top_p": self.top_p,
            "max_tokens": self.max_tokens,
            "extra": dict(sorted(self.extra.items())),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], model_id: str | None = None) -> GenerationParams:
        known = {"model_id", "temperature", "top_p", "max_tokens", "extra"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown generation parameters: {sorted(unknown)}")
        try:
            return cls(
                model_id=model_id or data.get("model_id", ""),
                temperature=float(data.get("temperature", DEFAULT_TEMPERATURE)),
                top_p=float(data.get("top_p", DEFAULT_TOP_P)),
                max_tokens=data.get("max_tokens", DEFAULT_MAX_TOKENS),
                extra=dict(data.get("extra", {})),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid generation parameters: {exc}") from exc

    def with_model(self, model_id: str) -> GenerationParams:
        return GenerationParams(model_id, self.temperature, self.top_p, self.max_tokens, dict(self.extra))


@dataclass(frozen=True)
class ProviderResponse:
    text: str
    model_id: str
    latency_ms: int
    request_digest: str


def request_digest(payload: PromptPayload, params: GenerationParams) -> str:
    """SHA-256 over the canonical JSON of the messages and parameters sent."""
    blob = json.dumps(
        {"messages": payload.to_wire(), "params": params.to_dict()},
        sort_keys=True,
        ensure_ascii=False,
        separators=(",", ":"),
    )
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


class Provider:
    """Interface shared by all backends."""

    name: str = "provider"

    def generate(self, payload: PromptPayload, params: GenerationParams) -> ProviderResponse:
        raise NotImplementedError


def generate(provider: Provider, payload: PromptPayload, params: GenerationParams) -> ProviderResponse:
    return provider.generate(payload, params)


# --- replay -----------------------------------------------------------------

_fixture_lock = threading.Lock()


@dataclass
class ReplayFixture:
    entries: dict[str, str] = field(default_factory=dict)

    @classmethod
    def load(cls, path: str | Path) -> ReplayFixture:
        path = Path(path)
        if not path.exists():
            return cls()
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read replay fixture {path}: {exc}") from exc
        if not isinstance(data, dict) or not all(
            isinstance(k, str) and isinstance(v, str) for k, v in data.items()
        ):
            raise ConfigError(f"replay fixture {path} must be a JSON object of digest -> text")
        return cls(dict(data))

    def save(self, path: str | Path) -> None:
        path = Path(path)
        text = json.dumps(dict(sorted(self.entries.items())), indent=2, ensure_ascii=False) + "\n"
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(text)
            os.replace(tmp, path)
        except OSError as exc:
            raise FixtureWriteError(f"cannot write replay fixture {path}: {exc}") from exc

    def __len__(self) -> int:
        return len(self.entries)


class ReplayProvider(Provider):
    def __init__(self, fixture: ReplayFixture, name: str = "replay"):
        self.fixture = fixture
        self.name = name

    @classmethod
    def from_path(cls, path: str | Path, name: str = "replay") -> ReplayProvider:
        return cls(ReplayFixture.load(path), name)

    def generate(self, payload: PromptPayload, params: GenerationParams) -> ProviderResponse:
        digest = request_digest(payload, params)
        try:
            text = self.fixture.entries[digest]
        except KeyError:
            raise ReplayMiss(digest) from None
        return ProviderResponse(text, params.model_id, 0, digest)


def record(
    provider: Provider,
    payload: PromptPayload,
    params: GenerationParams,
    fixture_path: str | Path,
) -> ProviderResponse:
    """Call ``provider`` and persist the response text under its digest."""
    response = provider.generate(payload, params)
    with _fixture_lock:
        fixture = ReplayFixture.load(fixture_path)
        fixture.entries[response.request_digest] = response.text
        fixture.save(fixture_path)
    return response


class RecordingProvider(Provider):
    """Wraps a live provider and records every successful call."""

    def __init__(self, inner: Provider, fixture_path: str | Path):
        self.inner = inner
        self.fixture_path = Path(fixture_path)
        self.name = inner.name

    def generate(self, payload: PromptPayload, params: GenerationParams) -> ProviderResponse:
        return record(self.inner, payload, params, self.fixture_path)


# --- live HTTP ----------------------------------------------------------------


@dataclass(frozen=True)
class ProviderConfig:
    name: str
    base_url: str
    api_key_env: str | None = None
    model_id: str | None = None
    path: str = "/chat/completions"
    auth_header: str = "Authorization"
    auth_scheme: str = "Bearer"
    timeout_s: float = 60.0
    params: Mapping[str, Any] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> ProviderConfig:
        try:
            return cls(
                name=data["name"],
                base_url=data["base_url"],
                api_key_env=data.get("api_key_env"),
                model_id=data.get("model_id"),
                path=data.get("path", "/chat/completions"),
                auth_header=data.get("auth_header", "Authorization"),
                auth_scheme=data.get("auth_scheme", "Bearer"),
                timeout_s=float(data.get("timeout_s", 60.0)),
                params=dict(data.get("params", {})),
            )
        except KeyError as exc:
            raise ConfigError(f"provider config missing key {exc.args[0]!r}") from exc
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid provider config: {exc}") from exc


def load_provider_configs(path: str | Path) -> dict[str, ProviderConfig]:
    """Read a JSON file holding one provider object or ``{"providers": [...]}``."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read provider config {path}: {exc}") from exc
    items = data.get("providers", [data]) if isinstance(data, dict) else data
    if not isinstance(items, list):
        raise ConfigError(f"provider config {path} must be an object or a list")
    configs = {}
    for item in items:
        config = ProviderConfig.from_dict(item)
        configs[config.name] = config
    return configs


class ChatCompletionsProvider(Provider):
    """Generic OpenAI-compatible chat-completions client.

    Retries with exponential backoff on HTTP 429 and 5xx only; ``max_attempts``
    counts the first call.
    """

    def __init__(
        self,
        config: ProviderConfig,
        client: httpx.Client | None = None,
        max_attempts: int = 3,
        backoff_s: float = 1.0,
        sleep: Callable[[float], None] = time.sleep,
        environ: Mapping[str, str] | None = None,
    ):
        self.config = config
        self.name = config.name
        self.max_attempts = max_attempts
        self.backoff_s = backoff_s
        self._sleep = sleep
        self._environ = os.environ if environ is None else environ
        self._client = client or httpx.Client(timeout=config.timeout_s)

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        env = self.config.api_key_env
        if env:
            key = self._environ.get(env)
            if not key:
                raise AuthError(f"provider {self.name}: environment variable {env} is not set")
            scheme = f"{self.config.auth_scheme} " if self.config.auth_scheme else ""
            headers[self.config.auth_header] = scheme + key
        return headers

    def _redact(self, text: str) -> str:
        env = self.config.api_key_env
        key = self._environ.get(env) if env else None
        if key:
            text = text.replace(key, "***")
        return text

    def generate(self, payload: PromptPayload, params: GenerationParams) -> ProviderResponse:
        url = self.config.base_url.rstrip("/") + "/" + self.config.path.lstrip("/")
        body = {
            "model": params.model_id,
            "messages": payload.to_wire(),
            "temperature": params.temperature,
            "top_p": params.top_p,
            "max_tokens": params.max_tokens,
            **params.extra,
        }
        headers = self._headers()
        digest = request_digest(payload, params)

        delay = self.backoff_s
        for attempt in range(1, self.max_attempts + 1):
            started = time.monotonic()
            try:
                resp = self._client.post(url, json=body, headers=headers)
            except httpx.TimeoutException as exc:
                raise Timeout(f"provider {self.name}: request timed out") from exc
            except httpx.HTTPError as exc:
                raise ProviderError(f"provider {self.name}: {type(exc).__name__}") from exc
            latency_ms = int((time.monotonic() - started) * 1000)

            status = resp.status_code
            excerpt = self._redact(resp.text[:200])
            if status in (401, 403):
                raise AuthError(f"provider {self.name}: authentication failed ({status})", status, excerpt)
            retryable = status == 429 or status >= 500
            if retryable and attempt < self.max_attempts:
                logger.warning(
                    "provider %s returned %d (attempt %d/%d), retrying in %.1fs",
                    self.name, status, attempt, self.max_attempts, delay,
                )
                self._sleep(delay)
                delay *= 2
                continue
            if status == 429:
                raise RateLimited(
                    f"provider {self.name}: rate limited after {attempt} attempts", status, excerpt
                )
            if status >= 400:
                raise ProviderError(f"provider {self.name}: HTTP {status}: {excerpt}", status, excerpt)
            return ProviderResponse(_completion_text(resp, self.name), params.model_id, latency_ms, digest)
        raise AssertionError("unreachable")


def _completion_text(resp: httpx.Response, name: str) -> str:
    try:
        data = resp.json()
        content = data["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise ProviderError(
            f"provider {name}: unexpected response shape", resp.status_code, resp.text[:200]
        ) from exc
    if not isinstance(content, str):
        raise ProviderError(f"provider {name}: completion content is not text", resp.status_code)
    return content


# --- post-processing ----------------------------------------------------------

_OPEN_FENCE = re.compile(r"^\s*```[\w+.-]*\s*$")
_CLOSE_FENCE = re.compile(r"^\s*```\s*$")


def strip_fences(text: str) -> str:
    """Return the body of a fenced markdown block that opens the text.

    Text whose first non-blank line is not a fence, or whose fence is never
    closed, is returned unchanged.
    """
    lines = text.splitlines()
    start = next((i for i, line in enumerate(lines) if line.strip()), None)
    if start is None or not _OPEN_FENCE.match(lines[start]):
        return text
    for end in range(start + 1, len(lines)):
        if _CLOSE_FENCE.match(lines[end]):
            return "\n".join(lines[start + 1 : end])
    return text
