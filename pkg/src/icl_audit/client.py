"""Target-model providers.

Providers expose a single text-in/text-out call, :meth:`Provider.generate`.
Nothing here ever asks for or returns token probabilities.
"""

import logging
import os
import threading
import time
from collections import Counter
from dataclasses import dataclass
from typing import Optional

import httpx

from .exceptions import (
    AuthError,
    ConfigurationError,
    EmptyResponseError,
    PermanentProviderError,
    TransientProviderError,
)

logger = logging.getLogger(__name__)

ROLES = ("system", "user", "assistant")
DEFAULT_AUTH_ENV = "AUDIT_API_KEY"


@dataclass(frozen=True)
class ChatTurn:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        if not self.content:
            raise ValueError("chat turn content must be non-empty")

    def to_dict(self):
        return {"role": self.role, "content": self.content}


@dataclass(frozen=True)
class GenerationRequest:
    """One generation call.

    ``context`` is the server-side prompt; it is None only for auxiliary calls
    such as paraphrasing, which run without an ICL prompt.
    """

    context: Optional[object]
    turns: tuple
    max_tokens: int = 64
    temperature: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "turns", tuple(self.turns))
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")
        if not self.turns or self.turns[-1].role != "user":
            raise ValueError("turns must end with a user turn")

    @property
    def last_user_message(self) -> str:
        return self.turns[-1].content

    @property
    def user_messages(self):
        return [t.content for t in self.turns if t.role == "user"]


@dataclass
class ProviderConfig:
    kind: str = "simulated"
    endpoint_url: Optional[str] = None
    model_name: Optional[str] = None
    auth_token_env: Optional[str] = DEFAULT_AUTH_ENV
    timeout: float = 30.0
    max_retries: int = 3
    requests_per_minute: float = 60.0
    inline_prompt: bool = False
    max_tokens: int = 64
    temperature: float = 0.0

    def __post_init__(self):
        if self.kind not in ("http", "simulated"):
            raise ConfigurationError(f"unknown provider kind {self.kind!r}")
        if self.kind == "http" and not (self.endpoint_url and self.model_name):
            raise ConfigurationError("http provider needs endpoint_url and model_name")
        if self.max_retries < 0:
            raise ConfigurationError("max_retries must be >= 0")


class QueryLedger:
    """Thread-safe request counters, total and per attack kind."""

    def __init__(self):
        self._lock = threading.Lock()
        self._total = 0
        self._per_attack = Counter()

    def record(self, attack: Optional[str] = None):
        with self._lock:
            self._total += 1
            if attack:
                self._per_attack[attack] += 1

    @property
    def total_requests(self) -> int:
        with self._lock:
            return self._total

    @property
    def per_attack_requests(self) -> dict:
        with self._lock:
            return dict(self._per_attack)


class RateLimiter:
    """Token bucket. ``acquire`` blocks until a request may be sent."""

    def __init__(self, requests_per_minute: float, burst: int = 1, clock=time.monotonic,
                 sleep=time.sleep):
        if requests_per_minute <= 0:
            raise ConfigurationError("requests_per_minute must be positive")
        self.rate = requests_per_minute / 60.0
        self.capacity = float(burst)
        self._tokens = float(burst)
        self._clock = clock
        self._sleep = sleep
        self._last = clock()
        self._lock = threading.Lock()

    def acquire(self):
        with self._lock:
            while True:
                now = self._clock()
                self._tokens = min(self.capacity, self._tokens + (now - self._last) * self.rate)
                self._last = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                self._sleep((1.0 - self._tokens) / self.rate)


class Provider:
    """Base class: subclasses implement :meth:`_generate`."""

    max_tokens = 64
    temperature = 0.0

    def __init__(self):
        self.ledger = QueryLedger()

    def request(self, context, turns) -> GenerationRequest:
        """Build a request with this provider's decoding defaults."""
        return GenerationRequest(context, tuple(turns), self.max_tokens, self.temperature)

    def generate(self, request: GenerationRequest, attack: Optional[str] = None) -> str:
        self.ledger.record(attack)
        text = self._generate(request)
        if not text or not text.strip():
            raise EmptyResponseError("provider returned an empty completion")
        return text

    def _generate(self, request: GenerationRequest) -> str:
        raise NotImplementedError


def resolve_token(env_var: Optional[str]) -> Optional[str]:
    if not env_var:
        return None
    token = os.environ.get(env_var)
    if not token:
        raise AuthError(env_var)
    return token


def post_json(client: httpx.Client, url: str, body: dict, headers: dict,
              max_retries: int, sleep=time.sleep, base_delay: float = 0.5) -> dict:
    """POST with exponential backoff on transient failures.

    Raises :class:`PermanentProviderError` on 4xx responses (except 429) and
    once ``max_retries`` retries are exhausted.
    """
    last_exc = None
    for attempt in range(max_retries + 1):
        if attempt:
            sleep(base_delay * 2 ** (attempt - 1))
        try:
            resp = client.post(url, json=body, headers=headers)
        except (httpx.TimeoutException, httpx.TransportError) as exc:
            last_exc = TransientProviderError(f"{type(exc).__name__}: {exc}")
            logger.warning("transient failure on %s (attempt %d): %s", url, attempt + 1, exc)
            continue
        if resp.status_code == 429 or resp.status_code >= 500:
            last_exc = TransientProviderError(f"HTTP {resp.status_code} from {url}")
            logger.warning("HTTP %d from %s (attempt %d)", resp.status_code, url, attempt + 1)
            continue
        if resp.status_code >= 400:
            raise PermanentProviderError(f"HTTP {resp.status_code} from {url}: {resp.text[:200]}")
        try:
            return resp.json()
        except ValueError:
            raise PermanentProviderError(f"non-JSON response from {url}") from None
    raise PermanentProviderError(
        f"giving up on {url} after {max_retries} retries"
    ) from last_exc


def to_messages(request: GenerationRequest, inline_prompt: bool = False) -> list:
    """Chat messages for a request: the prompt goes in the system message
    unless ``inline_prompt`` puts it in front of the first user turn."""
    turns = [t.to_dict() for t in request.turns]
    context = getattr(request.context, "rendered_context", None)
    if not context:
        return turns
    if inline_prompt:
        first = dict(turns[0])
        first["content"] = f"{context}\n\n{first['content']}"
        return [first] + turns[1:]
    return [{"role": "system", "content": context}] + turns


class HTTPProvider(Provider):
    """OpenAI-compatible ``/chat/completions`` client."""

    def __init__(self, config: ProviderConfig, transport: Optional[httpx.BaseTransport] = None,
                 sleep=time.sleep):
        super().__init__()
        if config.kind != "http":
            raise ConfigurationError("HTTPProvider needs an http ProviderConfig")
        self.config = config
        self.max_tokens = config.max_tokens
        self.temperature = config.temperature
        self._token = resolve_token(config.auth_token_env)
        self._client = httpx.Client(timeout=config.timeout, transport=transport)
        self._limiter = RateLimiter(config.requests_per_minute, sleep=sleep)
        self._sleep = sleep

    @property
    def url(self) -> str:
        return self.config.endpoint_url.rstrip("/") + "/chat/completions"

    def _headers(self):
        headers = {"Content-Type": "application/json"}
        if self._token:
            headers["Authorization"] = f"Bearer {self._token}"
        return headers

    def _generate(self, request: GenerationRequest) -> str:
        body = {
            "model": self.config.model_name,
            "messages": to_messages(request, self.config.inline_prompt),
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        self._limiter.acquire()
        data = post_json(self._client, self.url, body, self._headers(),
                         self.config.max_retries, sleep=self._sleep)
        try:
            content = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise PermanentProviderError("malformed chat completion response") from None
        return content or ""

    def close(self):
        self._client.close()
