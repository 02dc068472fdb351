"""LLM completion boundary: providers, on-disk response cache, retries and cost ledger."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from collections.abc import Callable
from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path
from typing import Optional, Union

import httpx

from evogec.corpus import Corpus
from evogec.errors import (
    CacheError,
    ConfigError,
    NetworkError,
    ProviderError,
    RateLimitError,
    RefusalError,
    UnscriptedRequestError,
)
from evogec.metrics import DEFAULT_POLICY, NormPolicy, best_hypothesis_index

logger = logging.getLogger(__name__)

DEFAULT_MODEL = "claude-3-5-sonnet-20240620"
DEFAULT_BASE_URL = "https://api.anthropic.com"
API_KEY_ENV = "ANTHROPIC_API_KEY"

# USD per million (input, output) tokens
DEFAULT_PRICES = {f"anthropic:{DEFAULT_MODEL}": (Decimal("3"), Decimal("15"))}

MARKER_RE = re.compile(r"^\[utt:(?P<id>[^\]\n]+)\]$", re.MULTILINE)


def utterance_marker(utt_id: str) -> str:
    return f"[utt:{utt_id}]"


def find_marker(text: str) -> Optional[str]:
    m = MARKER_RE.search(text)
    return m.group("id") if m else None


@dataclass(frozen=True)
class CompletionRequest:
    prompt_text: str
    max_output_tokens: int = 1024
    temperature: float = 0.0
    stop_sequences: tuple[str, ...] = ()
    tag: str = ""

    def __post_init__(self):
        if not self.prompt_text:
            raise ValueError("prompt_text must be non-empty")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


@dataclass(frozen=True)
class CompletionResponse:
    text: str
    input_tokens: int
    output_tokens: int
    provider_id: str
    from_cache: bool = False


class Provider:
    """Base class for completion providers.

    ``complete`` either returns a response or raises a :class:`ProviderError`.
    Implementations must tolerate concurrent calls.
    """

    provider_id = "provider"

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        raise NotImplementedError


Matcher = Union[str, "re.Pattern[str]", Callable[[str], bool]]
Reply = Union[str, Callable[[str], str]]


def _matches(matcher: Matcher, text: str) -> bool:
    if isinstance(matcher, str):
        return matcher in text
    if isinstance(matcher, re.Pattern):
        return matcher.search(text) is not None
    return bool(matcher(text))


class ScriptedProvider(Provider):
    """Deterministic offline provider driven by ordered ``(matcher, reply)`` rules.

    A matcher is a substring, a compiled regex or a predicate on the prompt;
    a reply is a fixed string or a function of the prompt. The first matching
    rule wins. Token counts are whitespace token counts.
    """

    def __init__(self, rules, provider_id: str = "scripted"):
        self.rules = list(rules)
        self.provider_id = provider_id
        self.calls = 0
        self._lock = threading.Lock()

    def respond(self, prompt: str) -> str:
        for matcher, reply in self.rules:
            if _matches(matcher, prompt):
                return reply(prompt) if callable(reply) else reply
        raise UnscriptedRequestError(f"unscripted request: {prompt[:60]!r}")

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        with self._lock:
            self.calls += 1
        prompt = request.prompt_text
        text = self.respond(prompt)
        return CompletionResponse(
            text=text,
            input_tokens=len(prompt.split()),
            output_tokens=len(text.split()),
            provider_id=self.provider_id,
        )


def scripted_provider(script, provider_id: str = "scripted") -> ScriptedProvider:
    return ScriptedProvider(script, provider_id)


def _marked_utterance(corpus: Corpus) -> Callable[[str], object]:
    index = corpus.by_id()

    def lookup(prompt: str):
        utt_id = find_marker(prompt)
        if utt_id is None or utt_id not in index:
            raise UnscriptedRequestError(f"no recognizable utterance marker in request: {prompt[:60]!r}")
        return index[utt_id]

    return lookup


def oracle_provider(corpus: Corpus, policy: NormPolicy = DEFAULT_POLICY) -> ScriptedProvider:
    """Answers every marked query with that utterance's minimum-WER hypothesis. Test use only."""
    lookup = _marked_utterance(corpus)

    def reply(prompt: str) -> str:
        utt = lookup(prompt)
        return utt.hypotheses[best_hypothesis_index(utt, policy)]

    return ScriptedProvider([(lambda _: True, reply)], provider_id="oracle")


def onebest_provider(corpus: Corpus) -> ScriptedProvider:
    """Identity provider: echoes the top hypothesis of the marked utterance."""
    lookup = _marked_utterance(corpus)
    return ScriptedProvider([(lambda _: True, lambda p: lookup(p).hypotheses[0])], provider_id="echo")


class AnthropicProvider(Provider):
    """Live provider for a messages-style HTTPS completion endpoint."""

    def __init__(
        self,
        model: str = DEFAULT_MODEL,
        api_key: Optional[str] = None,
        base_url: str = DEFAULT_BASE_URL,
        timeout: float = 120.0,
        transport: Optional[httpx.BaseTransport] = None,
    ):
        api_key = api_key or os.environ.get(API_KEY_ENV)
        if not api_key:
            raise ConfigError(f"set {API_KEY_ENV} to use the live provider")
        self.model = model
        self.provider_id = f"anthropic:{model}"
        self._client = httpx.Client(
            base_url=base_url,
            timeout=timeout,
            transport=transport,
            headers={
                "x-api-key": api_key,
                "anthropic-version": "2023-06-01",
                "content-type": "application/json",
            },
        )

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        body = {
            "model": self.model,
            "max_tokens": request.max_output_tokens,
            "temperature": request.temperature,
            "messages": [{"role": "user", "content": request.prompt_text}],
        }
        if request.stop_sequences:
            body["stop_sequences"] = list(request.stop_sequences)
        try:
            resp = self._client.post("/v1/messages", json=body)
        except httpx.TransportError as exc:
            raise NetworkError(f"{self.provider_id}: {exc}") from exc

        if resp.status_code == 429:
            raise RateLimitError(f"{self.provider_id}: rate limited")
        if resp.status_code >= 500:
            raise NetworkError(f"{self.provider_id}: HTTP {resp.status_code}")
        if resp.status_code >= 400:
            raise ProviderError(f"{self.provider_id}: HTTP {resp.status_code}: {resp.text[:200]}")

        try:
            payload = resp.json()
            text = "".join(b.get("text", "") for b in payload.get("content", []) if b.get("type") == "text")
            usage = payload.get("usage", {})
        except (ValueError, AttributeError) as exc:
            raise ProviderError(f"{self.provider_id}: malformed response body") from exc
        if payload.get("stop_reason") == "refusal":
            raise RefusalError(f"{self.provider_id}: refusal")
        return CompletionResponse(
            text=text,
            input_tokens=int(usage.get("input_tokens", 0)),
            output_tokens=int(usage.get("output_tokens", 0)),
            provider_id=self.provider_id,
        )


def cache_key(provider_id: str, request: CompletionRequest) -> str:
    material = json.dumps(
        [
            provider_id,
            request.prompt_text,
            request.max_output_tokens,
            request.temperature,
            list(request.stop_sequences),
        ],
        ensure_ascii=False,
    )
    return hashlib.sha256(material.encode("utf-8")).hexdigest()


class ResponseCache:
    """Content-addressed response store.

    With a directory, each entry is one JSON file ``<key[:2]>/<key>.json``;
    without one the cache lives in memory only.
    """

    def __init__(self, directory=None):
        self.directory = Path(directory) if directory is not None else None
        self._memory: dict[str, dict] = {}
        self._lock = threading.Lock()
        if self.directory is not None:
            try:
                self.directory.mkdir(parents=True, exist_ok=True)
            except OSError as exc:
                raise CacheError(f"cannot create cache directory {self.directory}: {exc}") from exc

    def _path(self, key: str) -> Path:
        return self.directory / key[:2] / f"{key}.json"

    def get(self, key: str) -> Optional[dict]:
        with self._lock:
            if key in self._memory:
                return self._memory[key]
        if self.directory is None:
            return None
        path = self._path(key)
        if not path.exists():
            return None
        try:
            entry = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise CacheError(f"unreadable cache entry {path}: {exc}") from exc
        with self._lock:
            self._memory[key] = entry
        return entry

    def put(self, key: str, entry: dict) -> None:
        with self._lock:
            self._memory[key] = entry
            if self.directory is None:
                return
            path = self._path(key)
            tmp = path.with_suffix(f".tmp{threading.get_ident()}")
            try:
                path.parent.mkdir(exist_ok=True)
                tmp.write_text(json.dumps(entry, ensure_ascii=False, sort_keys=True), encoding="utf-8")
                os.replace(tmp, path)
            except OSError as exc:
                raise CacheError(f"cannot write cache entry {path}: {exc}") from exc

    def __len__(self) -> int:
        if self.directory is None:
            return len(self._memory)
        return sum(1 for _ in self.directory.glob("*/*.json"))


@dataclass
class Usage:
    input_tokens: int = 0
    output_tokens: int = 0
    calls: int = 0
    cache_hits: int = 0


@dataclass
class CostLedger:
    """Token usage per ``(provider_id, tag)``. Cache hits are counted but add no tokens."""

    prices: dict = field(default_factory=lambda: dict(DEFAULT_PRICES))
    usage: dict = field(default_factory=dict)

    def __post_init__(self):
        self._lock = threading.Lock()

    def record(self, response: CompletionResponse, tag: str) -> None:
        with self._lock:
            u = self.usage.setdefault((response.provider_id, tag), Usage())
            if response.from_cache:
                u.cache_hits += 1
            else:
                u.calls += 1
                u.input_tokens += response.input_tokens
                u.output_tokens += response.output_tokens

    def totals(self) -> Usage:
        out = Usage()
        with self._lock:
            for u in self.usage.values():
                out.input_tokens += u.input_tokens
                out.output_tokens += u.output_tokens
                out.calls += u.calls
                out.cache_hits += u.cache_hits
        return out

    def to_dict(self) -> dict:
        with self._lock:
            rows = [
                {"provider_id": p, "tag": t, **vars(u)}
                for (p, t), u in sorted(self.usage.items())
            ]
        prices = {k: [str(v[0]), str(v[1])] for k, v in sorted(self.prices.items())}
        return {"usage": rows, "prices": prices}

    @classmethod
    def from_dict(cls, data: dict) -> "CostLedger":
        prices = {k: (Decimal(v[0]), Decimal(v[1])) for k, v in data.get("prices", {}).items()}
        ledger = cls(prices=prices)
        for row in data.get("usage", []):
            ledger.usage[(row["provider_id"], row["tag"])] = Usage(
                row["input_tokens"], row["output_tokens"], row["calls"], row["cache_hits"]
            )
        return ledger


class UnpricedProviderError(ConfigError):
    pass


@dataclass(frozen=True)
class CostEstimate:
    per_key: dict
    total: Decimal


_MILLION = Decimal(1_000_000)


def token_cost(input_tokens: int, output_tokens: int, in_price, out_price) -> Decimal:
    return (
        Decimal(input_tokens) / _MILLION * Decimal(in_price)
        + Decimal(output_tokens) / _MILLION * Decimal(out_price)
    )


def estimate_cost(ledger: CostLedger) -> CostEstimate:
    """Cost in currency units per ``(provider_id, tag)`` plus the grand total."""
    per_key = {}
    for (provider_id, tag), u in sorted(ledger.usage.items()):
        if provider_id not in ledger.prices:
            raise UnpricedProviderError(f"no price entry for provider {provider_id!r}")
        in_price, out_price = ledger.prices[provider_id]
        per_key[(provider_id, tag)] = token_cost(u.input_tokens, u.output_tokens, in_price, out_price)
    return CostEstimate(per_key, sum(per_key.values(), Decimal(0)))


def complete_cached(
    provider: Provider,
    cache: Optional[ResponseCache],
    request: CompletionRequest,
    ledger: Optional[CostLedger] = None,
    retries: int = 3,
    backoff: float = 1.0,
    sleep=time.sleep,
) -> CompletionResponse:
    """Serve ``request`` from the cache, or call the provider with bounded retries.

    Transient failures are retried up to ``retries`` times with exponential
    backoff. Refusals and empty completions raise :class:`RefusalError`
    without retry and are not cached.
    """
    key = cache_key(provider.provider_id, request)
    if cache is not None:
        entry = cache.get(key)
        if entry is not None:
            response = CompletionResponse(
                text=entry["text"],
                input_tokens=entry["input_tokens"],
                output_tokens=entry["output_tokens"],
                provider_id=provider.provider_id,
                from_cache=True,
            )
            if ledger is not None:
                ledger.record(response, request.tag)
            return response

    attempt = 0
    while True:
        try:
            response = provider.complete(request)
            break
        except ProviderError as exc:
            if not exc.retryable or attempt >= retries:
                raise
            delay = backoff * (2 ** attempt)
            logger.warning("%s (attempt %d/%d), retrying in %.1fs", exc, attempt + 1, retries + 1, delay)
            sleep(delay)
            attempt += 1

    if ledger is not None:
        ledger.record(response, request.tag)
    if not response.text.strip():
        raise RefusalError(f"{provider.provider_id}: empty completion")
    if cache is not None:
        cache.put(
            key,
            {
                "text": response.text,
                "input_tokens": response.input_tokens,
                "output_tokens": response.output_tokens,
            },
        )
    return response
