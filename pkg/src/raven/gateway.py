"""Uniform access to VLM / LLM / embedding providers.

The gateway owns structured-output enforcement (client-side validate and
re-prompt), retry/backoff, a token-bucket rate limit, and an embedding
cache. Providers are swappable: an HTTP adapter for real endpoints and a
fixture-backed deterministic stub for offline runs and tests.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

from .errors import (
    EmptyInput,
    FixtureMiss,
    MalformedOutput,
    ProviderUnreachable,
    RateLimited,
)
from .model import normalize_entity_value

STUB_EMBED_DIM = 256

CORRECTIVE_PREFIX = "Your previous response did not conform to the required JSON shape."


# ---------------------------------------------------------------------------
# requests / responses


@dataclass(frozen=True)
class Part:
    kind: str  # "text" | "media"
    content: str


def text_part(content: str) -> Part:
    return Part("text", content)


def media_part(uri: str) -> Part:
    return Part("media", uri)


@dataclass(frozen=True)
class PromptRequest:
    role: str  # "vlm" | "llm" | "embedder"
    parts: tuple[Part, ...]
    response_schema: Optional[object] = None
    temperature: float = 0.0
    max_output_tokens: int = 1024

    def __post_init__(self):
        if self.role not in ("vlm", "llm", "embedder"):
            raise ValueError(f"unknown role '{self.role}'")
        if self.role != "vlm" and any(p.kind == "media" for p in self.parts):
            raise ValueError(f"media parts are only allowed for vlm requests")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be positive")


@dataclass(frozen=True)
class StructuredResponse:
    raw_text: str
    parsed: Optional[object]
    model_id: str
    attempt_count: int


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    backoff_base_ms: int = 500
    backoff_factor: float = 2.0

    def __post_init__(self):
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        if self.backoff_base_ms < 1:
            raise ValueError("backoff_base_ms must be positive")
        if self.backoff_factor < 1.0:
            raise ValueError("backoff_factor must be >= 1")

    def backoff_s(self, attempt: int) -> float:
        return self.backoff_base_ms / 1000.0 * self.backoff_factor ** (attempt - 1)


# ---------------------------------------------------------------------------
# declarative JSON shapes
#
# A shape is: "string" | "number" | "integer" | [item_shape] | {field: shape}.
# Dict keys ending in "?" are optional; the single key "*" means "object with
# arbitrary keys, values of this shape".


def shape_violations(value, shape, path="$") -> list[str]:
    if shape == "string":
        return [] if isinstance(value, str) else [f"{path}: expected string"]
    if shape == "number":
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        return [] if ok else [f"{path}: expected number"]
    if shape == "integer":
        ok = isinstance(value, int) and not isinstance(value, bool)
        return [] if ok else [f"{path}: expected integer"]
    if isinstance(shape, list):
        if not isinstance(value, list):
            return [f"{path}: expected array"]
        out = []
        for i, item in enumerate(value):
            out.extend(shape_violations(item, shape[0], f"{path}[{i}]"))
        return out
    if isinstance(shape, dict):
        if not isinstance(value, dict):
            return [f"{path}: expected object"]
        out = []
        if set(shape) == {"*"}:
            for key, item in value.items():
                out.extend(shape_violations(item, shape["*"], f"{path}.{key}"))
            return out
        for key, sub in shape.items():
            optional = key.endswith("?")
            name = key[:-1] if optional else key
            if name not in value:
                if not optional:
                    out.append(f"{path}.{name}: missing")
                continue
            out.extend(shape_violations(value[name], sub, f"{path}.{name}"))
        return out
    raise ValueError(f"bad shape spec at {path}: {shape!r}")


# ---------------------------------------------------------------------------
# token bucket


class TokenBucket:
    """Requests-per-minute throttle shared by all callers of one provider."""

    def __init__(self, per_minute: Optional[float], clock=time.monotonic, sleep=time.sleep):
        self.rate = (per_minute / 60.0) if per_minute else None
        self.capacity = max(1.0, per_minute / 60.0) if per_minute else None
        self._tokens = self.capacity
        self._last = clock()
        self._clock = clock
        self._sleep = sleep
        self._lock = threading.Lock()

    def acquire(self):
        if self.rate is None:
            return
        while True:
            with self._lock:
                now = self._clock()
                self._tokens = min(self.capacity, self._tokens + (now - self._last) * self.rate)
                self._last = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self.rate
            self._sleep(wait)


# ---------------------------------------------------------------------------
# stub provider


def request_key(req: PromptRequest) -> str:
    """Stable 64-bit hex hash over the concatenated request parts."""
    h = hashlib.blake2b(digest_size=8)
    h.update(req.role.encode("utf-8"))
    h.update(b"\x1e")
    for part in req.parts:
        h.update(part.kind.encode("utf-8"))
        h.update(b"\x1f")
        h.update(part.content.encode("utf-8"))
        h.update(b"\x1e")
    return h.hexdigest()


def trigram_embedding(text: str) -> list[float]:
    """Character-trigram hashing into 256 buckets, L2 normalized."""
    counts = [0.0] * STUB_EMBED_DIM
    grams = [text[i : i + 3] for i in range(len(text) - 2)] if len(text) >= 3 else [text]
    for gram in grams:
        h = hashlib.blake2b(gram.encode("utf-8"), digest_size=8).digest()
        counts[int.from_bytes(h, "big") % STUB_EMBED_DIM] += 1.0
    norm = math.sqrt(sum(c * c for c in counts))
    if norm == 0.0:
        raise EmptyInput("cannot embed empty text")
    return [c / norm for c in counts]


class StubProvider:
    """Deterministic, fixture-backed provider. No network.

    Fixture file layout:
        {"completions": {hex_key: "response" | ["attempt1", "attempt2", ...]},
         "schema_failures": [hex_key, ...]}
    Keys in schema_failures always get non-JSON text back, forcing the
    gateway's conformance failure path.
    """

    model_id = "stub"
    dimension = STUB_EMBED_DIM

    def __init__(self, fixture):
        if isinstance(fixture, (str, os.PathLike)):
            with open(fixture, "r", encoding="utf-8") as fh:
                fixture = json.load(fh)
        self.completions: dict = dict(fixture.get("completions", {}))
        self.schema_failures: set = set(fixture.get("schema_failures", []))

    def complete(self, req: PromptRequest, attempt: int, corrective: Optional[str]) -> tuple[str, str]:
        key = request_key(req)
        if key in self.schema_failures:
            return "this output is deliberately not json", self.model_id
        if key not in self.completions:
            raise FixtureMiss(f"no fixture entry for request hash {key}")
        entry = self.completions[key]
        if isinstance(entry, list):
            entry = entry[min(attempt - 1, len(entry) - 1)]
        return entry, self.model_id

    def embed_batch(self, texts: list[str]) -> list[list[float]]:
        return [trigram_embedding(t) for t in texts]


# ---------------------------------------------------------------------------
# HTTP provider (OpenAI-style JSON endpoints)


class HttpProvider:
    """Thin adapter for chat-completions / embeddings style HTTP APIs.

    The API key is read from the environment variable named in config and
    never persisted anywhere.
    """

    def __init__(self, base_url: str, api_key_env: str, model_ids: dict,
                 embed_dimension: int = 1536, timeout_s: float = 60.0):
        self.base_url = base_url.rstrip("/")
        self.api_key_env = api_key_env
        self.model_ids = model_ids  # {"vlm": ..., "llm": ..., "embedder": ...}
        self.dimension = embed_dimension
        self.timeout_s = timeout_s

    @property
    def model_id(self) -> str:
        return self.model_ids.get("llm", "unknown")

    def _headers(self) -> dict:
        key = os.environ.get(self.api_key_env)
        if not key:
            raise ProviderUnreachable(
                f"API key environment variable '{self.api_key_env}' is not set"
            )
        return {"Authorization": f"Bearer {key}", "Content-Type": "application/json"}

    def _post(self, path: str, payload: dict) -> dict:
        import requests

        try:
            resp = requests.post(
                f"{self.base_url}{path}", json=payload,
                headers=self._headers(), timeout=self.timeout_s,
            )
        except requests.RequestException as exc:
            raise ProviderUnreachable(str(exc)) from exc
        if resp.status_code == 429:
            raise RateLimited(f"HTTP 429 from {path}")
        if resp.status_code >= 400:
            raise ProviderUnreachable(f"HTTP {resp.status_code} from {path}: {resp.text[:500]}")
        return resp.json()

    def complete(self, req: PromptRequest, attempt: int, corrective: Optional[str]) -> tuple[str, str]:
        model = self.model_ids.get(req.role, self.model_ids.get("llm", ""))
        content = []
        for part in req.parts:
            if part.kind == "media":
                content.append({"type": "media_ref", "uri": part.content})
            else:
                content.append({"type": "text", "text": part.content})
        if corrective:
            content.append({"type": "text", "text": corrective})
        payload = {
            "model": model,
            "messages": [{"role": "user", "content": content}],
            "temperature": req.temperature,
            "max_tokens": req.max_output_tokens,
        }
        body = self._post("/chat/completions", payload)
        try:
            return body["choices"][0]["message"]["content"], body.get("model", model)
        except (KeyError, IndexError) as exc:
            raise ProviderUnreachable(f"unexpected completion response shape: {exc}") from exc

    def embed_batch(self, texts: list[str]) -> list[list[float]]:
        model = self.model_ids.get("embedder", "")
        body = self._post("/embeddings", {"model": model, "input": texts})
        try:
            vectors = [item["embedding"] for item in body["data"]]
        except (KeyError, TypeError) as exc:
            raise ProviderUnreachable(f"unexpected embedding response shape: {exc}") from exc
        out = []
        for vec in vectors:
            norm = math.sqrt(sum(x * x for x in vec))
            if norm == 0.0:
                raise ProviderUnreachable("provider returned a zero embedding")
            out.append([x / norm for x in vec])
        return out


# ---------------------------------------------------------------------------
# gateway


class Gateway:
    """Wraps a provider with structured-output enforcement, retries, rate
    limiting, and a whole-run embedding cache."""

    def __init__(self, provider, policy: Optional[RetryPolicy] = None,
                 requests_per_minute: Optional[float] = None, sleep=time.sleep):
        self.provider = provider
        self.policy = policy or RetryPolicy()
        self.bucket = TokenBucket(requests_per_minute, sleep=sleep)
        self._sleep = sleep
        self._embed_cache: dict[str, tuple[float, ...]] = {}
        self._cache_lock = threading.Lock()

    @property
    def dimension(self) -> int:
        return self.provider.dimension

    def complete_structured(
        self,
        req: PromptRequest,
        policy: Optional[RetryPolicy] = None,
        extra_validate: Optional[Callable[[object], list[str]]] = None,
    ) -> StructuredResponse:
        if req.role not in ("vlm", "llm"):
            raise ValueError("complete_structured requires a vlm or llm request")
        policy = policy or self.policy
        corrective: Optional[str] = None
        last_raw = ""
        last_violations: list[str] = []
        for attempt in range(1, policy.max_attempts + 1):
            self.bucket.acquire()
            try:
                raw, model_id = self.provider.complete(req, attempt, corrective)
            except (ProviderUnreachable, RateLimited) as exc:
                if attempt == policy.max_attempts:
                    raise
                self._sleep(policy.backoff_s(attempt))
                continue
            last_raw = raw
            if req.response_schema is None:
                return StructuredResponse(raw, None, model_id, attempt)
            parsed, violations = self._parse_and_check(raw, req.response_schema, extra_validate)
            if not violations:
                return StructuredResponse(raw, parsed, model_id, attempt)
            last_violations = violations
            corrective = (
                f"{CORRECTIVE_PREFIX}\n"
                f"Previous response:\n{raw}\n"
                f"First problem: {violations[0]}\n"
                "Respond again with corrected JSON only."
            )
        raise MalformedOutput(
            f"structured output still invalid after {policy.max_attempts} attempts: "
            f"{last_violations[:3]}",
            raw_text=last_raw,
            violations=last_violations,
        )

    @staticmethod
    def _parse_and_check(raw, schema, extra_validate):
        text = raw.strip()
        # tolerate fenced output from chatty models
        if text.startswith("```"):
            text = text.strip("`")
            if text.startswith("json"):
                text = text[4:]
        try:
            parsed = json.loads(text)
        except json.JSONDecodeError as exc:
            return None, [f"response is not valid JSON: {exc}"]
        violations = shape_violations(parsed, schema)
        if not violations and extra_validate is not None:
            violations = list(extra_validate(parsed))
        return parsed, violations

    def embed(self, texts: list[str]) -> list[list[float]]:
        if not texts:
            raise EmptyInput("embed() requires at least one text")
        for t in texts:
            if not normalize_entity_value(t):
                raise EmptyInput(f"cannot embed text with no content: {t!r}")
        with self._cache_lock:
            misses = [t for t in texts if t not in self._embed_cache]
        if misses:
            self.bucket.acquire()
            vectors = self.provider.embed_batch(misses)
            with self._cache_lock:
                for t, v in zip(misses, vectors):
                    norm = math.sqrt(sum(x * x for x in v))
                    self._embed_cache[t] = tuple(x / norm for x in v)
        with self._cache_lock:
            return [list(self._embed_cache[t]) for t in texts]
