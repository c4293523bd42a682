"""Text-completion backends: a deterministic offline mock and a remote HTTP client.

Both speak the same tiny interface: build a :class:`CompletionRequest`, call
``backend.complete(request)``, get a :class:`CompletionResponse` back.  The
mock engine is a pure function of ``(engine seed, request nonce, prompt)`` so
crawls are reproducible byte for byte at any concurrency level; the remote
client wraps an OpenAI-style ``/completions`` endpoint with bounded retries.
"""

from __future__ import annotations

import functools
import hashlib
import json
import os
import random
import re
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from typing import Protocol

import httpx

from .errors import EmptyCorpus, RateLimited, RemoteRefusal, TransportError

__all__ = [
    "FinishReason",
    "CompletionRequest",
    "CompletionResponse",
    "CompletionBackend",
    "MockCorpus",
    "MockEngine",
    "RemoteCompletionBackend",
    "load_default_corpus",
]

URL_ENV = "STEREOCRAWL_LLM_URL"
KEY_ENV = "STEREOCRAWL_LLM_KEY"


class FinishReason(Enum):
    STOP = "stop"
    LENGTH = "length"
    OTHER = "other"


@dataclass(frozen=True)
class CompletionRequest:
    """One prompt sent to a backend.

    ``nonce`` is a sampling-diversity counter threaded through by callers so
    the deterministic mock can return different text for repeated prompts
    (retries, repeated executions).  Remote backends ignore it.
    """

    prompt: str
    temperature: float = 0.8
    max_tokens: int = 32
    stop_sequences: tuple[str, ...] = ()
    nonce: int = 0

    def __post_init__(self) -> None:
        if not self.prompt.strip():
            raise ValueError("prompt must be non-empty")
        if self.max_tokens < 1:
            raise ValueError(f"max_tokens must be >= 1, got {self.max_tokens}")
        if self.temperature < 0.0:
            raise ValueError(f"temperature must be >= 0, got {self.temperature}")


@dataclass(frozen=True)
class CompletionResponse:
    text: str
    finish_reason: FinishReason = FinishReason.STOP


class CompletionBackend(Protocol):
    def complete(self, request: CompletionRequest) -> CompletionResponse: ...


# --------------------------------------------------------------------------
# Mock corpus and engine
# --------------------------------------------------------------------------


def _read_data_text(name: str) -> str:
    return (resources.files("stereocrawl") / "data" / name).read_text("utf-8")


@dataclass(frozen=True)
class MockCorpus:
    """Vocabulary and sampling rates backing :class:`MockEngine`."""

    refusal_pool: tuple[str, ...]
    refusal_rate: float
    empty_rate: float
    toxic_rate: float
    toxic_rate_augmented: float
    augment_markers: tuple[str, ...]
    predicates: tuple[str, ...]
    toxic_predicates: tuple[str, ...]
    themes: dict[str, tuple[str, ...]]
    toxic_objects: tuple[str, ...]
    default_theme_weights: dict[str, float]
    subject_theme_weights: dict[str, dict[str, float]]
    classes: dict[str, dict] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.themes or not any(self.themes.values()):
            raise EmptyCorpus("corpus defines no theme vocabulary")
        if not self.predicates or not self.toxic_predicates:
            raise EmptyCorpus("corpus defines no predicates")
        if not self.toxic_objects:
            raise EmptyCorpus("corpus defines no toxic objects")
        if not self.refusal_pool:
            raise EmptyCorpus("corpus defines no refusal phrases")

    @classmethod
    def from_dict(cls, raw: dict) -> "MockCorpus":
        subjects = {
            name: dict(entry.get("themes", {}))
            for name, entry in raw.get("subjects", {}).items()
        }
        return cls(
            refusal_pool=tuple(raw.get("refusal_pool", ())),
            refusal_rate=float(raw.get("refusal_rate", 0.05)),
            empty_rate=float(raw.get("empty_rate", 0.02)),
            toxic_rate=float(raw.get("toxic_rate", 0.08)),
            toxic_rate_augmented=float(raw.get("toxic_rate_augmented", 0.65)),
            augment_markers=tuple(raw.get("augment_markers", ())),
            predicates=tuple(raw.get("predicates", ())),
            toxic_predicates=tuple(raw.get("toxic_predicates", ())),
            themes={k: tuple(v) for k, v in raw.get("themes", {}).items()},
            toxic_objects=tuple(raw.get("toxic_objects", ())),
            default_theme_weights=dict(raw.get("default_theme_weights", {})),
            subject_theme_weights=subjects,
            classes=dict(raw.get("classes", {})),
        )

    @classmethod
    def load(cls, path: str) -> "MockCorpus":
        with open(path, encoding="utf-8") as handle:
            return cls.from_dict(json.load(handle))


@functools.lru_cache(maxsize=1)
def load_default_corpus() -> MockCorpus:
    return MockCorpus.from_dict(json.loads(_read_data_text("mock_corpus.json")))


_ROSTER_PROMPT_RE = re.compile(
    r"provide a list of common (?P<plural>[a-z' -]+?)[.:]?\s*$", re.IGNORECASE
)
_PD_LINE_RE = re.compile(r"^Q: (?P<subject>.+) #$")
_OD_LINE_RE = re.compile(r"^Q: (?P<subject>.+) # (?P<predicate>.+) A:$")


class MockEngine:
    """Offline completion backend with deterministic, hash-driven sampling.

    Every completion is a pure function of the engine seed, the request
    nonce, and the prompt text: no shared mutable state, safe to call from
    many threads.  Sampling rates (refusals, empty strings, toxic phrasing)
    come from the corpus; toxic phrasing becomes far more likely when the
    prompt starts with an offensive-framing header or contains one of the
    known disclaimer prefixes.
    """

    def __init__(self, corpus: MockCorpus | None = None, seed: int = 0) -> None:
        self._corpus = corpus if corpus is not None else load_default_corpus()
        self._seed = seed
        header = self._corpus.augment_markers[:1]
        self._header_markers = tuple(header)
        self._inline_markers = tuple(self._corpus.augment_markers[1:])
        # Longest names first so "South African people" wins over "African".
        known = set(self._corpus.subject_theme_weights)
        for entry in self._corpus.classes.values():
            for member in entry.get("members", []) + entry.get("stragglers", []):
                known.add(member)
                known.add(f"{member} people")
        self._known_subjects = sorted(known, key=len, reverse=True)

    @property
    def corpus(self) -> MockCorpus:
        return self._corpus

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        rng = random.Random(self._digest(request.nonce, request.prompt))
        if rng.random() < self._corpus.refusal_rate:
            return CompletionResponse(" " + rng.choice(self._corpus.refusal_pool))
        if rng.random() < self._corpus.empty_rate:
            return CompletionResponse("")
        roster = self._match_roster(request.prompt)
        if roster is not None:
            return CompletionResponse(self._render_roster(roster, rng))
        toxic = rng.random() < self._toxic_rate(request.prompt)
        last_line = request.prompt.rsplit("\n", 1)[-1]
        match = _OD_LINE_RE.match(last_line)
        if match is not None:
            obj = self._sample_object(match.group("subject"), toxic, rng)
            return CompletionResponse(f" {obj}")
        match = _PD_LINE_RE.match(last_line)
        if match is not None:
            pool = self._corpus.toxic_predicates if toxic else self._corpus.predicates
            predicate = rng.choice(pool)
            obj = self._sample_object(match.group("subject"), toxic, rng)
            return CompletionResponse(f" {predicate} A: {obj}")
        subject = self._guess_subject(last_line)
        obj = self._sample_object(subject, toxic, rng)
        return CompletionResponse(f" {obj}")

    # -- internals ---------------------------------------------------------

    def _digest(self, nonce: int, prompt: str) -> int:
        key = f"{self._seed}|{nonce}|{prompt}".encode("utf-8")
        return int.from_bytes(hashlib.sha256(key).digest()[:16], "big")

    def _toxic_rate(self, prompt: str) -> float:
        if any(prompt.startswith(marker) for marker in self._header_markers):
            return self._corpus.toxic_rate_augmented
        if any(marker in prompt for marker in self._inline_markers):
            return self._corpus.toxic_rate_augmented
        return self._corpus.toxic_rate

    def _match_roster(self, prompt: str) -> dict | None:
        match = _ROSTER_PROMPT_RE.search(prompt.strip())
        if match is None:
            return None
        plural = match.group("plural").strip().casefold()
        for entry in self._corpus.classes.values():
            if entry.get("plural", "").casefold() == plural:
                return entry
        return None

    def _render_roster(self, entry: dict, rng: random.Random) -> str:
        items = [m for m in entry.get("members", []) if rng.random() < entry.get("inclusion_rate", 0.85)]
        items += [s for s in entry.get("stragglers", []) if rng.random() < entry.get("straggler_rate", 0.3)]
        if not items:
            items = list(entry.get("members", [])[:1])
        rng.shuffle(items)
        style = rng.choice(("numbered", "bulleted", "comma"))
        if style == "numbered":
            return "\n" + "\n".join(f"{i}. {item}" for i, item in enumerate(items, 1))
        if style == "bulleted":
            return "\n" + "\n".join(f"- {item}" for item in items)
        return " " + ", ".join(items)

    def _guess_subject(self, line: str) -> str:
        text = line.strip()
        for marker in self._inline_markers:
            if text.startswith(marker):
                text = text[len(marker):].strip()
        for name in self._known_subjects:
            if name in text:
                return name
        # Init prompts end with a single-word predicate template.
        head, _, _ = text.rpartition(" ")
        return head or text

    def _theme_weights(self, subject: str) -> dict[str, float]:
        weights = dict(self._corpus.default_theme_weights)
        for theme in self._corpus.themes:
            weights.setdefault(theme, 1.0)
        explicit = self._corpus.subject_theme_weights.get(subject)
        if explicit:
            weights.update(explicit)
            return weights
        # Unlisted subjects get a stable per-subject tilt so topic structure
        # is still distinctive, derived from the name alone.
        digest = hashlib.sha256(f"tilt|{subject}".encode("utf-8")).digest()
        names = sorted(weights)
        weights[names[digest[0] % len(names)]] *= 2.5
        weights[names[digest[1] % len(names)]] *= 1.8
        return weights

    def _sample_object(self, subject: str, toxic: bool, rng: random.Random) -> str:
        if toxic:
            return rng.choice(self._corpus.toxic_objects)
        weights = self._theme_weights(subject)
        themes = [name for name in weights if self._corpus.themes.get(name)]
        picked = rng.choices(themes, weights=[weights[t] for t in themes])[0]
        return rng.choice(self._corpus.themes[picked])


# --------------------------------------------------------------------------
# Remote backend
# --------------------------------------------------------------------------


class RemoteCompletionBackend:
    """Client for an OpenAI-style text completion endpoint.

    Sends ``{"model", "prompt", "temperature", "max_tokens", "stop"}`` and
    reads ``choices[0].text``.  Transport failures and 5xx responses are
    retried with capped exponential backoff; 429 honors ``Retry-After`` and
    surfaces as :class:`RateLimited` once retries run out; any other 4xx is
    :class:`RemoteRefusal` immediately.  At most ``max_in_flight`` requests
    are on the wire at once.
    """

    def __init__(
        self,
        url: str | None = None,
        api_key: str | None = None,
        model: str = "text-completion",
        *,
        max_retries: int = 5,
        backoff_base: float = 0.5,
        backoff_cap: float = 30.0,
        timeout: float = 30.0,
        max_in_flight: int = 4,
        transport: httpx.BaseTransport | None = None,
    ) -> None:
        self._url = url or os.environ.get(URL_ENV)
        if not self._url:
            raise ValueError(f"no endpoint URL: pass url= or set {URL_ENV}")
        self._api_key = api_key or os.environ.get(KEY_ENV)
        self._model = model
        if max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        self._max_retries = max_retries
        self._backoff_base = backoff_base
        self._backoff_cap = backoff_cap
        self._semaphore = threading.BoundedSemaphore(max_in_flight)
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def close(self) -> None:
        self._client.close()

    def __enter__(self) -> "RemoteCompletionBackend":
        return self

    def __exit__(self, *exc_info: object) -> None:
        self.close()

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        payload = {
            "model": self._model,
            "prompt": request.prompt,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
            "stop": list(request.stop_sequences) or None,
        }
        headers = {}
        if self._api_key:
            headers["Authorization"] = f"Bearer {self._api_key}"
        last_cause = "exhausted retries"
        rate_limited = False
        for attempt in range(self._max_retries + 1):
            try:
                with self._semaphore:
                    response = self._client.post(self._url, json=payload, headers=headers)
            except httpx.HTTPError as exc:
                last_cause = f"transport failure: {exc!r}"
                rate_limited = False
                self._sleep(self._backoff(attempt))
                continue
            if response.status_code == 200:
                return self._parse(response)
            if response.status_code == 429:
                last_cause = "HTTP 429"
                rate_limited = True
                self._sleep(self._retry_after(response, attempt))
                continue
            if 400 <= response.status_code < 500:
                raise RemoteRefusal(response.status_code, response.text[:500])
            last_cause = f"HTTP {response.status_code}"
            rate_limited = False
            self._sleep(self._backoff(attempt))
        if rate_limited:
            raise RateLimited(f"still rate limited after {self._max_retries + 1} attempts")
        raise TransportError(f"completion failed after {self._max_retries + 1} attempts ({last_cause})")

    # -- internals ---------------------------------------------------------

    def _parse(self, response: httpx.Response) -> CompletionResponse:
        try:
            body = response.json()
            choice = body["choices"][0]
            text = choice["text"]
        except (ValueError, LookupError, TypeError) as exc:
            raise TransportError(f"malformed completion response: {exc!r}") from exc
        if not isinstance(text, str):
            raise TransportError("malformed completion response: text is not a string")
        reason = str(choice.get("finish_reason", "stop")).casefold()
        try:
            finish = FinishReason(reason)
        except ValueError:
            finish = FinishReason.OTHER
        return CompletionResponse(text, finish)

    def _backoff(self, attempt: int) -> float:
        return min(self._backoff_cap, self._backoff_base * (2.0 ** attempt))

    def _retry_after(self, response: httpx.Response, attempt: int) -> float:
        header = response.headers.get("Retry-After")
        if header is not None:
            try:
                return min(self._backoff_cap, max(0.0, float(header)))
            except ValueError:
                pass
        return self._backoff(attempt)

    @staticmethod
    def _sleep(delay: float) -> None:
        if delay > 0:
            time.sleep(delay)
