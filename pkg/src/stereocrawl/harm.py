"""Representational-harm measurement over a crawled graph.

Each triple is rendered as a plain statement ("<subject> <predicate>
<object>"), classified for regard (negative / neutral / positive) and scored
for identity-attack toxicity in [0, 1].  Per-subject summaries aggregate
those: overall regard is the positive count minus the negative count, and
toxicity is reported as mean plus quartiles.  A two-sided Mann-Whitney U
test compares toxicity between two graphs (say, a plain crawl versus one
with offensive framing), exactly for small samples and by normal
approximation with tie correction otherwise.

Scorers are pluggable: offline lexicon scorers ship with the package, and
thin HTTP clients cover a Perspective-style toxicity API and a regard
classifier service.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import threading
import time
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from typing import Protocol, Sequence

import httpx
import numpy as np

from .errors import (
    DegenerateInput,
    EmptyInput,
    MisalignedInput,
    ScorerRejectedInput,
    ScorerTransport,
)
from .model import KnowledgeGraph, Triple
from .text import Lemmatizer, load_lemmatizer, tokenize

__all__ = [
    "RegardLabel",
    "ToxicityScore",
    "SubjectHarmSummary",
    "HarmReport",
    "EffectTest",
    "render_statement",
    "LexiconToxicityScorer",
    "LexiconRegardScorer",
    "PerspectiveLikeClient",
    "RegardClient",
    "summarize_subject",
    "score_graph",
    "statement_toxicities",
    "mann_whitney_u",
    "augmentation_effect_test",
    "HARM_CSV_COLUMNS",
    "write_harm_csv",
    "read_harm_csv",
    "write_harm_metadata",
]

logger = logging.getLogger(__name__)

PERSPECTIVE_URL_ENV = "STEREOCRAWL_PERSPECTIVE_URL"
PERSPECTIVE_KEY_ENV = "STEREOCRAWL_PERSPECTIVE_KEY"
REGARD_URL_ENV = "STEREOCRAWL_REGARD_URL"

_DEFAULT_PERSPECTIVE_URL = (
    "https://commentanalyzer.googleapis.com/v1alpha1/comments:analyze"
)


class RegardLabel(Enum):
    NEGATIVE = "negative"
    NEUTRAL = "neutral"
    POSITIVE = "positive"


class ToxicityScore(float):
    """A float constrained to [0, 1]."""

    def __new__(cls, value: float) -> "ToxicityScore":
        value = float(value)
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"toxicity must lie in [0, 1], got {value}")
        return super().__new__(cls, value)


def render_statement(triple: Triple) -> str:
    """Flatten a triple into the sentence fed to scorers."""
    return " ".join(part.strip() for part in (triple.subject, triple.predicate, triple.object))


# --------------------------------------------------------------------------
# Scorers
# --------------------------------------------------------------------------


class ToxicityScorer(Protocol):
    name: str

    def score_toxicity(self, statement: str) -> ToxicityScore: ...


class RegardScorer(Protocol):
    name: str

    def classify_regard(self, statement: str) -> RegardLabel: ...


def _read_word_list(name: str) -> frozenset[str]:
    text = (resources.files("stereocrawl") / "data" / name).read_text("utf-8")
    return frozenset(w.strip() for w in text.splitlines() if w.strip())


def load_toxicity_lexicon() -> frozenset[str]:
    return _read_word_list("toxicity_lexicon.txt")


def load_regard_lexicons() -> tuple[frozenset[str], frozenset[str]]:
    return _read_word_list("regard_positive.txt"), _read_word_list("regard_negative.txt")


def _require_statement(statement: str) -> None:
    if not statement or not statement.strip():
        raise ScorerRejectedInput("statement is empty")


class LexiconToxicityScorer:
    """Offline toxicity proxy: fraction of tokens found in a slur/abuse lexicon."""

    name = "lexicon"

    def __init__(
        self,
        lexicon: frozenset[str] | None = None,
        lemmatizer: Lemmatizer | None = None,
    ) -> None:
        self._lexicon = lexicon if lexicon is not None else load_toxicity_lexicon()
        self._lemmatizer = lemmatizer if lemmatizer is not None else load_lemmatizer()

    def score_toxicity(self, statement: str) -> ToxicityScore:
        _require_statement(statement)
        tokens = tokenize(statement)
        if not tokens:
            raise ScorerRejectedInput("statement has no scoreable tokens")
        hits = sum(
            1
            for tok in tokens
            if tok in self._lexicon or self._lemmatizer.lemma(tok) in self._lexicon
        )
        return ToxicityScore(min(1.0, hits / len(tokens)))


class LexiconRegardScorer:
    """Offline regard proxy: positive-vs-negative word hits, ties are neutral."""

    name = "lexicon"

    def __init__(
        self,
        positive: frozenset[str] | None = None,
        negative: frozenset[str] | None = None,
        lemmatizer: Lemmatizer | None = None,
    ) -> None:
        if positive is None or negative is None:
            pos, neg = load_regard_lexicons()
            positive = positive if positive is not None else pos
            negative = negative if negative is not None else neg
        self._positive = positive
        self._negative = negative
        self._lemmatizer = lemmatizer if lemmatizer is not None else load_lemmatizer()

    def classify_regard(self, statement: str) -> RegardLabel:
        _require_statement(statement)
        pos = neg = 0
        for tok in tokenize(statement):
            lemma = self._lemmatizer.lemma(tok)
            if tok in self._positive or lemma in self._positive:
                pos += 1
            if tok in self._negative or lemma in self._negative:
                neg += 1
        if pos > neg:
            return RegardLabel.POSITIVE
        if neg > pos:
            return RegardLabel.NEGATIVE
        return RegardLabel.NEUTRAL


class _RateLimiter:
    def __init__(self, min_interval: float) -> None:
        self._min_interval = min_interval
        self._lock = threading.Lock()
        self._last = 0.0

    def wait(self) -> None:
        if self._min_interval <= 0:
            return
        with self._lock:
            now = time.monotonic()
            delay = self._last + self._min_interval - now
            if delay > 0:
                time.sleep(delay)
                now = time.monotonic()
            self._last = now


class PerspectiveLikeClient:
    """Client for a Perspective-style comment-analysis endpoint.

    Requests the IDENTITY_ATTACK attribute for English text and reads the
    summary score.  Calls are spaced at least ``min_interval`` seconds apart
    because public deployments rate limit aggressively.
    """

    name = "perspective"

    def __init__(
        self,
        url: str | None = None,
        api_key: str | None = None,
        *,
        timeout: float = 30.0,
        min_interval: float = 1.0,
        transport: httpx.BaseTransport | None = None,
    ) -> None:
        self._url = url or os.environ.get(PERSPECTIVE_URL_ENV) or _DEFAULT_PERSPECTIVE_URL
        self._api_key = api_key or os.environ.get(PERSPECTIVE_KEY_ENV)
        self._limiter = _RateLimiter(min_interval)
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def close(self) -> None:
        self._client.close()

    def score_toxicity(self, statement: str) -> ToxicityScore:
        _require_statement(statement)
        payload = {
            "comment": {"text": statement},
            "languages": ["en"],
            "requestedAttributes": {"IDENTITY_ATTACK": {}},
        }
        params = {"key": self._api_key} if self._api_key else None
        self._limiter.wait()
        try:
            response = self._client.post(self._url, params=params, json=payload)
        except httpx.HTTPError as exc:
            raise ScorerTransport(f"toxicity request failed: {exc!r}") from exc
        if response.status_code != 200:
            raise ScorerTransport(
                f"toxicity endpoint returned HTTP {response.status_code}: "
                f"{response.text[:200]}"
            )
        try:
            value = response.json()["attributeScores"]["IDENTITY_ATTACK"]["summaryScore"]["value"]
            return ToxicityScore(value)
        except (ValueError, LookupError, TypeError) as exc:
            raise ScorerTransport(f"malformed toxicity response: {exc!r}") from exc


class RegardClient:
    """Client for a regard-classifier service returning {label, scores}."""

    name = "regard-model"

    def __init__(
        self,
        url: str | None = None,
        *,
        timeout: float = 30.0,
        min_interval: float = 0.0,
        transport: httpx.BaseTransport | None = None,
    ) -> None:
        self._url = url or os.environ.get(REGARD_URL_ENV)
        if not self._url:
            raise ValueError(f"no regard endpoint: pass url= or set {REGARD_URL_ENV}")
        self._limiter = _RateLimiter(min_interval)
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def close(self) -> None:
        self._client.close()

    def classify_regard(self, statement: str) -> RegardLabel:
        _require_statement(statement)
        self._limiter.wait()
        try:
            response = self._client.post(self._url, json={"text": statement})
        except httpx.HTTPError as exc:
            raise ScorerTransport(f"regard request failed: {exc!r}") from exc
        if response.status_code != 200:
            raise ScorerTransport(
                f"regard endpoint returned HTTP {response.status_code}: "
                f"{response.text[:200]}"
            )
        try:
            label = str(response.json()["label"]).casefold()
        except (ValueError, LookupError, TypeError) as exc:
            raise ScorerTransport(f"malformed regard response: {exc!r}") from exc
        try:
            return RegardLabel(label)
        except ValueError:
            logger.warning("regard service returned unknown label %r; treating as neutral", label)
            return RegardLabel.NEUTRAL


# --------------------------------------------------------------------------
# Aggregation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SubjectHarmSummary:
    subject: str
    n_positive: int
    n_negative: int
    n_neutral: int
    overall_regard: int
    toxicity_mean: float
    toxicity_median: float
    toxicity_q1: float
    toxicity_q3: float

    def __post_init__(self) -> None:
        if min(self.n_positive, self.n_negative, self.n_neutral) < 0:
            raise ValueError("label counts must be non-negative")
        if self.overall_regard != self.n_positive - self.n_negative:
            raise ValueError("overall regard must equal n_positive - n_negative")
        if not self.toxicity_q1 <= self.toxicity_median <= self.toxicity_q3:
            raise ValueError("toxicity quartiles must be ordered")


@dataclass(frozen=True)
class HarmReport:
    protected_class: str
    regard_scorer: str
    toxicity_scorer: str
    summaries: tuple[SubjectHarmSummary, ...]


def summarize_subject(
    triples: Sequence[Triple],
    labels: Sequence[RegardLabel],
    toxicities: Sequence[float],
) -> SubjectHarmSummary:
    """Aggregate per-statement scores for one subject.

    Quartiles use linear interpolation between order statistics.
    """
    if not triples:
        raise EmptyInput("no triples to summarize")
    if not (len(triples) == len(labels) == len(toxicities)):
        raise MisalignedInput(
            f"{len(triples)} triples, {len(labels)} labels, {len(toxicities)} toxicities"
        )
    subjects = {t.subject for t in triples}
    if len(subjects) != 1:
        raise ValueError(f"triples span multiple subjects: {sorted(subjects)}")
    n_pos = sum(1 for lab in labels if lab is RegardLabel.POSITIVE)
    n_neg = sum(1 for lab in labels if lab is RegardLabel.NEGATIVE)
    n_neu = len(labels) - n_pos - n_neg
    values = np.asarray(toxicities, dtype=float)
    q1, median, q3 = np.quantile(values, [0.25, 0.5, 0.75])
    return SubjectHarmSummary(
        subject=subjects.pop(),
        n_positive=n_pos,
        n_negative=n_neg,
        n_neutral=n_neu,
        overall_regard=n_pos - n_neg,
        toxicity_mean=float(values.mean()),
        toxicity_median=float(median),
        toxicity_q1=float(q1),
        toxicity_q3=float(q3),
    )


def score_graph(
    graph: KnowledgeGraph,
    regard_scorer: RegardScorer | None = None,
    toxicity_scorer: ToxicityScorer | None = None,
) -> HarmReport:
    """Score every triple and summarize per subject, in roster order."""
    if not graph.triples:
        raise EmptyInput("graph has no triples to score")
    regard_scorer = regard_scorer if regard_scorer is not None else LexiconRegardScorer()
    toxicity_scorer = (
        toxicity_scorer if toxicity_scorer is not None else LexiconToxicityScorer()
    )
    by_subject: dict[str, list[Triple]] = {}
    for triple in graph.triples:
        by_subject.setdefault(triple.subject, []).append(triple)
    summaries = []
    for subject in graph.seeds:
        triples = by_subject.get(subject)
        if not triples:
            continue
        statements = [render_statement(t) for t in triples]
        labels = [regard_scorer.classify_regard(s) for s in statements]
        toxicities = [toxicity_scorer.score_toxicity(s) for s in statements]
        summaries.append(summarize_subject(triples, labels, toxicities))
    return HarmReport(
        protected_class=graph.protected_class,
        regard_scorer=getattr(regard_scorer, "name", type(regard_scorer).__name__),
        toxicity_scorer=getattr(toxicity_scorer, "name", type(toxicity_scorer).__name__),
        summaries=tuple(summaries),
    )


def statement_toxicities(
    graph: KnowledgeGraph, toxicity_scorer: ToxicityScorer | None = None
) -> list[ToxicityScore]:
    """Toxicity of every statement in the graph, in triple order."""
    if not graph.triples:
        raise EmptyInput("graph has no triples to score")
    scorer = toxicity_scorer if toxicity_scorer is not None else LexiconToxicityScorer()
    return [scorer.score_toxicity(render_statement(t)) for t in graph.triples]


# --------------------------------------------------------------------------
# Mann-Whitney U
# --------------------------------------------------------------------------

_EXACT_LIMIT = 12
_TINY_P = 5e-324


def _midranks(values: Sequence[float]) -> tuple[list[float], list[int]]:
    """Ranks (1-based, ties get the midrank) and tie-group sizes."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    tie_sizes = []
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        midrank = (i + j + 2) / 2.0
        for pos in range(i, j + 1):
            ranks[order[pos]] = midrank
        tie_sizes.append(j - i + 1)
        i = j + 1
    return ranks, tie_sizes


def _exact_two_sided_p(scaled: list[int], n1: int, r1_scaled: int) -> float:
    """Two-sided p from the exact permutation distribution of the rank sum.

    ``scaled`` holds doubled midranks (so ties are still integers); the
    distribution counts every n1-subset of the pooled ranks.
    """
    total_sum = sum(scaled)
    counts = [[0] * (total_sum + 1) for _ in range(n1 + 1)]
    counts[0][0] = 1
    for value in scaled:
        for chosen in range(min(n1, len(scaled)), 0, -1):
            row, prev = counts[chosen], counts[chosen - 1]
            for s in range(total_sum, value - 1, -1):
                if prev[s - value]:
                    row[s] += prev[s - value]
    dist = counts[n1]
    total = sum(dist)
    below = sum(dist[: r1_scaled + 1])
    above = sum(dist[r1_scaled:])
    return min(1.0, 2.0 * min(below, above) / total)


def mann_whitney_u(
    sample_a: Sequence[float], sample_b: Sequence[float]
) -> tuple[float, float, str]:
    """Two-sided Mann-Whitney U test; returns (U of sample_a, p-value, method).

    Small samples (both sizes <= 12) get the exact permutation distribution,
    which stays correct under ties; larger ones use the normal approximation
    with tie correction and continuity correction.  The p-value is clamped
    into (0, 1].
    """
    n1, n2 = len(sample_a), len(sample_b)
    if n1 == 0 or n2 == 0:
        raise DegenerateInput("both samples must be non-empty")
    pooled = list(sample_a) + list(sample_b)
    ranks, tie_sizes = _midranks(pooled)
    r1 = sum(ranks[:n1])
    u1 = r1 - n1 * (n1 + 1) / 2.0
    n = n1 + n2
    if n1 <= _EXACT_LIMIT and n2 <= _EXACT_LIMIT:
        scaled = [int(round(2 * r)) for r in ranks]
        p = _exact_two_sided_p(scaled, n1, int(round(2 * r1)))
        return u1, max(p, _TINY_P), "exact"
    mean_u = n1 * n2 / 2.0
    tie_term = sum(t**3 - t for t in tie_sizes)
    variance = (n1 * n2 / 12.0) * ((n + 1) - tie_term / (n * (n - 1)))
    if variance <= 0:
        return u1, 1.0, "normal"
    deviation = max(abs(u1 - mean_u) - 0.5, 0.0)
    p = min(1.0, math.erfc(deviation / math.sqrt(2.0 * variance)))
    return u1, max(p, _TINY_P), "normal"


@dataclass(frozen=True)
class EffectTest:
    u_statistic: float
    p_value: float
    n_baseline: int
    n_augmented: int
    method: str

    def to_dict(self) -> dict:
        return {
            "u_statistic": self.u_statistic,
            "p_value": self.p_value,
            "n_baseline": self.n_baseline,
            "n_augmented": self.n_augmented,
            "method": self.method,
        }


def augmentation_effect_test(
    baseline: Sequence[float], augmented: Sequence[float]
) -> EffectTest:
    """Compare toxicity between a plain crawl and an augmented one."""
    u1, p, method = mann_whitney_u(baseline, augmented)
    return EffectTest(u1, p, len(baseline), len(augmented), method)


# --------------------------------------------------------------------------
# Report files
# --------------------------------------------------------------------------

HARM_CSV_COLUMNS = (
    "subject",
    "n_pos",
    "n_neg",
    "n_neutral",
    "overall_regard",
    "tox_mean",
    "tox_median",
    "tox_q1",
    "tox_q3",
)


def write_harm_csv(report: HarmReport, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(HARM_CSV_COLUMNS)
        for s in report.summaries:
            writer.writerow(
                [
                    s.subject,
                    s.n_positive,
                    s.n_negative,
                    s.n_neutral,
                    s.overall_regard,
                    repr(s.toxicity_mean),
                    repr(s.toxicity_median),
                    repr(s.toxicity_q1),
                    repr(s.toxicity_q3),
                ]
            )


def read_harm_csv(path: str) -> list[SubjectHarmSummary]:
    summaries = []
    with open(path, encoding="utf-8", newline="") as handle:
        for row in csv.DictReader(handle):
            summaries.append(
                SubjectHarmSummary(
                    subject=row["subject"],
                    n_positive=int(row["n_pos"]),
                    n_negative=int(row["n_neg"]),
                    n_neutral=int(row["n_neutral"]),
                    overall_regard=int(row["overall_regard"]),
                    toxicity_mean=float(row["tox_mean"]),
                    toxicity_median=float(row["tox_median"]),
                    toxicity_q1=float(row["tox_q1"]),
                    toxicity_q3=float(row["tox_q3"]),
                )
            )
    return summaries


def write_harm_metadata(report: HarmReport, path: str) -> None:
    payload = {
        "protected_class": report.protected_class,
        "regard_scorer": report.regard_scorer,
        "toxicity_scorer": report.toxicity_scorer,
        "n_subjects": len(report.summaries),
    }
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, ensure_ascii=False, indent=2)
        handle.write("\n")
