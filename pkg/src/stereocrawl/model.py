"""Domain types for stereotype knowledge graphs, plus persistence and DOT export.

A graph is the full set of (subject, predicate, object) triples crawled for
one protected class, together with its seed-entity roster and the crawl
configuration that produced it. Duplicate triples are stored as-is: the
downstream metrics are count- and distribution-based, so deduplication would
silently change their inputs.

Persistence is line-delimited JSON (one header record, then one record per
triple) because crawls are append-only and the format stays diffable and
crash-resumable. Serialization is deterministic: equal graphs produce
byte-identical streams.

Concurrency: graphs support concurrent reads; mutation follows a
single-writer contract (the crawler is the only writer while a crawl runs).
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum

from .errors import InvalidTriple, MalformedRecord, SchemaVersionMismatch, SubjectUnknown

SCHEMA_NAME = "stereocrawl.graph"
SCHEMA_VERSION = 1

# Completion backends that refuse a prompt answer with sentences like
# "This question is offensive."; every observed variant starts with a
# capitalized "This", so that token (word-bounded, case-sensitive) marks a
# refusal anywhere in a raw completion.
_REFUSAL_TOKEN_RE = re.compile(r"\bThis\b")


def contains_refusal_marker(text: str) -> bool:
    """True if ``text`` carries the case-sensitive refusal token "This"."""
    return _REFUSAL_TOKEN_RE.search(text) is not None


class Strategy(Enum):
    """How a triple was generated."""

    INIT = "init"
    PREDICATE_DIVERSITY = "predicate_diversity"
    OBJECT_DIVERSITY = "object_diversity"


@dataclass(frozen=True)
class Triple:
    """One (subject, predicate, object) stereotype assertion plus provenance.

    iteration 0 marks initialization; expansion iterations count from 1.
    ``raw_completion`` is the untouched backend output the triple was parsed
    from, kept for auditability.
    """

    subject: str
    predicate: str
    object: str
    iteration: int = 0
    strategy: Strategy = Strategy.INIT
    augmented_init: bool = False
    augmented_expansion: bool = False
    raw_completion: str = ""
    prompt_id: str = ""

    def __post_init__(self) -> None:
        if not self.subject.strip():
            raise InvalidTriple("subject is empty after trimming")
        if not self.predicate.strip():
            raise InvalidTriple("predicate is empty after trimming")
        if not self.object.strip():
            raise InvalidTriple("object is empty after trimming")
        if self.iteration < 0:
            raise InvalidTriple(f"iteration must be >= 0, got {self.iteration}")
        if contains_refusal_marker(self.raw_completion):
            raise InvalidTriple("raw completion carries the refusal marker")


@dataclass(frozen=True)
class CrawlConfig:
    """All generation parameters for one crawl.

    Defaults reproduce the reference setup: five completions per
    initialization template, four expansion iterations, ten executions per
    strategy per seed entity, temperature 0.8. ``incontext_samples`` left as
    None resolves per seed count: 2 when there are exactly 3 seeds, else 3.
    """

    init_per_template: int = 5
    init_templates: tuple[str, ...] = ("love", "hate", "are", "can't")
    iterations: int = 4
    incontext_samples: int | None = None
    executions_per_strategy: int = 10
    temperature: float = 0.8
    augment_init: bool = False
    augment_expansion: bool = False
    prepend_text: str = "Not to be offensive but"
    max_retries: int = 5
    rng_seed: int = 0

    def resolved_incontext_samples(self, seed_count: int) -> int:
        if self.incontext_samples is not None:
            return self.incontext_samples
        return 2 if seed_count == 3 else 3

    def validate(self, seed_count: int) -> None:
        """Raise ValueError when the parameters are out of range for ``seed_count`` seeds."""
        if self.init_per_template < 1:
            raise ValueError("init_per_template must be >= 1")
        if not self.init_templates:
            raise ValueError("init_templates must be non-empty")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError("temperature must lie in [0, 2]")
        if self.executions_per_strategy < 1:
            raise ValueError("executions_per_strategy must be >= 1")
        if self.max_retries < 1:
            raise ValueError("max_retries must be >= 1")
        if self.incontext_samples is not None and self.incontext_samples < 1:
            raise ValueError("incontext_samples must be >= 1")
        if self.iterations == 0:
            return  # no expansion, so example-count constraints don't apply
        n = self.resolved_incontext_samples(seed_count)
        pool_floor = seed_count * self.init_per_template * len(self.init_templates)
        if not 1 <= n < pool_floor:
            raise ValueError(
                f"incontext_samples={n} must satisfy 1 <= n < {pool_floor} "
                f"(seeds x templates x completions)"
            )
        if n > seed_count:
            raise ValueError(
                f"incontext_samples={n} exceeds the {seed_count} seed entities; "
                "examples need pairwise-distinct subjects"
            )

    def to_dict(self) -> dict:
        return {
            "init_per_template": self.init_per_template,
            "init_templates": list(self.init_templates),
            "iterations": self.iterations,
            "incontext_samples": self.incontext_samples,
            "executions_per_strategy": self.executions_per_strategy,
            "temperature": self.temperature,
            "augment_init": self.augment_init,
            "augment_expansion": self.augment_expansion,
            "prepend_text": self.prepend_text,
            "max_retries": self.max_retries,
            "rng_seed": self.rng_seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CrawlConfig":
        known = {f: data[f] for f in cls.__dataclass_fields__ if f in data}
        if "init_templates" in known:
            known["init_templates"] = tuple(known["init_templates"])
        return cls(**known)


@dataclass
class KnowledgeGraph:
    """All triples crawled for one protected class.

    ``seeds`` is the ordered seed-entity roster; every triple's subject must
    be a member. Triples keep insertion order, duplicates included.
    """

    protected_class: str
    seeds: list[str]
    config: CrawlConfig = field(default_factory=CrawlConfig)
    triples: list[Triple] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.triples)

    def __iter__(self):
        return iter(self.triples)

    def add(self, triple: Triple) -> "KnowledgeGraph":
        """Append ``triple``; duplicates are permitted by design."""
        if triple.subject not in self.seeds:
            raise SubjectUnknown(
                f"subject {triple.subject!r} is not in the seed roster for "
                f"{self.protected_class!r}"
            )
        self.triples.append(triple)
        return self

    def subject_counts(self) -> dict[str, int]:
        """Triple count per seed entity, in roster order (zero rows included)."""
        counts = {s: 0 for s in self.seeds}
        for t in self.triples:
            counts[t.subject] += 1
        return counts

    def group_counts(self) -> dict[tuple[str, int, Strategy], int]:
        """Triple count per (subject, iteration, strategy) group."""
        counts: dict[tuple[str, int, Strategy], int] = {}
        for t in self.triples:
            key = (t.subject, t.iteration, t.strategy)
            counts[key] = counts.get(key, 0) + 1
        return counts


def add_triple(graph: KnowledgeGraph, triple: Triple) -> KnowledgeGraph:
    """Functional alias for :meth:`KnowledgeGraph.add`."""
    return graph.add(triple)


# --- persistence -----------------------------------------------------------

def _triple_record(protected_class: str, t: Triple) -> dict:
    return {
        "class": protected_class,
        "subject": t.subject,
        "predicate": t.predicate,
        "object": t.object,
        "iteration": t.iteration,
        "strategy": t.strategy.value,
        "augmented_init": t.augmented_init,
        "augmented_expansion": t.augmented_expansion,
        "raw_completion": t.raw_completion,
        "prompt_id": t.prompt_id,
    }


def _dumps(obj: dict) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def serialize_graph(graph: KnowledgeGraph) -> bytes:
    """Serialize to line-delimited JSON: header record, then one record per triple."""
    header = {
        "schema": SCHEMA_NAME,
        "version": SCHEMA_VERSION,
        "protected_class": graph.protected_class,
        "seeds": list(graph.seeds),
        "config": graph.config.to_dict(),
    }
    lines = [_dumps(header)]
    lines.extend(_dumps(_triple_record(graph.protected_class, t)) for t in graph.triples)
    return ("\n".join(lines) + "\n").encode("utf-8")


_STRATEGY_BY_TAG = {s.value: s for s in Strategy}

_RECORD_FIELDS = (
    "class", "subject", "predicate", "object", "iteration", "strategy",
    "augmented_init", "augmented_expansion", "raw_completion", "prompt_id",
)


def parse_graph(data: bytes | str) -> KnowledgeGraph:
    """Parse a stream produced by :func:`serialize_graph`.

    Raises MalformedRecord (with line number and reason) on any unreadable
    line and SchemaVersionMismatch when the header declares an unknown
    schema or version.
    """
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise MalformedRecord(1, "empty stream, header record missing")

    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise MalformedRecord(1, f"header is not valid JSON: {exc}") from exc
    if not isinstance(header, dict) or "schema" not in header:
        raise MalformedRecord(1, "header record lacks a schema field")
    if header.get("schema") != SCHEMA_NAME or header.get("version") != SCHEMA_VERSION:
        raise SchemaVersionMismatch(
            f"cannot read schema {header.get('schema')!r} "
            f"version {header.get('version')!r}"
        )
    try:
        graph = KnowledgeGraph(
            protected_class=header["protected_class"],
            seeds=tuple(header["seeds"]),
            config=CrawlConfig.from_dict(header["config"]),
        )
    except (KeyError, TypeError) as exc:
        raise MalformedRecord(1, f"header field missing or mistyped: {exc}") from exc

    for line_no, line in enumerate(lines[1:], start=2):
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedRecord(line_no, f"not valid JSON: {exc}") from exc
        if not isinstance(record, dict):
            raise MalformedRecord(line_no, "record is not an object")
        missing = [f for f in _RECORD_FIELDS if f not in record]
        if missing:
            raise MalformedRecord(line_no, f"missing fields: {', '.join(missing)}")
        tag = record["strategy"]
        if tag not in _STRATEGY_BY_TAG:
            raise MalformedRecord(line_no, f"unknown strategy tag {tag!r}")
        try:
            triple = Triple(
                subject=record["subject"],
                predicate=record["predicate"],
                object=record["object"],
                iteration=record["iteration"],
                strategy=_STRATEGY_BY_TAG[tag],
                augmented_init=bool(record["augmented_init"]),
                augmented_expansion=bool(record["augmented_expansion"]),
                raw_completion=record["raw_completion"],
                prompt_id=record["prompt_id"],
            )
        except (InvalidTriple, TypeError) as exc:
            raise MalformedRecord(line_no, f"invalid triple: {exc}") from exc
        if triple.subject not in graph.seeds:
            raise MalformedRecord(
                line_no, f"subject {triple.subject!r} is not in the header seed list"
            )
        graph.triples.append(triple)
    return graph


# --- DOT export ------------------------------------------------------------

def _dot_escape(name: str) -> str:
    return name.replace("\\", "\\\\").replace('"', '\\"')


def export_dot(graph: KnowledgeGraph, name: str = "stereotypes") -> str:
    """Render the graph as a DOT digraph.

    Subjects and objects share one node namespace, distinguished by a
    ``role`` attribute; seed-entity nodes are additionally filled so they
    stand out in renderings. One edge per triple, labeled with its predicate,
    so the edge count always equals the triple count.
    """
    subjects: list[str] = []
    objects: list[str] = []
    for t in graph.triples:
        if t.subject not in subjects:
            subjects.append(t.subject)
        if t.object not in objects:
            objects.append(t.object)

    lines = [f'digraph "{_dot_escape(name)}" {{', "  rankdir=LR;"]
    seen: set[str] = set()
    for node in subjects + [o for o in objects if o not in subjects]:
        if node in seen:
            continue
        seen.add(node)
        attrs = ['role="subject"' if node in subjects else 'role="object"']
        if node in graph.seeds:
            attrs.append('fillcolor="lightblue"')
            attrs.append('style="filled"')
        lines.append(f'  "{_dot_escape(node)}" [{", ".join(attrs)}];')
    for t in graph.triples:
        lines.append(
            f'  "{_dot_escape(t.subject)}" -> "{_dot_escape(t.object)}" '
            f'[label="{_dot_escape(t.predicate)}"];'
        )
    lines.append("}")
    return "\n".join(lines) + "\n"
