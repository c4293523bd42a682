"""Topic structure of a crawled graph and per-subject representation disparity.

Each triple's predicate and object are tokenized, lemmatized, stopword
filtered, and embedded as the mean of their word vectors (GloVe-style text
files).  Density-based clustering over those vectors yields topics; noise
points (label -1) and all-out-of-vocabulary documents stay unassigned.
Topics are described by their highest class-based TF-IDF words.  Per-subject
topic distributions are compared against the pooled distribution with
relative entropy, so a subject discussed through an unusually narrow set of
topics stands out.
"""

from __future__ import annotations

import csv
import json
import math
import os
from collections import Counter
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
from sklearn.cluster import HDBSCAN

from .errors import (
    DimensionMismatch,
    EmptyInput,
    NoTopics,
    SubjectAllNoise,
    SupportViolation,
    TooFewPoints,
)
from .model import KnowledgeGraph, Triple
from .text import Lemmatizer, load_lemmatizer, load_stopwords, tokenize

__all__ = [
    "VECTORS_ENV",
    "preprocess",
    "EmbeddingTable",
    "load_embeddings",
    "embed",
    "min_cluster_size",
    "TopicAssignment",
    "cluster",
    "TopicSummary",
    "representative_words",
    "TopicDistribution",
    "topic_distributions",
    "relative_entropy",
    "TopicModelResult",
    "model_topics",
    "write_topic_reports",
    "read_entropy_csv",
    "read_distributions_csv",
    "read_representative_words_csv",
]

VECTORS_ENV = "STEREOCRAWL_VECTORS"

REFERENCE_SUBJECT = "__reference__"


def preprocess(
    triple: Triple,
    stopwords: frozenset[str] | None = None,
    lemmatizer: Lemmatizer | None = None,
) -> list[str]:
    """Tokens of the predicate and object: lowercased, lemmatized, then
    stopword-filtered (in that order, so inflected stopwords still drop)."""
    stopwords = stopwords if stopwords is not None else load_stopwords()
    lemmatizer = lemmatizer if lemmatizer is not None else load_lemmatizer()
    tokens = tokenize(f"{triple.predicate} {triple.object}")
    lemmas = (lemmatizer.lemma(tok) for tok in tokens)
    return [lem for lem in lemmas if lem and lem not in stopwords]


# --------------------------------------------------------------------------
# Embeddings
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class EmbeddingTable:
    """Word vectors with case-folded keys, all of one dimension."""

    dimension: int
    vectors: dict[str, np.ndarray]

    def __len__(self) -> int:
        return len(self.vectors)

    def __contains__(self, word: str) -> bool:
        return word.casefold() in self.vectors

    def get(self, word: str) -> np.ndarray | None:
        return self.vectors.get(word.casefold())

    @classmethod
    def load(cls, path: str) -> "EmbeddingTable":
        """Parse a GloVe-style text file: "word v1 v2 ... vD" per line."""
        vectors: dict[str, np.ndarray] = {}
        dimension: int | None = None
        with open(path, encoding="utf-8") as handle:
            for line_no, line in enumerate(handle, start=1):
                parts = line.rstrip("\n").split(" ")
                if len(parts) < 2 or not parts[0]:
                    if not line.strip():
                        continue
                    raise ValueError(f"{path}:{line_no}: not a word-vector line")
                try:
                    vector = np.array([float(x) for x in parts[1:]], dtype=float)
                except ValueError as exc:
                    raise ValueError(f"{path}:{line_no}: bad vector value: {exc}") from exc
                if dimension is None:
                    dimension = vector.size
                elif vector.size != dimension:
                    raise ValueError(
                        f"{path}:{line_no}: dimension {vector.size}, expected {dimension}"
                    )
                vectors.setdefault(parts[0].casefold(), vector)
        if not vectors or dimension is None:
            raise ValueError(f"{path}: no vectors found")
        return cls(dimension, vectors)


def load_embeddings(path: str | None = None) -> EmbeddingTable:
    """Load vectors from ``path``, the environment, or the bundled demo set."""
    path = path or os.environ.get(VECTORS_ENV)
    if path:
        return EmbeddingTable.load(path)
    bundled = resources.files("stereocrawl") / "data" / "demo_vectors.txt"
    with resources.as_file(bundled) as real_path:
        return EmbeddingTable.load(str(real_path))


def embed(tokens: list[str], table: EmbeddingTable) -> tuple[np.ndarray, bool]:
    """Mean of the found word vectors.

    Returns the zero vector and an out-of-vocabulary flag when no token is
    in the table; such documents are later excluded from clustering rather
    than piled into a fake topic at the origin.
    """
    found = [table.vectors[tok.casefold()] for tok in tokens if tok.casefold() in table.vectors]
    if not found:
        return np.zeros(table.dimension, dtype=float), True
    return np.mean(found, axis=0), False


# --------------------------------------------------------------------------
# Clustering
# --------------------------------------------------------------------------


def min_cluster_size(total_documents: int) -> int:
    """Smallest allowed topic: 1/40th of the corpus, floored, never below 2."""
    if total_documents < 1:
        raise ValueError("total_documents must be >= 1")
    return max(2, total_documents // 40)


@dataclass(frozen=True)
class TopicAssignment:
    """Document index -> topic id; -1 marks noise."""

    index: int
    topic_id: int


def cluster(vectors: list[np.ndarray], min_size: int) -> list[TopicAssignment]:
    """Density-cluster document vectors into topics.

    Zero vectors (all-OOV documents) are pre-assigned noise.  Topic ids are
    relabeled 0..T-1 by descending member count, ties broken by the lowest
    member index, so equal inputs always get equal labels.
    """
    if min_size < 2:
        raise ValueError(f"min_size must be >= 2, got {min_size}")
    vecs = [np.asarray(v, dtype=float) for v in vectors]
    if not vecs:
        raise TooFewPoints("no vectors to cluster")
    shapes = {v.shape for v in vecs}
    if len(shapes) != 1 or vecs[0].ndim != 1:
        raise DimensionMismatch(f"vectors have mixed shapes: {sorted(shapes)}")
    if len(vecs) < min_size:
        raise TooFewPoints(f"{len(vecs)} points cannot host a cluster of {min_size}")
    matrix = np.vstack(vecs)
    labels = np.full(len(vecs), -1, dtype=int)
    usable = [i for i in range(len(vecs)) if np.linalg.norm(matrix[i]) > 0.0]
    if len(usable) >= min_size:
        subset = matrix[usable]
        if len(np.unique(subset, axis=0)) == 1:
            # Degenerate but valid: every usable point coincides, which is
            # one maximally dense cluster, not noise.
            for i in usable:
                labels[i] = 0
        else:
            fitted = HDBSCAN(min_cluster_size=min_size).fit(subset)
            for pos, i in enumerate(usable):
                labels[i] = int(fitted.labels_[pos])
    sizes: dict[int, int] = {}
    first_index: dict[int, int] = {}
    for i, label in enumerate(labels):
        if label < 0:
            continue
        sizes[label] = sizes.get(label, 0) + 1
        first_index.setdefault(int(label), i)
    order = sorted(sizes, key=lambda lab: (-sizes[lab], first_index[lab]))
    remap = {old: new for new, old in enumerate(order)}
    return [
        TopicAssignment(i, remap.get(int(label), -1)) for i, label in enumerate(labels)
    ]


# --------------------------------------------------------------------------
# Topic descriptions (class-based TF-IDF)
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TopicSummary:
    topic_id: int
    representative_words: tuple[str, ...]
    size: int
    word_scores: tuple[tuple[str, float], ...]


def representative_words(
    assignments: list[TopicAssignment],
    documents: list[list[str]],
    top_n: int = 5,
) -> list[TopicSummary]:
    """Rank each topic's words by class-based TF-IDF.

    A word scores tf(word, topic) * ln(1 + A / f(word)) where tf counts
    occurrences inside the topic, f counts occurrences across all clustered
    documents, and A is the average token count per topic.  Ties break
    alphabetically.
    """
    if len(assignments) != len(documents):
        raise ValueError(
            f"{len(assignments)} assignments but {len(documents)} documents"
        )
    if top_n < 1:
        raise ValueError("top_n must be >= 1")
    members: dict[int, list[int]] = {}
    for assignment in assignments:
        if assignment.topic_id >= 0:
            members.setdefault(assignment.topic_id, []).append(assignment.index)
    if not members:
        raise NoTopics("every document is noise")
    corpus_freq: Counter[str] = Counter()
    for indices in members.values():
        for i in indices:
            corpus_freq.update(documents[i])
    average_tokens = sum(corpus_freq.values()) / len(members)
    summaries = []
    for topic_id in sorted(members):
        tf: Counter[str] = Counter()
        for i in members[topic_id]:
            tf.update(documents[i])
        scores = {
            word: count * math.log(1.0 + average_tokens / corpus_freq[word])
            for word, count in tf.items()
        }
        ranked = sorted(scores, key=lambda w: (-scores[w], w))[:top_n]
        summaries.append(
            TopicSummary(
                topic_id=topic_id,
                representative_words=tuple(ranked),
                size=len(members[topic_id]),
                word_scores=tuple((w, scores[w]) for w in ranked),
            )
        )
    return summaries


# --------------------------------------------------------------------------
# Distributions and divergence
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TopicDistribution:
    subject: str
    probabilities: dict[int, float]


def topic_distributions(
    assignments: list[TopicAssignment], subjects: list[str]
) -> tuple[dict[str, TopicDistribution], TopicDistribution]:
    """Per-subject topic distributions plus the pooled reference.

    Noise documents are excluded everywhere.  Every distribution covers the
    full topic set (zeros included) so divergences share one support.
    """
    if len(assignments) != len(subjects):
        raise ValueError(f"{len(assignments)} assignments but {len(subjects)} subjects")
    topics = sorted({a.topic_id for a in assignments if a.topic_id >= 0})
    if not topics:
        raise NoTopics("every document is noise")
    subject_order: list[str] = []
    counts: dict[str, Counter[int]] = {}
    pooled: Counter[int] = Counter()
    for assignment, subject in zip(assignments, subjects):
        if subject not in counts:
            counts[subject] = Counter()
            subject_order.append(subject)
        if assignment.topic_id >= 0:
            counts[subject][assignment.topic_id] += 1
            pooled[assignment.topic_id] += 1
    distributions: dict[str, TopicDistribution] = {}
    for subject in subject_order:
        total = sum(counts[subject].values())
        if total == 0:
            raise SubjectAllNoise(subject)
        distributions[subject] = TopicDistribution(
            subject, {tid: counts[subject][tid] / total for tid in topics}
        )
    pooled_total = sum(pooled.values())
    reference = TopicDistribution(
        REFERENCE_SUBJECT, {tid: pooled[tid] / pooled_total for tid in topics}
    )
    return distributions, reference


def relative_entropy(p: TopicDistribution, q: TopicDistribution) -> float:
    """Kullback-Leibler divergence KL(p || q) in nats; 0 * ln(0/q) is 0."""
    if set(p.probabilities) != set(q.probabilities):
        raise ValueError("distributions cover different topic sets")
    total = 0.0
    for topic_id, p_k in p.probabilities.items():
        if p_k == 0.0:
            continue
        q_k = q.probabilities[topic_id]
        if q_k == 0.0:
            raise SupportViolation(
                f"topic {topic_id} has probability {p_k} under p but 0 under q"
            )
        total += p_k * math.log(p_k / q_k)
    return total


# --------------------------------------------------------------------------
# End-to-end model
# --------------------------------------------------------------------------


@dataclass
class TopicModelResult:
    assignments: list[TopicAssignment]
    summaries: list[TopicSummary]
    distributions: dict[str, TopicDistribution]
    reference: TopicDistribution
    entropies: dict[str, float]
    noise_rate: float
    oov_rate: float
    min_cluster_size_used: int
    n_documents: int


def model_topics(
    graph: KnowledgeGraph,
    table: EmbeddingTable | None = None,
    *,
    top_n: int = 5,
    min_size: int | None = None,
    stopwords: frozenset[str] | None = None,
    lemmatizer: Lemmatizer | None = None,
) -> TopicModelResult:
    """Run the full pipeline: preprocess, embed, cluster, describe, compare."""
    if not graph.triples:
        raise EmptyInput("graph has no triples to model")
    table = table if table is not None else load_embeddings()
    stopwords = stopwords if stopwords is not None else load_stopwords()
    lemmatizer = lemmatizer if lemmatizer is not None else load_lemmatizer()
    documents = [preprocess(t, stopwords, lemmatizer) for t in graph.triples]
    embedded = [embed(doc, table) for doc in documents]
    vectors = [vec for vec, _ in embedded]
    size = min_size if min_size is not None else min_cluster_size(len(documents))
    assignments = cluster(vectors, size)
    summaries = representative_words(assignments, documents, top_n)
    subjects = [t.subject for t in graph.triples]
    distributions, reference = topic_distributions(assignments, subjects)
    entropies = {
        subject: relative_entropy(dist, reference)
        for subject, dist in distributions.items()
    }
    return TopicModelResult(
        assignments=assignments,
        summaries=summaries,
        distributions=distributions,
        reference=reference,
        entropies=entropies,
        noise_rate=sum(a.topic_id < 0 for a in assignments) / len(assignments),
        oov_rate=sum(flag for _, flag in embedded) / len(embedded),
        min_cluster_size_used=size,
        n_documents=len(documents),
    )


# --------------------------------------------------------------------------
# Report files
# --------------------------------------------------------------------------


def write_topic_reports(result: TopicModelResult, outdir: str) -> None:
    """Write distributions, reference, word rankings, entropies, metadata."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "distributions.csv", "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["subject", "topic_id", "probability"])
        for subject, dist in result.distributions.items():
            for topic_id in sorted(dist.probabilities):
                writer.writerow([subject, topic_id, repr(dist.probabilities[topic_id])])
    with open(out / "reference.csv", "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["topic_id", "probability"])
        for topic_id in sorted(result.reference.probabilities):
            writer.writerow([topic_id, repr(result.reference.probabilities[topic_id])])
    with open(out / "representative_words.csv", "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["topic_id", "rank", "word", "score"])
        for summary in result.summaries:
            for rank, (word, score) in enumerate(summary.word_scores, start=1):
                writer.writerow([summary.topic_id, rank, word, repr(score)])
    with open(out / "entropy.csv", "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["subject", "relative_entropy"])
        for subject, value in result.entropies.items():
            writer.writerow([subject, repr(value)])
    metadata = {
        "n_documents": result.n_documents,
        "n_topics": len(result.summaries),
        "min_cluster_size": result.min_cluster_size_used,
        "noise_rate": result.noise_rate,
        "oov_rate": result.oov_rate,
        "topic_sizes": {str(s.topic_id): s.size for s in result.summaries},
    }
    with open(out / "metadata.json", "w", encoding="utf-8") as handle:
        json.dump(metadata, handle, ensure_ascii=False, indent=2)
        handle.write("\n")


def read_entropy_csv(path: str) -> dict[str, float]:
    entropies: dict[str, float] = {}
    with open(path, encoding="utf-8", newline="") as handle:
        for row in csv.DictReader(handle):
            entropies[row["subject"]] = float(row["relative_entropy"])
    return entropies


def read_distributions_csv(path: str) -> dict[str, dict[int, float]]:
    distributions: dict[str, dict[int, float]] = {}
    with open(path, encoding="utf-8", newline="") as handle:
        for row in csv.DictReader(handle):
            distributions.setdefault(row["subject"], {})[int(row["topic_id"])] = float(
                row["probability"]
            )
    return distributions


def read_representative_words_csv(path: str) -> dict[int, list[str]]:
    words: dict[int, list[str]] = {}
    with open(path, encoding="utf-8", newline="") as handle:
        for row in csv.DictReader(handle):
            words.setdefault(int(row["topic_id"]), []).append(row["word"])
    return words
