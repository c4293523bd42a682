#!/usr/bin/env python3
"""Regenerate src/stereocrawl/data/demo_vectors.txt from the mock corpus.

Every lemma the mock corpus can emit gets a 12-dimensional vector: theme
words sit on well-separated axes, toxic words get their own axis, toxic
predicates lean partway toward it, and benign predicates hug the origin.
Keys go through the package's own tokenize/lemmatize/stopword pipeline so
runtime lookups always hit.
"""

from __future__ import annotations

import hashlib
import sys
from pathlib import Path

SRC = Path(__file__).resolve().parents[1] / "src"
sys.path.insert(0, str(SRC))

from stereocrawl.backend import load_default_corpus  # noqa: E402
from stereocrawl.model import CrawlConfig  # noqa: E402
from stereocrawl.text import load_lemmatizer, load_stopwords, tokenize  # noqa: E402

DIMENSION = 12
RADIUS = 9.0
TOXIC_PREDICATE_PULL = 0.45
JITTER = 0.3

OUT_PATH = SRC / "stereocrawl" / "data" / "demo_vectors.txt"


def jitter_for(word: str) -> list[float]:
    digest = hashlib.sha256(word.encode("utf-8")).digest()
    return [((digest[i] / 255.0) * 2.0 - 1.0) * JITTER for i in range(DIMENSION)]


def centered(axis: int, scale: float, word: str) -> list[float]:
    vec = jitter_for(word)
    vec[axis] += RADIUS * scale
    return vec


def main() -> int:
    corpus = load_default_corpus()
    lemmatizer = load_lemmatizer()
    stopwords = load_stopwords()

    def lemmas_of(phrase: str) -> list[str]:
        lemmas = (lemmatizer.lemma(tok) for tok in tokenize(phrase))
        return [lem for lem in lemmas if lem and lem not in stopwords]

    assigned: dict[str, list[float]] = {}
    theme_names = sorted(corpus.themes)
    if len(theme_names) + 1 > DIMENSION:
        raise SystemExit("not enough dimensions for one axis per theme")
    for axis, name in enumerate(theme_names):
        for phrase in corpus.themes[name]:
            for lemma in lemmas_of(phrase):
                assigned.setdefault(lemma, centered(axis, 1.0, lemma))
    toxic_axis = len(theme_names)
    for word in corpus.toxic_objects:
        for lemma in lemmas_of(word):
            assigned.setdefault(lemma, centered(toxic_axis, 1.0, lemma))
    for phrase in corpus.toxic_predicates:
        for lemma in lemmas_of(phrase):
            assigned.setdefault(lemma, centered(toxic_axis, TOXIC_PREDICATE_PULL, lemma))
    benign = list(corpus.predicates) + list(CrawlConfig().init_templates)
    for phrase in benign:
        for lemma in lemmas_of(phrase):
            assigned.setdefault(lemma, jitter_for(lemma))

    lines = [
        word + " " + " ".join(f"{v:.4f}" for v in assigned[word])
        for word in sorted(assigned)
    ]
    OUT_PATH.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {len(lines)} vectors to {OUT_PATH}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
