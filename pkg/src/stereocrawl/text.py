"""Shared lightweight text utilities: tokenizing, lemmatizing, stopwords.

The lemmatizer is a bundled lookup table for irregular forms plus a few
conservative suffix rules; it prefers leaving a word alone over mangling it,
since downstream consumers only need rough surface-form merging.
"""

from __future__ import annotations

import re
from importlib import resources

__all__ = ["tokenize", "Lemmatizer", "load_lemmatizer", "load_stopwords"]

_WORD_RE = re.compile(r"[a-z]+(?:'[a-z]+)*")

_VOWELS = set("aeiouy")


def tokenize(text: str) -> list[str]:
    """Lowercase word tokens; internal apostrophes stay ("can't")."""
    return _WORD_RE.findall(text.casefold())


class Lemmatizer:
    """Table lookup first, then suffix stripping that errs on the safe side."""

    def __init__(self, table: dict[str, str] | None = None) -> None:
        self._table = {k.casefold(): v.casefold() for k, v in (table or {}).items()}

    def lemma(self, word: str) -> str:
        w = word.casefold()
        hit = self._table.get(w)
        if hit is not None:
            return hit
        if w.endswith("'s") and len(w) > 3:
            w = w[:-2]
            hit = self._table.get(w)
            if hit is not None:
                return hit
        if w.endswith("ies") and len(w) > 4:
            return w[:-3] + "y"
        if w.endswith(("ches", "shes", "xes", "zes", "sses")) and len(w) > 5:
            return w[:-2]
        if w.endswith("s") and not w.endswith(("ss", "us", "is", "'s")) and len(w) > 3:
            return w[:-1]
        for suffix in ("ing", "ed"):
            if w.endswith(suffix) and len(w) - len(suffix) >= 3:
                stem = w[: -len(suffix)]
                if stem[-1] == stem[-2] and stem[-1] not in "lsz":
                    stem = stem[:-1]
                if _VOWELS & set(stem):
                    return self._table.get(stem, stem)
        return w


def _read_data_text(name: str) -> str:
    return (resources.files("stereocrawl") / "data" / name).read_text("utf-8")


def load_lemmatizer() -> Lemmatizer:
    table = {}
    for line in _read_data_text("lemmas.txt").splitlines():
        line = line.strip()
        if not line:
            continue
        surface, _, lemma = line.partition(" ")
        if surface and lemma:
            table[surface] = lemma
    return Lemmatizer(table)


def load_stopwords() -> frozenset[str]:
    words = (w.strip() for w in _read_data_text("stopwords.txt").splitlines())
    return frozenset(w for w in words if w)
