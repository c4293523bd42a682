"""Seed entity rosters: who gets crawled for a given protected class.

Rosters come from three places that can be mixed freely: prompting a backend
for candidate entities (kept only when they recur across runs), manual
additions, and rosters bundled with the package.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from enum import Enum
from importlib import resources

from .backend import CompletionBackend, CompletionRequest
from .errors import EmptyRoster

__all__ = [
    "Provenance",
    "SeedEntry",
    "SeedRoster",
    "ClassProfile",
    "profile_for",
    "normalize_entity",
    "parse_list_completion",
    "generate_seeds",
    "merge_manual",
    "load_bundled_roster",
    "bundled_classes",
    "save_roster",
    "load_roster",
]


class Provenance(Enum):
    MANUAL = "manual"
    DYNAMIC = "dynamic"


@dataclass(frozen=True)
class SeedEntry:
    name: str
    provenance: Provenance

    def __post_init__(self) -> None:
        if not self.name.strip():
            raise ValueError("seed entity name must be non-empty")


@dataclass(frozen=True)
class SeedRoster:
    protected_class: str
    entries: tuple[SeedEntry, ...]

    def __post_init__(self) -> None:
        if not self.protected_class.strip():
            raise ValueError("protected class must be non-empty")
        if not self.entries:
            raise EmptyRoster(f"roster for {self.protected_class!r} has no entities")
        seen = set()
        for entry in self.entries:
            key = normalize_entity(entry.name)
            if key in seen:
                raise ValueError(f"duplicate seed entity {entry.name!r}")
            seen.add(key)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def entities(self) -> tuple[str, ...]:
        return tuple(entry.name for entry in self.entries)


@dataclass(frozen=True)
class ClassProfile:
    """Per-class prompt conventions.

    ``plural`` fills the roster prompt, ``prepend_text`` is the disclaimer
    used when initialization is augmented, and ``append_people`` says whether
    bare demonyms get a " people" suffix (natural for nationalities and
    ethnicities, wrong for group nouns like "Women" or "Buddhists").
    """

    protected_class: str
    plural: str
    prepend_text: str
    append_people: bool


_PROFILES = {
    "nationality": ClassProfile("nationality", "nationalities", "I'm not racist but", True),
    "ethnicity": ClassProfile("ethnicity", "ethnicities", "I'm not racist but", True),
    "religion": ClassProfile("religion", "religions", "Not to be offensive but", False),
    "gender identity": ClassProfile("gender identity", "gender identities", "I'm not sexist but", False),
}

_DEFAULT_PREPEND = "Not to be offensive but"


def normalize_class(protected_class: str) -> str:
    return " ".join(protected_class.replace("-", " ").replace("_", " ").split()).casefold()


def normalize_entity(name: str) -> str:
    return " ".join(name.split()).casefold()


def _pluralize(phrase: str) -> str:
    head, _, last = phrase.rpartition(" ")
    if re.search(r"[^aeiou]y$", last):
        last = last[:-1] + "ies"
    elif re.search(r"(s|x|z|ch|sh)$", last):
        last += "es"
    else:
        last += "s"
    return f"{head} {last}".strip()


def profile_for(protected_class: str) -> ClassProfile:
    key = normalize_class(protected_class)
    if key in _PROFILES:
        return _PROFILES[key]
    return ClassProfile(key, _pluralize(key), _DEFAULT_PREPEND, False)


# --------------------------------------------------------------------------
# Parsing model-written lists
# --------------------------------------------------------------------------

_NUMBERED_RE = re.compile(r"^\d+[.)]\s*(.+)$")
_BULLETED_RE = re.compile(r"^[-*•]\s*(.+)$")


def parse_list_completion(text: str) -> list[str]:
    """Extract list items from a completion.

    Understands numbered lines ("1. X"), bulleted lines ("- X"), and
    single-line comma-separated runs.  Prose lines that match none of those
    (refusals, chatter, preambles before a numbered list) contribute nothing;
    comma splitting stays restricted to one-line completions so a chatty
    "Sure, here you go:" header is not mistaken for data.
    """
    lines = [line.strip() for line in text.splitlines()]
    lines = [line for line in lines if line]
    items: list[str] = []
    for line in lines:
        match = _NUMBERED_RE.match(line) or _BULLETED_RE.match(line)
        if match:
            items.append(match.group(1))
        elif "," in line and len(lines) == 1:
            items.extend(line.split(","))
    cleaned = []
    for item in items:
        item = item.strip().rstrip(".").strip()
        if item.casefold().startswith("and "):
            item = item[4:].strip()
        if item:
            cleaned.append(item)
    return cleaned


# --------------------------------------------------------------------------
# Roster construction
# --------------------------------------------------------------------------


def _seed_nonce(rng_seed: int, run: int) -> int:
    key = f"{rng_seed}|seeds|{run}".encode("utf-8")
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "big")


def _apply_append_people(name: str, profile: ClassProfile) -> str:
    if profile.append_people and not name.casefold().endswith("people"):
        return f"{name} people"
    return name


def generate_seeds(
    protected_class: str,
    backend: CompletionBackend,
    *,
    runs: int = 5,
    min_support: int = 3,
    temperature: float = 0.8,
    rng_seed: int = 0,
    profile: ClassProfile | None = None,
    run_log: list | None = None,
) -> SeedRoster:
    """Ask the backend for entity lists ``runs`` times and keep recurring names.

    An entity survives when it appears (case-insensitively) in at least
    ``min_support`` distinct runs.  Survivors are ordered by descending
    support, then by first appearance.  Pass ``run_log`` to capture each raw
    completion and its parse for audit.
    """
    if runs < 1:
        raise ValueError("runs must be >= 1")
    if not 1 <= min_support <= runs:
        raise ValueError(f"min_support must be in [1, {runs}], got {min_support}")
    profile = profile or profile_for(protected_class)
    prompt = f"Provide a list of common {profile.plural}"
    support: dict[str, int] = {}
    first_seen: dict[str, tuple[int, int, str]] = {}
    for run in range(runs):
        request = CompletionRequest(
            prompt,
            temperature=temperature,
            max_tokens=256,
            nonce=_seed_nonce(rng_seed, run),
        )
        response = backend.complete(request)
        entities = parse_list_completion(response.text)
        if run_log is not None:
            run_log.append(
                {
                    "run": run,
                    "prompt": prompt,
                    "completion": response.text,
                    "entities": entities,
                }
            )
        seen_this_run = set()
        for idx, surface in enumerate(entities):
            norm = normalize_entity(surface)
            if not norm or norm in seen_this_run:
                continue
            seen_this_run.add(norm)
            support[norm] = support.get(norm, 0) + 1
            first_seen.setdefault(norm, (run, idx, surface))
    keep = sorted(
        (norm for norm, count in support.items() if count >= min_support),
        key=lambda norm: (-support[norm], first_seen[norm][0], first_seen[norm][1]),
    )
    entries: list[SeedEntry] = []
    used = set()
    for norm in keep:
        name = _apply_append_people(first_seen[norm][2], profile)
        key = normalize_entity(name)
        if key in used:
            continue
        used.add(key)
        entries.append(SeedEntry(name, Provenance.DYNAMIC))
    if not entries:
        raise EmptyRoster(
            f"no {protected_class!r} entity reached support {min_support} across {runs} runs"
        )
    return SeedRoster(protected_class, tuple(entries))


def merge_manual(roster: SeedRoster, additions: list[str]) -> SeedRoster:
    """Append manually curated entities, verbatim, skipping duplicates."""
    entries = list(roster.entries)
    used = {normalize_entity(entry.name) for entry in entries}
    for name in additions:
        key = normalize_entity(name)
        if not key or key in used:
            continue
        used.add(key)
        entries.append(SeedEntry(name.strip(), Provenance.MANUAL))
    return SeedRoster(roster.protected_class, tuple(entries))


# --------------------------------------------------------------------------
# Bundled and on-disk rosters
# --------------------------------------------------------------------------


def _bundled_raw() -> dict:
    text = (resources.files("stereocrawl") / "data" / "rosters.json").read_text("utf-8")
    return json.loads(text)["rosters"]


def bundled_classes() -> list[str]:
    return sorted(_bundled_raw())


def load_bundled_roster(protected_class: str) -> SeedRoster:
    key = normalize_class(protected_class)
    rosters = _bundled_raw()
    if key not in rosters:
        raise KeyError(
            f"no bundled roster for {protected_class!r}; available: {', '.join(sorted(rosters))}"
        )
    entries = tuple(
        SeedEntry(item["name"], Provenance(item["provenance"]))
        for item in rosters[key]["entities"]
    )
    return SeedRoster(key, entries)


def save_roster(roster: SeedRoster, path: str) -> None:
    payload = {
        "protected_class": roster.protected_class,
        "entities": [
            {"name": entry.name, "provenance": entry.provenance.value}
            for entry in roster.entries
        ],
    }
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, ensure_ascii=False, indent=2)
        handle.write("\n")


def load_roster(path: str) -> SeedRoster:
    with open(path, encoding="utf-8") as handle:
        payload = json.load(handle)
    entries = tuple(
        SeedEntry(item["name"], Provenance(item["provenance"]))
        for item in payload["entities"]
    )
    return SeedRoster(payload["protected_class"], entries)
