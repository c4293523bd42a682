"""Shared fixtures: a deterministic mock backend and small pre-crawled graphs.

The expensive fixtures are session-scoped so the whole suite reuses one crawl
where a fresh one is not the point of the test.
"""

from __future__ import annotations

import pytest

from stereocrawl import (
    CrawlConfig,
    KnowledgeGraph,
    MockEngine,
    SeedEntry,
    SeedRoster,
    Provenance,
    crawl,
    load_default_corpus,
)

SMALL_SUBJECTS = (
    "American people",
    "Australian people",
    "French people",
    "Indian people",
    "Mexican people",
)


def make_roster(names, protected_class="nationality", provenance=Provenance.MANUAL):
    return SeedRoster(
        protected_class=protected_class,
        entries=tuple(SeedEntry(name=n, provenance=provenance) for n in names),
    )


@pytest.fixture(scope="session")
def corpus():
    return load_default_corpus()


@pytest.fixture(scope="session")
def engine(corpus):
    return MockEngine(corpus, seed=0)


@pytest.fixture(scope="session")
def small_roster():
    return make_roster(SMALL_SUBJECTS)


@pytest.fixture(scope="session")
def small_config():
    # 5 subjects x 4 templates x 5 draws = 100 init triples, then
    # 2 iterations x 2 strategies x 5 subjects x 2 executions = 40 more.
    return CrawlConfig(iterations=2, executions_per_strategy=2, rng_seed=7)


@pytest.fixture(scope="session")
def small_crawl(small_roster, small_config, engine):
    audit = []
    result = crawl(
        "nationality", small_roster, small_config, engine, audit_sink=audit.append
    )
    return result, audit


@pytest.fixture(scope="session")
def small_graph(small_crawl) -> KnowledgeGraph:
    return small_crawl[0].graph
