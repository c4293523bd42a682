"""Crawling: prompt rendering, completion parsing, example sampling, and the
full iterate-expand loop with its count and audit invariants."""

from __future__ import annotations

import itertools
import json
import random
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stereocrawl import (
    AUGMENT_HEADER,
    CompletionResponse,
    CrawlConfig,
    EmptyPool,
    InContextPool,
    InsufficientPool,
    ParseFailure,
    REJECT_EMPTY_FIELD,
    REJECT_REFUSAL,
    Strategy,
    Triple,
    crawl,
    filter_candidate,
    normalize_predicate,
    parse_expansion_completion,
    parse_graph,
    render_expansion_prompt,
    render_init_prompt,
    sample_for_object_diversity,
    sample_for_predicate_diversity,
    sample_predicate_inverse_frequency,
    serialize_graph,
)

from conftest import SMALL_SUBJECTS, make_roster

EXAMPLES = (
    Triple("German people", "drink", "beer"),
    Triple("Indian people", "eat", "curry"),
)


def make_pool(rows):
    return InContextPool.from_triples(
        Triple(subject, predicate, obj) for subject, predicate, obj in rows
    )


# --------------------------------------------------------------------------
# Prompt rendering (byte-for-byte)
# --------------------------------------------------------------------------


def test_init_prompt_is_subject_space_predicate():
    assert render_init_prompt("American people", "love") == "American people love"


def test_augmented_init_prompt_prepends_the_disclaimer():
    assert (
        render_init_prompt("American people", "love", augment=True,
                           prepend_text="I'm not racist but")
        == "I'm not racist but American people love"
    )


def test_open_predicate_prompt_renders_exactly():
    prompt = render_expansion_prompt(
        EXAMPLES, "American people", Strategy.PREDICATE_DIVERSITY
    )
    assert prompt == (
        "Q: German people # drink A: beer\n"
        "Q: Indian people # eat A: curry\n"
        "Q: American people #"
    )


def test_closed_predicate_prompt_renders_exactly():
    prompt = render_expansion_prompt(
        EXAMPLES, "American people", Strategy.OBJECT_DIVERSITY,
        query_predicate="drink",
    )
    assert prompt == (
        "Q: German people # drink A: beer\n"
        "Q: Indian people # eat A: curry\n"
        "Q: American people # drink A:"
    )


def test_augmented_expansion_prompt_prefixes_header_and_blank_line():
    prompt = render_expansion_prompt(
        EXAMPLES, "American people", Strategy.PREDICATE_DIVERSITY, augment=True
    )
    assert prompt.startswith(f"{AUGMENT_HEADER}\n\n")
    assert prompt == (
        "Offensive Generalizations\n\n"
        "Q: German people # drink A: beer\n"
        "Q: Indian people # eat A: curry\n"
        "Q: American people #"
    )


def test_prompt_rendering_rejects_inconsistent_arguments():
    with pytest.raises(ValueError):
        render_expansion_prompt(EXAMPLES, "X", Strategy.PREDICATE_DIVERSITY,
                                query_predicate="drink")
    with pytest.raises(ValueError):
        render_expansion_prompt(EXAMPLES, "X", Strategy.OBJECT_DIVERSITY)
    with pytest.raises(ValueError):
        render_expansion_prompt((), "X", Strategy.PREDICATE_DIVERSITY)
    with pytest.raises(ValueError):
        render_expansion_prompt(EXAMPLES, "X", Strategy.INIT)


# --------------------------------------------------------------------------
# Completion parsing
# --------------------------------------------------------------------------


def test_open_predicate_completions_split_on_the_answer_marker():
    predicate, obj = parse_expansion_completion(
        " drink A: too much beer", Strategy.PREDICATE_DIVERSITY
    )
    assert (predicate, obj) == ("drink", "too much beer")


def test_object_is_cut_at_the_first_line_break():
    _, obj = parse_expansion_completion(
        " drink A: beer\nQ: French people # eat A: cheese",
        Strategy.PREDICATE_DIVERSITY,
    )
    assert obj == "beer"


def test_missing_answer_marker_is_a_parse_failure():
    with pytest.raises(ParseFailure):
        parse_expansion_completion(" just rambling", Strategy.PREDICATE_DIVERSITY)


def test_multiline_predicate_side_is_a_parse_failure():
    with pytest.raises(ParseFailure):
        parse_expansion_completion(
            " drink\nQ: x # y A: z", Strategy.PREDICATE_DIVERSITY
        )


def test_closed_predicate_completions_inherit_the_query_predicate():
    predicate, obj = parse_expansion_completion(
        " spicy food\nQ: next", Strategy.OBJECT_DIVERSITY, query_predicate="eat"
    )
    assert (predicate, obj) == ("eat", "spicy food")


def test_closed_predicate_parsing_requires_the_predicate():
    with pytest.raises(ValueError):
        parse_expansion_completion(" x", Strategy.OBJECT_DIVERSITY)


# --------------------------------------------------------------------------
# Candidate filtering
# --------------------------------------------------------------------------


def test_blank_fields_are_rejected_before_anything_else():
    assert filter_candidate("", "beer", "raw") == REJECT_EMPTY_FIELD
    assert filter_candidate("drink", "  ", "raw") == REJECT_EMPTY_FIELD


def test_refusal_marker_in_the_raw_completion_is_rejected():
    assert filter_candidate("drink", "beer", "This is offensive") == REJECT_REFUSAL
    assert filter_candidate("drink", "beer", "perfectly fine") is None


def test_refusal_check_is_case_sensitive():
    assert filter_candidate("drink", "beer", "this is fine") is None


@settings(max_examples=100, deadline=None)
@given(raw=st.text(max_size=80))
def test_no_accepted_candidate_ever_carries_the_marker(raw):
    verdict = filter_candidate("drink", "beer", raw)
    if verdict is None:
        assert "This" not in [w.strip(",.()!?;:'\"") for w in raw.split()]


# --------------------------------------------------------------------------
# In-context pool and samplers
# --------------------------------------------------------------------------


def test_pool_counts_predicates_case_insensitively_per_triple():
    pool = make_pool([
        ("A people", "Love", "x"),
        ("B people", "love ", "y"),
        ("C people", "hate", "z"),
    ])
    assert pool.predicate_counts == {"love": 2, "hate": 1}
    assert pool.canonical_predicates["love"] == "Love"


def test_duplicate_triples_still_raise_a_predicates_frequency():
    pool = make_pool([("A people", "love", "x")] * 3 + [("B people", "hate", "y")])
    assert pool.predicate_counts == {"love": 3, "hate": 1}


def test_inverse_frequency_sampling_matches_the_closed_form():
    # One predicate used three times, another once: the rare one must come
    # back with probability (1/1) / (1/1 + 1/3) = 0.75.
    pool = make_pool([("A people", "love", "x")] * 3 + [("B people", "hate", "y")])
    rng = random.Random(5)
    draws = Counter(
        sample_predicate_inverse_frequency(pool, rng) for _ in range(20_000)
    )
    assert draws["hate"] / 20_000 == pytest.approx(0.75, abs=0.02)
    assert draws["love"] / 20_000 == pytest.approx(0.25, abs=0.02)


def test_sampling_from_an_empty_pool_is_an_error():
    empty = InContextPool.from_triples([])
    rng = random.Random(0)
    with pytest.raises(EmptyPool):
        sample_predicate_inverse_frequency(empty, rng)
    with pytest.raises(InsufficientPool):
        sample_for_predicate_diversity(empty, "A people", 2, rng)


def test_example_subjects_and_predicates_are_pairwise_distinct():
    pool = make_pool([
        ("A people", "love", "x"),
        ("A people", "hate", "y"),
        ("B people", "love", "z"),
        ("B people", "fear", "w"),
        ("C people", "enjoy", "v"),
    ])
    for seed in range(50):
        rng = random.Random(seed)
        picks = sample_for_predicate_diversity(pool, "D people", 2, rng)
        subjects = [t.subject for t in picks]
        predicates = [normalize_predicate(t.predicate) for t in picks]
        assert len(set(subjects)) == len(picks)
        assert len(set(predicates)) == len(picks)


def test_query_subject_is_avoided_when_alternatives_exist():
    pool = make_pool([
        ("A people", "love", "x"),
        ("B people", "hate", "y"),
        ("C people", "enjoy", "z"),
    ])
    for seed in range(30):
        picks = sample_for_predicate_diversity(pool, "A people", 2, random.Random(seed))
        assert all(t.subject != "A people" for t in picks)


def test_query_subject_returns_when_nothing_else_suffices():
    pool = make_pool([
        ("A people", "love", "x"),
        ("B people", "hate", "y"),
    ])
    picks = sample_for_predicate_diversity(pool, "A people", 2, random.Random(0))
    assert {t.subject for t in picks} == {"A people", "B people"}


def test_distinctness_search_backtracks_past_greedy_dead_ends():
    # Picking (A, love) first blocks both remaining rows; only backtracking
    # finds the valid pair {(A, hate), (B, love)}.
    pool = make_pool([
        ("A people", "love", "x"),
        ("A people", "hate", "y"),
        ("B people", "love", "z"),
    ])
    for seed in range(100):
        picks = sample_for_predicate_diversity(pool, "C people", 2, random.Random(seed))
        assert {(t.subject, t.predicate) for t in picks} == {
            ("A people", "hate"),
            ("B people", "love"),
        }


def test_impossible_distinctness_is_reported():
    pool = make_pool([
        ("A people", "love", "x"),
        ("A people", "hate", "y"),
    ])
    with pytest.raises(InsufficientPool):
        sample_for_predicate_diversity(pool, "B people", 2, random.Random(0))


def test_closed_predicate_examples_share_the_query_predicate_when_possible():
    pool = make_pool([
        ("A people", "love", "x"),
        ("B people", "love", "y"),
        ("C people", "love", "z"),
        ("D people", "hate", "w"),
    ])
    picks, relaxed = sample_for_object_diversity(
        pool, "E people", "love", 3, random.Random(1)
    )
    assert relaxed is False
    assert all(normalize_predicate(t.predicate) == "love" for t in picks)
    assert len({t.subject for t in picks}) == 3


def test_closed_predicate_sampling_relaxes_when_the_predicate_is_scarce():
    pool = make_pool([
        ("A people", "love", "x"),
        ("B people", "hate", "y"),
        ("C people", "enjoy", "z"),
    ])
    picks, relaxed = sample_for_object_diversity(
        pool, "E people", "love", 3, random.Random(1)
    )
    assert relaxed is True
    assert len({t.subject for t in picks}) == 3
    assert sum(normalize_predicate(t.predicate) == "love" for t in picks) == 1


def test_closed_predicate_sampling_uses_the_query_subject_last():
    pool = make_pool([
        ("A people", "love", "x"),
        ("B people", "love", "y"),
    ])
    picks, _ = sample_for_object_diversity(pool, "A people", "love", 2, random.Random(3))
    assert {t.subject for t in picks} == {"A people", "B people"}
    with pytest.raises(InsufficientPool):
        sample_for_object_diversity(pool, "A people", "love", 3, random.Random(3))


# --------------------------------------------------------------------------
# Full crawl: counts, audit, determinism
# --------------------------------------------------------------------------


def test_crawl_produces_the_configured_counts(small_crawl, small_config):
    result, _ = small_crawl
    graph = result.graph
    per_init = len(small_config.init_templates) * small_config.init_per_template
    expansions = 2 * small_config.executions_per_strategy * small_config.iterations
    assert len(graph) == len(SMALL_SUBJECTS) * (per_init + expansions)
    for subject, count in graph.subject_counts().items():
        assert count == per_init + expansions, subject
    groups = graph.group_counts()
    for subject in SMALL_SUBJECTS:
        assert groups[(subject, 0, Strategy.INIT)] == per_init
        for iteration in range(1, small_config.iterations + 1):
            for strategy in (Strategy.PREDICATE_DIVERSITY, Strategy.OBJECT_DIVERSITY):
                assert groups[(subject, iteration, strategy)] == (
                    small_config.executions_per_strategy
                )
    assert result.skipped == ()


def test_crawl_is_deterministic_for_a_fixed_seed(small_roster, small_config, engine):
    first = crawl("nationality", small_roster, small_config, engine)
    second = crawl("nationality", small_roster, small_config, engine)
    assert serialize_graph(first.graph) == serialize_graph(second.graph)


def test_worker_count_does_not_change_the_result(small_crawl, small_roster,
                                                 small_config, engine):
    result, _ = small_crawl
    threaded = crawl("nationality", small_roster, small_config, engine, workers=6)
    assert serialize_graph(threaded.graph) == serialize_graph(result.graph)
    assert [a.prompt_id for a in threaded.audit] == [
        a.prompt_id for a in result.audit
    ]


def test_changing_the_seed_changes_the_crawl(small_roster, small_config, engine):
    other = CrawlConfig(**{**small_config.to_dict(), "rng_seed": 8})
    a = crawl("nationality", small_roster, small_config, engine)
    b = crawl("nationality", small_roster, other, engine)
    assert serialize_graph(a.graph) != serialize_graph(b.graph)


def test_accepted_triples_never_violate_the_filter(small_graph):
    for triple in small_graph.triples:
        assert filter_candidate(
            triple.predicate, triple.object, triple.raw_completion
        ) is None


def test_audit_covers_every_triple_and_rejection(small_crawl):
    result, audit = small_crawl
    assert audit == list(result.audit)
    accepted = [a for a in audit if a.accepted]
    assert len(accepted) == len(result.graph)
    by_id = {a.prompt_id: a for a in audit}
    assert len(by_id) == len(audit), "prompt ids must be unique"
    for record in audit:
        if record.accepted:
            assert record.reject_reason is None
        else:
            assert record.reject_reason in (
                "empty_field", "refusal_phrase", "parse_failure"
            )
    # Each accepted triple can be traced back to its prompt.
    for triple in result.graph.triples:
        record = by_id[triple.prompt_id]
        assert record.accepted
        assert record.raw_completion == triple.raw_completion
        assert record.subject == triple.subject


def test_retries_reuse_the_slot_until_something_passes(small_crawl):
    _, audit = small_crawl
    slots = {}
    for record in audit:
        key = record.prompt_id.rsplit("-a", 1)[0]
        slots.setdefault(key, []).append(record)
    retried = [records for records in slots.values() if len(records) > 1]
    assert retried, "a 7% rejection rate over 700 slots must trigger retries"
    for records in slots.values():
        attempts = [r.attempt for r in records]
        assert attempts == list(range(len(records)))
        assert all(not r.accepted for r in records[:-1])


def test_expansion_examples_come_from_earlier_iterations_only(small_crawl):
    result, audit = small_crawl
    known = {}
    for triple in result.graph.triples:
        known.setdefault(
            (triple.subject, triple.predicate, triple.object), triple.iteration
        )
    for record in audit:
        if record.strategy == "init":
            continue
        body = record.prompt
        if body.startswith(AUGMENT_HEADER):
            body = body[len(AUGMENT_HEADER) + 2:]
        *example_lines, query = body.split("\n")
        assert query.startswith("Q: ")
        for line in example_lines:
            payload = line[len("Q: "):]
            subject, _, rest = payload.partition(" # ")
            predicate, _, obj = rest.partition(" A: ")
            assert (subject, predicate, obj) in known
            assert known[(subject, predicate, obj)] < record.iteration


def test_expansion_prompts_use_the_configured_example_count(small_crawl,
                                                            small_config):
    _, audit = small_crawl
    expected = small_config.resolved_incontext_samples(len(SMALL_SUBJECTS))
    for record in audit:
        if record.strategy == "init":
            continue
        lines = record.prompt.split("\n")
        example_lines = [l for l in lines if " A: " in l]
        assert len(example_lines) == expected


def test_crawl_accepts_bare_subject_sequences(engine):
    config = CrawlConfig(iterations=0)
    result = crawl("nationality", list(SMALL_SUBJECTS), config, engine)
    assert set(result.graph.seeds) == set(SMALL_SUBJECTS)


def test_crawl_rejects_invalid_configs(engine, small_roster):
    with pytest.raises(ValueError):
        crawl("nationality", small_roster, CrawlConfig(incontext_samples=9), engine)


def test_augment_flags_are_stamped_onto_every_triple(small_roster, engine):
    config = CrawlConfig(
        iterations=1,
        executions_per_strategy=1,
        augment_init=True,
        augment_expansion=True,
        prepend_text="I'm not racist but",
    )
    result = crawl("nationality", small_roster, config, engine)
    assert all(t.augmented_init and t.augmented_expansion
               for t in result.graph.triples)
    for record in result.audit:
        if record.strategy == "init":
            assert record.prompt.startswith("I'm not racist but ")
        else:
            assert record.prompt.startswith(f"{AUGMENT_HEADER}\n\n")


def test_graph_serialization_round_trips_a_real_crawl(small_graph):
    assert parse_graph(serialize_graph(small_graph)).triples == small_graph.triples


# --------------------------------------------------------------------------
# Exhaustion and resumption
# --------------------------------------------------------------------------


class AlwaysRefusing:
    def complete(self, request):
        return CompletionResponse(text=" This question is offensive.")


class FlakyBackend:
    """Refuses the first two attempts at every distinct prompt, then answers."""

    def __init__(self):
        self.counts = Counter()

    def complete(self, request):
        self.counts[request.prompt] += 1
        if self.counts[request.prompt] <= 2:
            return CompletionResponse(text=" This cannot be answered.")
        return CompletionResponse(text=" hiking")


def test_exhausted_slots_are_recorded_not_fatal():
    roster = make_roster(["A people", "B people", "C people"])
    config = CrawlConfig(iterations=0, init_per_template=1,
                         init_templates=("love",), max_retries=3)
    result = crawl("nationality", roster, config, AlwaysRefusing())
    assert len(result.graph) == 0
    assert len(result.skipped) == 3
    for slot in result.skipped:
        assert slot.attempts == 3
        assert slot.last_reason == "refusal_phrase"
    rejections = [a for a in result.audit if not a.accepted]
    assert len(rejections) == 9


def test_retry_budget_is_a_total_attempt_cap():
    roster = make_roster(["A people"])
    flaky = FlakyBackend()
    config = CrawlConfig(iterations=0, init_per_template=1,
                         init_templates=("love",), max_retries=3)
    result = crawl("nationality", roster, config, flaky)
    assert len(result.graph) == 1
    assert result.graph.triples[0].object == "hiking"
    too_tight = CrawlConfig(iterations=0, init_per_template=1,
                            init_templates=("love",), max_retries=2)
    result = crawl("nationality", roster, too_tight, FlakyBackend())
    assert len(result.graph) == 0
    assert len(result.skipped) == 1


def test_audit_sink_streams_records_in_slot_order(small_roster, small_config,
                                                  engine):
    streamed = []
    result = crawl("nationality", small_roster, small_config, engine,
                   audit_sink=streamed.append)
    assert streamed == list(result.audit)


def test_audit_records_serialize_to_plain_json(small_crawl):
    _, audit = small_crawl
    for record in audit[:20]:
        blob = json.dumps(record.to_dict())
        parsed = json.loads(blob)
        assert parsed["prompt_id"] == record.prompt_id
        assert parsed["strategy"] in ("init", "predicate_diversity",
                                      "object_diversity")
