"""Crawl a small stereotype knowledge graph with the offline mock backend.

The crawl starts from a seed roster of demographic groups, asks the backend
to complete initialization templates like "<subject> love", then runs
expansion iterations that reuse earlier triples as few-shot examples so the
model keeps inventing new predicates and objects.

Run from the repository root:

    python3 demos/01_crawl_a_graph.py
"""

from collections import Counter
from pathlib import Path

from stereocrawl import (
    CrawlConfig,
    MockEngine,
    crawl,
    export_dot,
    load_bundled_roster,
    serialize_graph,
)

OUT = Path(__file__).parent / "output"


def main() -> None:
    OUT.mkdir(exist_ok=True)

    roster = load_bundled_roster("nationality")
    print(f"seed roster ({roster.protected_class}): {len(roster.entities)} groups")
    print("  " + ", ".join(roster.entities[:5]) + ", ...")

    # A deliberately small configuration so the demo finishes in about a
    # second: 2 completions per template and 2 expansion iterations.
    config = CrawlConfig(init_per_template=2, iterations=2,
                         executions_per_strategy=2, rng_seed=0)
    engine = MockEngine(seed=0)
    result = crawl(roster.protected_class, roster, config, engine, workers=4)
    graph = result.graph

    print(f"\ncrawled {len(graph)} triples "
          f"({len(result.audit)} prompts sent, {len(result.skipped)} slots skipped)")

    per_iteration = Counter(t.iteration for t in graph.triples)
    for iteration in sorted(per_iteration):
        stage = "initialization" if iteration == 0 else f"expansion {iteration}"
        print(f"  iteration {iteration} ({stage}): {per_iteration[iteration]} triples")

    print("\na few crawled assertions:")
    for triple in graph.triples[:3] + graph.triples[-3:]:
        print(f"  {triple.subject} | {triple.predicate} | {triple.object}"
              f"   [{triple.strategy.value}, iteration {triple.iteration}]")

    graph_path = OUT / "nationality_graph.jsonl"
    graph_path.write_bytes(serialize_graph(graph))
    dot_path = OUT / "nationality_graph.dot"
    dot_path.write_text(export_dot(graph), encoding="utf-8")
    print(f"\nwrote {graph_path}")
    print(f"wrote {dot_path}  (render with: dot -Tsvg {dot_path})")


if __name__ == "__main__":
    main()
