"""Cluster crawled statements into topics and measure per-subject divergence.

Each triple's predicate + object text is tokenized, lemmatized, and embedded
with the bundled word vectors; the document vectors are clustered with
HDBSCAN.  Every subject then gets a distribution over the discovered topics,
and its Kullback-Leibler divergence from the pooled reference distribution
says how far that group's portrayal drifts from the corpus-wide picture.

Run from the repository root:

    python3 demos/03_topic_divergence.py
"""

from pathlib import Path

from stereocrawl import (
    CrawlConfig,
    MockEngine,
    crawl,
    load_bundled_roster,
    model_topics,
    write_topic_reports,
)

OUT = Path(__file__).parent / "output"


def main() -> None:
    OUT.mkdir(exist_ok=True)

    roster = load_bundled_roster("nationality")
    config = CrawlConfig(init_per_template=3, iterations=3,
                         executions_per_strategy=4, rng_seed=2)
    engine = MockEngine(seed=2)
    graph = crawl(roster.protected_class, roster, config, engine, workers=4).graph
    print(f"crawled {len(graph)} statements across {len(roster.entities)} subjects")

    result = model_topics(graph)
    print(f"\nclustered {result.n_documents} documents "
          f"(min cluster size {result.min_cluster_size_used}) "
          f"into {len(result.summaries)} topics; "
          f"noise rate {result.noise_rate:.2f}")

    print("\nrepresentative words per topic:")
    for topic in result.summaries:
        words = ", ".join(topic.representative_words)
        print(f"  topic {topic.topic_id} ({topic.size} docs): {words}")

    ranked = sorted(result.entropies.items(), key=lambda kv: -kv[1])
    print("\nKL divergence from the pooled reference (highest first):")
    for subject, entropy in ranked[:5]:
        print(f"  {subject:<22} {entropy:.4f} nats")
    print("  ...")
    for subject, entropy in ranked[-2:]:
        print(f"  {subject:<22} {entropy:.4f} nats")

    outdir = OUT / "nationality_topics"
    write_topic_reports(result, str(outdir))
    print(f"\nwrote CSV reports to {outdir}/")


if __name__ == "__main__":
    main()
