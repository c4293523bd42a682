"""Score a crawled graph for regard and toxicity, then test the augmentation shift.

Every triple renders as a plain statement ("Mexican people eat tacos") which
the bundled lexicon scorers label for regard (negative / neutral / positive)
and score for identity-attack toxicity in [0, 1].  Per-subject summaries
aggregate those statement scores; overall regard is simply
n_positive - n_negative.

The second half crawls the same roster again with augmentation switched on
(disclaimer prefixes such as "I'm not racist but") and shows that the
toxicity distribution shifts, quantified with a Mann-Whitney U test.

Run from the repository root:

    python3 demos/02_score_harm.py
"""

from pathlib import Path

from stereocrawl import (
    CrawlConfig,
    MockEngine,
    augmentation_effect_test,
    crawl,
    load_bundled_roster,
    profile_for,
    score_graph,
    statement_toxicities,
    write_harm_csv,
)

OUT = Path(__file__).parent / "output"


def main() -> None:
    OUT.mkdir(exist_ok=True)

    roster = load_bundled_roster("religion")
    config = CrawlConfig(init_per_template=3, iterations=2,
                         executions_per_strategy=3, rng_seed=1)
    engine = MockEngine(seed=1)

    baseline = crawl(roster.protected_class, roster, config, engine).graph
    report = score_graph(baseline)

    print(f"scored {len(baseline)} statements for {len(report.summaries)} subjects\n")
    print(f"{'subject':<22} {'regard':>6} {'tox mean':>9} {'tox median':>11}")
    for summary in report.summaries:
        print(f"{summary.subject:<22} {summary.overall_regard:>+6d} "
              f"{summary.toxicity_mean:>9.3f} {summary.toxicity_median:>11.3f}")

    csv_path = OUT / "religion_harm.csv"
    write_harm_csv(report, str(csv_path))
    print(f"\nwrote {csv_path}")

    # Augmented crawl: same seeds and parameters, but prompts carry the
    # class-specific disclaimer prefix and the offensive-generalizations
    # header, which pushes the backend toward its toxic vocabulary.
    profile = profile_for(roster.protected_class)
    augmented_config = CrawlConfig(
        init_per_template=3, iterations=2, executions_per_strategy=3, rng_seed=1,
        augment_init=True, augment_expansion=True,
        prepend_text=profile.prepend_text,
    )
    augmented = crawl(roster.protected_class, roster, augmented_config, engine).graph

    baseline_scores = statement_toxicities(baseline)
    augmented_scores = statement_toxicities(augmented)
    effect = augmentation_effect_test(baseline_scores, augmented_scores)

    mean = lambda xs: sum(xs) / len(xs)
    print(f"\naugmentation prefix: {profile.prepend_text!r}")
    print(f"mean toxicity: baseline {mean(baseline_scores):.3f} "
          f"vs augmented {mean(augmented_scores):.3f}")
    print(f"Mann-Whitney U = {effect.u_statistic:.1f}, "
          f"p = {effect.p_value:.3g} ({effect.method} method, "
          f"n = {effect.n_baseline} vs {effect.n_augmented})")


if __name__ == "__main__":
    main()
