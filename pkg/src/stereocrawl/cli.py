"""Command line interface.

Exit codes: 0 success, 1 external-service failure, 2 unreadable or invalid
data, 64 bad command line.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .backend import (
    CompletionBackend,
    MockCorpus,
    MockEngine,
    RemoteCompletionBackend,
)
from .crawler import PromptAudit, crawl
from .errors import (
    RateLimited,
    RemoteRefusal,
    ScorerTransport,
    StereocrawlError,
    TransportError,
)
from .harm import (
    LexiconRegardScorer,
    LexiconToxicityScorer,
    PerspectiveLikeClient,
    RegardClient,
    augmentation_effect_test,
    read_harm_csv,
    score_graph,
    statement_toxicities,
    write_harm_csv,
    write_harm_metadata,
)
from .model import CrawlConfig, KnowledgeGraph, export_dot, parse_graph, serialize_graph
from .reports import write_harm_figures, write_topic_figures
from .seeds import (
    bundled_classes,
    generate_seeds,
    load_bundled_roster,
    load_roster,
    merge_manual,
    profile_for,
    save_roster,
)
from .topics import (
    load_embeddings,
    model_topics,
    read_distributions_csv,
    read_entropy_csv,
    read_representative_words_csv,
    write_topic_reports,
)

EXIT_OK = 0
EXIT_EXTERNAL = 1
EXIT_DATA = 2
EXIT_USAGE = 64


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that exits 64 on usage errors."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# --------------------------------------------------------------------------
# Shared flag groups
# --------------------------------------------------------------------------


def _add_backend_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--backend",
        choices=("mock", "remote"),
        default="mock",
        help="completion backend (default: mock)",
    )
    parser.add_argument(
        "--backend-seed",
        type=int,
        default=0,
        help="seed for the mock backend's deterministic sampling",
    )
    parser.add_argument(
        "--mock-corpus", metavar="PATH", help="custom corpus JSON for the mock backend"
    )
    parser.add_argument(
        "--llm-url", metavar="URL", help="remote completion endpoint (or env STEREOCRAWL_LLM_URL)"
    )
    parser.add_argument(
        "--llm-model", default="text-completion", help="model name sent to the remote endpoint"
    )


def _make_backend(args: argparse.Namespace) -> CompletionBackend:
    if args.backend == "mock":
        corpus = MockCorpus.load(args.mock_corpus) if args.mock_corpus else None
        return MockEngine(corpus, seed=args.backend_seed)
    return RemoteCompletionBackend(url=args.llm_url, model=args.llm_model)


# --------------------------------------------------------------------------
# seeds
# --------------------------------------------------------------------------


def cmd_seeds(args: argparse.Namespace) -> int:
    if args.bundled:
        roster = load_bundled_roster(args.protected_class)
    else:
        backend = _make_backend(args)
        run_log: list[dict] = []
        roster = generate_seeds(
            args.protected_class,
            backend,
            runs=args.runs,
            min_support=args.min_support,
            rng_seed=args.seed,
            run_log=run_log,
        )
        if args.log:
            with open(args.log, "w", encoding="utf-8") as handle:
                for entry in run_log:
                    handle.write(json.dumps(entry, ensure_ascii=False) + "\n")
    if args.add:
        roster = merge_manual(roster, args.add)
    save_roster(roster, args.out)
    for entry in roster.entries:
        print(f"{entry.provenance.value:>8}  {entry.name}")
    print(f"wrote {len(roster)} entities to {args.out}")
    return EXIT_OK


# --------------------------------------------------------------------------
# crawl
# --------------------------------------------------------------------------

_CONFIG_FLAGS = (
    ("iterations", "iterations"),
    ("init_per_template", "init_per_template"),
    ("executions", "executions_per_strategy"),
    ("incontext", "incontext_samples"),
    ("temperature", "temperature"),
    ("augment_init", "augment_init"),
    ("augment_expansion", "augment_expansion"),
    ("prepend", "prepend_text"),
    ("max_retries", "max_retries"),
    ("seed", "rng_seed"),
)


def _build_config(args: argparse.Namespace, protected_class: str) -> CrawlConfig:
    """Layer config sources: defaults, then --config file, then explicit flags."""
    merged: dict = {}
    if args.config:
        with open(args.config, encoding="utf-8") as handle:
            loaded = json.load(handle)
        if not isinstance(loaded, dict):
            raise ValueError(f"{args.config}: config file must hold a JSON object")
        merged.update(loaded)
    for flag, field in _CONFIG_FLAGS:
        value = getattr(args, flag)
        if value is not None:
            merged[field] = value
    config = CrawlConfig.from_dict(merged)
    if config.augment_init and "prepend_text" not in merged:
        # No explicit prefix: use the per-class disclaimer convention.
        config = CrawlConfig.from_dict({**config.to_dict(), "prepend_text": profile_for(protected_class).prepend_text})
    return config


def cmd_crawl(args: argparse.Namespace) -> int:
    roster = load_bundled_roster(args.bundled) if args.bundled else load_roster(args.seeds)
    protected_class = roster.protected_class
    config = _build_config(args, protected_class)
    config.validate(len(roster))
    backend = _make_backend(args)
    out = Path(args.out)
    audit_path = Path(args.audit) if args.audit else out.with_suffix(".audit.jsonl")
    graph = KnowledgeGraph(protected_class, roster.entities, config=config)
    interrupted = False
    with open(audit_path, "w", encoding="utf-8") as audit_file:

        def sink(record: PromptAudit) -> None:
            audit_file.write(json.dumps(record.to_dict(), ensure_ascii=False) + "\n")

        try:
            result = crawl(
                protected_class,
                roster,
                config,
                backend,
                workers=args.workers,
                audit_sink=sink,
                graph=graph,
            )
        except KeyboardInterrupt:
            interrupted = True
    out.write_bytes(serialize_graph(graph))
    if interrupted:
        print(
            f"interrupted: flushed {len(graph)} triples to {out} "
            f"(audit in {audit_path})",
            file=sys.stderr,
        )
        return 130
    if result.skipped:
        skipped_path = out.with_suffix(".skipped.jsonl")
        with open(skipped_path, "w", encoding="utf-8") as handle:
            for slot in result.skipped:
                handle.write(json.dumps(slot.to_dict(), ensure_ascii=False) + "\n")
        print(f"warning: {len(result.skipped)} slots exhausted retries, see {skipped_path}", file=sys.stderr)
    if args.dot:
        Path(args.dot).write_text(export_dot(graph), encoding="utf-8")
    by_iteration: dict[int, int] = {}
    for triple in graph.triples:
        by_iteration[triple.iteration] = by_iteration.get(triple.iteration, 0) + 1
    sizes = "  ".join(f"it{i}={by_iteration[i]}" for i in sorted(by_iteration))
    print(f"wrote {len(graph)} triples to {out} ({sizes}); audit in {audit_path}")
    return EXIT_OK


# --------------------------------------------------------------------------
# score
# --------------------------------------------------------------------------


def cmd_score(args: argparse.Namespace) -> int:
    graph = parse_graph(Path(args.graph).read_bytes())
    if args.regard == "lexicon":
        regard_scorer = LexiconRegardScorer()
    else:
        regard_scorer = RegardClient(url=args.regard_url)
    if args.toxicity == "lexicon":
        toxicity_scorer = LexiconToxicityScorer()
    else:
        toxicity_scorer = PerspectiveLikeClient(url=args.perspective_url)
    report = score_graph(graph, regard_scorer, toxicity_scorer)
    write_harm_csv(report, args.out)
    write_harm_metadata(report, str(Path(args.out).with_suffix(".meta.json")))
    for summary in report.summaries:
        print(
            f"{summary.subject}: regard {summary.overall_regard:+d} "
            f"(+{summary.n_positive}/-{summary.n_negative}), "
            f"toxicity mean {summary.toxicity_mean:.4f}"
        )
    if args.baseline:
        baseline_graph = parse_graph(Path(args.baseline).read_bytes())
        effect = augmentation_effect_test(
            statement_toxicities(baseline_graph, toxicity_scorer),
            statement_toxicities(graph, toxicity_scorer),
        )
        effect_path = args.effect_out or str(Path(args.out).with_suffix(".effect.json"))
        with open(effect_path, "w", encoding="utf-8") as handle:
            json.dump(effect.to_dict(), handle, ensure_ascii=False, indent=2)
            handle.write("\n")
        print(
            f"toxicity shift vs baseline: U={effect.u_statistic:.1f} "
            f"p={effect.p_value:.3g} ({effect.method})"
        )
    print(f"wrote harm summary to {args.out}")
    return EXIT_OK


# --------------------------------------------------------------------------
# topics
# --------------------------------------------------------------------------


def _load_graphs_single_class(paths: list[str]) -> KnowledgeGraph:
    graphs = [parse_graph(Path(p).read_bytes()) for p in paths]
    classes = {g.protected_class for g in graphs}
    if len(classes) > 1:
        raise ValueError(
            "topic modeling runs per protected class, got: " + ", ".join(sorted(classes))
        )
    merged = graphs[0]
    for extra in graphs[1:]:
        for subject in extra.seeds:
            if subject not in merged.seeds:
                merged.seeds.append(subject)
        merged.triples.extend(extra.triples)
    return merged


def cmd_topics(args: argparse.Namespace) -> int:
    graph = _load_graphs_single_class(args.graph)
    table = load_embeddings(args.vectors)
    result = model_topics(
        graph, table, top_n=args.top_words, min_size=args.min_cluster_size
    )
    write_topic_reports(result, args.outdir)
    print(
        f"{len(result.summaries)} topics over {result.n_documents} statements "
        f"(min cluster size {result.min_cluster_size_used}, "
        f"noise {result.noise_rate:.1%}, oov {result.oov_rate:.1%})"
    )
    for summary in result.summaries:
        words = ", ".join(summary.representative_words)
        print(f"  topic {summary.topic_id} ({summary.size} statements): {words}")
    worst = sorted(result.entropies.items(), key=lambda kv: (-kv[1], kv[0]))
    for subject, value in worst:
        print(f"  divergence {subject}: {value:.4f}")
    print(f"wrote topic reports to {args.outdir}")
    return EXIT_OK


# --------------------------------------------------------------------------
# report
# --------------------------------------------------------------------------


def cmd_report(args: argparse.Namespace) -> int:
    if not args.harm and not args.topics_dir:
        raise ValueError("nothing to report: pass --harm and/or --topics-dir")
    written: list[str] = []
    if args.harm:
        summaries = read_harm_csv(args.harm)
        written += write_harm_figures(summaries, args.outdir)
    if args.topics_dir:
        topics_dir = Path(args.topics_dir)
        distributions = read_distributions_csv(str(topics_dir / "distributions.csv"))
        entropies = read_entropy_csv(str(topics_dir / "entropy.csv"))
        words = read_representative_words_csv(str(topics_dir / "representative_words.csv"))
        written += write_topic_figures(distributions, entropies, words, args.outdir)
    for path in written:
        print(path)
    print(f"wrote {len(written)} report files to {args.outdir}")
    return EXIT_OK


# --------------------------------------------------------------------------
# selftest
# --------------------------------------------------------------------------


def cmd_selftest(args: argparse.Namespace) -> int:
    out = Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    roster = load_bundled_roster("nationality")
    engine = MockEngine(seed=args.seed)
    profile = profile_for("nationality")
    configs = {
        "baseline": CrawlConfig(rng_seed=args.seed),
        "augmented": CrawlConfig(
            rng_seed=args.seed,
            augment_init=True,
            augment_expansion=True,
            prepend_text=profile.prepend_text,
        ),
    }
    failures: list[str] = []
    graphs = {}
    for tag, config in configs.items():
        with open(out / f"audit_{tag}.jsonl", "w", encoding="utf-8") as audit_file:

            def sink(record: PromptAudit) -> None:
                audit_file.write(json.dumps(record.to_dict(), ensure_ascii=False) + "\n")

            result = crawl(
                roster.protected_class,
                roster,
                config,
                engine,
                workers=args.workers,
                audit_sink=sink,
            )
        (out / f"graph_{tag}.jsonl").write_bytes(serialize_graph(result.graph))
        graphs[tag] = result.graph

        k = len(roster)
        expected_init = k * config.init_per_template * len(config.init_templates)
        expected_iter = 2 * k * config.executions_per_strategy
        expected_total = expected_init + config.iterations * expected_iter
        by_iteration: dict[int, int] = {}
        for triple in result.graph.triples:
            by_iteration[triple.iteration] = by_iteration.get(triple.iteration, 0) + 1
        checks = [
            ("total triples", len(result.graph), expected_total),
            ("initialization size", by_iteration.get(0, 0), expected_init),
        ]
        for i in range(1, config.iterations + 1):
            checks.append((f"iteration {i} size", by_iteration.get(i, 0), expected_iter))
        per_subject = expected_total // k
        for subject, count in result.graph.subject_counts().items():
            checks.append((f"{subject} triples", count, per_subject))
        checks.append(("skipped slots", len(result.skipped), 0))
        for name, got, want in checks:
            status = "ok" if got == want else "FAIL"
            if got != want:
                failures.append(f"{tag}: {name}: got {got}, want {want}")
            print(f"{status:4} {tag:9} {name}: {got}/{want}")

    reports = {tag: score_graph(graph) for tag, graph in graphs.items()}
    for tag, report in reports.items():
        write_harm_csv(report, str(out / f"harm_{tag}.csv"))
        write_harm_metadata(report, str(out / f"harm_{tag}.meta.json"))
    effect = augmentation_effect_test(
        statement_toxicities(graphs["baseline"]),
        statement_toxicities(graphs["augmented"]),
    )
    with open(out / "augmentation_test.json", "w", encoding="utf-8") as handle:
        json.dump(effect.to_dict(), handle, ensure_ascii=False, indent=2)
        handle.write("\n")
    print(f"ok   toxicity shift p={effect.p_value:.3g} ({effect.method})")

    topic_result = model_topics(graphs["augmented"])
    write_topic_reports(topic_result, str(out / "topics"))
    print(
        f"ok   topics: {len(topic_result.summaries)} found, "
        f"noise {topic_result.noise_rate:.1%}, oov {topic_result.oov_rate:.1%}"
    )

    figures = out / "figures"
    write_harm_figures(reports["augmented"].summaries, str(figures), roster.protected_class)
    write_topic_figures(
        {s: d.probabilities for s, d in topic_result.distributions.items()},
        topic_result.entropies,
        {t.topic_id: t.representative_words for t in topic_result.summaries},
        str(figures),
    )
    print(f"ok   figures written to {figures}")

    if failures:
        for failure in failures:
            print(f"selftest failure: {failure}", file=sys.stderr)
        return EXIT_EXTERNAL
    print("selftest passed")
    return EXIT_OK


# --------------------------------------------------------------------------
# Parser assembly
# --------------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="stereocrawl", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("seeds", help="build a seed-entity roster")
    p.add_argument("protected_class", help="e.g. nationality, religion, gender identity")
    p.add_argument("--out", required=True, help="roster JSON output path")
    p.add_argument("--bundled", action="store_true", help=f"use the bundled roster ({', '.join(bundled_classes())})")
    p.add_argument("--runs", type=int, default=5, help="prompt repetitions (default 5)")
    p.add_argument("--min-support", type=int, default=3, help="runs an entity must appear in (default 3)")
    p.add_argument("--add", action="append", default=[], metavar="NAME", help="manual entity, repeatable")
    p.add_argument("--seed", type=int, default=0, help="sampling seed")
    p.add_argument("--log", metavar="PATH", help="write the raw run log as JSON lines")
    _add_backend_flags(p)
    p.set_defaults(func=cmd_seeds)

    p = sub.add_parser("crawl", help="crawl a knowledge graph")
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--seeds", metavar="PATH", help="roster JSON from the seeds command")
    source.add_argument("--bundled", metavar="CLASS", help="use a bundled roster")
    p.add_argument("--out", required=True, help="graph output path (JSON lines)")
    p.add_argument("--audit", metavar="PATH", help="audit log path (default: <out>.audit.jsonl)")
    p.add_argument("--dot", metavar="PATH", help="also export the graph as DOT")
    p.add_argument("--config", metavar="PATH", help="JSON file with config fields")
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--init-per-template", type=int, default=None)
    p.add_argument("--executions", type=int, default=None, help="per strategy per subject")
    p.add_argument("--incontext", type=int, default=None, help="in-context examples per prompt")
    p.add_argument("--temperature", type=float, default=None)
    p.add_argument("--augment-init", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--augment-expansion", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--prepend", default=None, help="disclaimer prefix for augmented initialization")
    p.add_argument("--max-retries", type=int, default=None)
    p.add_argument("--seed", type=int, default=None, help="crawl rng seed")
    p.add_argument("--workers", type=int, default=1, help="parallel backend calls")
    _add_backend_flags(p)
    p.set_defaults(func=cmd_crawl)

    p = sub.add_parser("score", help="score a graph for regard and toxicity")
    p.add_argument("--graph", required=True, help="graph file to score")
    p.add_argument("--out", required=True, help="harm summary CSV path")
    p.add_argument("--regard", choices=("lexicon", "remote"), default="lexicon")
    p.add_argument("--regard-url", help="regard service URL (or env STEREOCRAWL_REGARD_URL)")
    p.add_argument("--toxicity", choices=("lexicon", "perspective"), default="lexicon")
    p.add_argument("--perspective-url", help="toxicity service URL override")
    p.add_argument("--baseline", metavar="PATH", help="baseline graph for the toxicity shift test")
    p.add_argument("--effect-out", metavar="PATH", help="where to write the shift test JSON")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("topics", help="model topics and per-subject divergence")
    p.add_argument("--graph", required=True, nargs="+", help="graph file(s), one protected class")
    p.add_argument("--outdir", required=True, help="directory for topic reports")
    p.add_argument("--vectors", help="word-vector text file (or env STEREOCRAWL_VECTORS)")
    p.add_argument("--top-words", type=int, default=5)
    p.add_argument("--min-cluster-size", type=int, default=None, help="override the size floor")
    p.set_defaults(func=cmd_topics)

    p = sub.add_parser("report", help="render SVG figures from score/topics outputs")
    p.add_argument("--harm", metavar="CSV", help="harm summary from the score command")
    p.add_argument("--topics-dir", metavar="DIR", help="directory from the topics command")
    p.add_argument("--outdir", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("selftest", help="run the full pipeline offline and check invariants")
    p.add_argument("--outdir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_selftest)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except (TransportError, RateLimited, RemoteRefusal, ScorerTransport) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EXTERNAL
    except (StereocrawlError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return 130


def entry() -> None:
    sys.exit(main(sys.argv[1:]))
