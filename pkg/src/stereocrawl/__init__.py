"""Crawl a text-completion model's group stereotypes into a knowledge graph
and quantify the representational harm they carry.

Typical offline flow::

    from stereocrawl import MockEngine, CrawlConfig, crawl, load_bundled_roster
    from stereocrawl import score_graph, model_topics

    roster = load_bundled_roster("nationality")
    result = crawl(roster.protected_class, roster, CrawlConfig(), MockEngine())
    harm = score_graph(result.graph)
    topics = model_topics(result.graph)
"""

from . import errors
from .errors import (
    DegenerateInput,
    DimensionMismatch,
    EmptyCorpus,
    EmptyInput,
    EmptyPool,
    EmptyRoster,
    InsufficientPool,
    InvalidTriple,
    MalformedRecord,
    MisalignedInput,
    NoTopics,
    ParseFailure,
    RateLimited,
    RemoteRefusal,
    SchemaVersionMismatch,
    ScorerRejectedInput,
    ScorerTransport,
    StereocrawlError,
    SubjectAllNoise,
    SubjectUnknown,
    SupportViolation,
    TooFewPoints,
    TransportError,
)
from .backend import (
    CompletionBackend,
    CompletionRequest,
    CompletionResponse,
    FinishReason,
    MockCorpus,
    MockEngine,
    RemoteCompletionBackend,
    load_default_corpus,
)
from .crawler import (
    AUGMENT_HEADER,
    REJECT_EMPTY_FIELD,
    REJECT_PARSE,
    REJECT_REFUSAL,
    CrawlResult,
    InContextPool,
    PromptAudit,
    SkippedSlot,
    crawl,
    filter_candidate,
    normalize_predicate,
    parse_expansion_completion,
    render_expansion_prompt,
    render_init_prompt,
    sample_for_object_diversity,
    sample_for_predicate_diversity,
    sample_predicate_inverse_frequency,
)
from .harm import (
    HARM_CSV_COLUMNS,
    EffectTest,
    HarmReport,
    LexiconRegardScorer,
    LexiconToxicityScorer,
    PerspectiveLikeClient,
    RegardClient,
    RegardLabel,
    RegardScorer,
    SubjectHarmSummary,
    ToxicityScore,
    ToxicityScorer,
    augmentation_effect_test,
    load_regard_lexicons,
    load_toxicity_lexicon,
    mann_whitney_u,
    read_harm_csv,
    render_statement,
    score_graph,
    statement_toxicities,
    summarize_subject,
    write_harm_csv,
    write_harm_metadata,
)
from .model import (
    CrawlConfig,
    KnowledgeGraph,
    Strategy,
    Triple,
    contains_refusal_marker,
    export_dot,
    parse_graph,
    serialize_graph,
)
from .reports import (
    box_chart,
    diverging_bar_chart,
    scatter_chart,
    write_harm_figures,
    write_topic_figures,
)
from .seeds import (
    ClassProfile,
    Provenance,
    SeedEntry,
    SeedRoster,
    bundled_classes,
    generate_seeds,
    load_bundled_roster,
    load_roster,
    merge_manual,
    normalize_class,
    normalize_entity,
    parse_list_completion,
    profile_for,
    save_roster,
)
from .text import Lemmatizer, load_lemmatizer, load_stopwords, tokenize
from .topics import (
    EmbeddingTable,
    TopicAssignment,
    TopicDistribution,
    TopicModelResult,
    TopicSummary,
    cluster,
    embed,
    load_embeddings,
    min_cluster_size,
    model_topics,
    preprocess,
    read_distributions_csv,
    read_entropy_csv,
    read_representative_words_csv,
    relative_entropy,
    representative_words,
    topic_distributions,
    write_topic_reports,
)

__version__ = "0.1.0"

__all__ = [
    "errors",
    "AUGMENT_HEADER",
    "augmentation_effect_test",
    "box_chart",
    "bundled_classes",
    "ClassProfile",
    "cluster",
    "CompletionBackend",
    "CompletionRequest",
    "CompletionResponse",
    "contains_refusal_marker",
    "crawl",
    "CrawlConfig",
    "CrawlResult",
    "DegenerateInput",
    "DimensionMismatch",
    "diverging_bar_chart",
    "EffectTest",
    "embed",
    "EmbeddingTable",
    "EmptyCorpus",
    "EmptyInput",
    "EmptyPool",
    "EmptyRoster",
    "export_dot",
    "filter_candidate",
    "FinishReason",
    "generate_seeds",
    "HARM_CSV_COLUMNS",
    "HarmReport",
    "InContextPool",
    "InsufficientPool",
    "InvalidTriple",
    "KnowledgeGraph",
    "Lemmatizer",
    "LexiconRegardScorer",
    "LexiconToxicityScorer",
    "load_bundled_roster",
    "load_default_corpus",
    "load_embeddings",
    "load_lemmatizer",
    "load_regard_lexicons",
    "load_roster",
    "load_stopwords",
    "load_toxicity_lexicon",
    "MalformedRecord",
    "mann_whitney_u",
    "merge_manual",
    "min_cluster_size",
    "MisalignedInput",
    "MockCorpus",
    "MockEngine",
    "model_topics",
    "normalize_class",
    "normalize_entity",
    "normalize_predicate",
    "NoTopics",
    "parse_expansion_completion",
    "parse_graph",
    "parse_list_completion",
    "ParseFailure",
    "PerspectiveLikeClient",
    "preprocess",
    "profile_for",
    "PromptAudit",
    "Provenance",
    "RateLimited",
    "read_distributions_csv",
    "read_entropy_csv",
    "read_harm_csv",
    "read_representative_words_csv",
    "RegardClient",
    "RegardLabel",
    "RegardScorer",
    "REJECT_EMPTY_FIELD",
    "REJECT_PARSE",
    "REJECT_REFUSAL",
    "relative_entropy",
    "RemoteCompletionBackend",
    "RemoteRefusal",
    "render_expansion_prompt",
    "render_init_prompt",
    "render_statement",
    "representative_words",
    "sample_for_object_diversity",
    "sample_for_predicate_diversity",
    "sample_predicate_inverse_frequency",
    "save_roster",
    "scatter_chart",
    "SchemaVersionMismatch",
    "score_graph",
    "ScorerRejectedInput",
    "ScorerTransport",
    "SeedEntry",
    "SeedRoster",
    "serialize_graph",
    "SkippedSlot",
    "statement_toxicities",
    "StereocrawlError",
    "Strategy",
    "SubjectAllNoise",
    "SubjectHarmSummary",
    "SubjectUnknown",
    "summarize_subject",
    "SupportViolation",
    "tokenize",
    "TooFewPoints",
    "topic_distributions",
    "TopicAssignment",
    "TopicDistribution",
    "TopicModelResult",
    "TopicSummary",
    "ToxicityScore",
    "ToxicityScorer",
    "TransportError",
    "Triple",
    "write_harm_csv",
    "write_harm_figures",
    "write_harm_metadata",
    "write_topic_figures",
    "write_topic_reports",
]
