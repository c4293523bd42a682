"""Exception types raised across the package.

Grouped by the subsystem that raises them; everything inherits from
StereocrawlError so callers can catch broadly. The CLI maps these onto
its exit-code contract (see cli module).
"""


class StereocrawlError(Exception):
    """Base class for all errors raised by this package."""


# --- graph model / persistence ---

class SubjectUnknown(StereocrawlError):
    """Triple references a subject outside the graph's seed-entity set."""


class InvalidTriple(StereocrawlError):
    """Triple violates a field invariant (empty field, refusal marker, ...)."""


class MalformedRecord(StereocrawlError):
    """A persisted graph record could not be parsed."""

    def __init__(self, line_number: int, reason: str):
        self.line_number = line_number
        self.reason = reason
        super().__init__(f"line {line_number}: {reason}")


class SchemaVersionMismatch(StereocrawlError):
    """Persisted graph declares a schema or version this build cannot read."""


# --- completion backends ---

class TransportError(StereocrawlError):
    """Network-level failure that survived the retry budget."""


class RemoteRefusal(StereocrawlError):
    """Completion endpoint rejected the request (HTTP 4xx other than 429)."""

    def __init__(self, status_code: int, body: str):
        self.status_code = status_code
        self.body = body
        super().__init__(f"HTTP {status_code}: {body[:200]}")


class RateLimited(StereocrawlError):
    """Endpoint kept returning 429 past the retry budget."""


class EmptyCorpus(StereocrawlError):
    """Mock corpus provides no vocabulary to sample from."""


# --- seed selection ---

class EmptyRoster(StereocrawlError):
    """Dynamic seed generation produced no entity with enough support."""


# --- crawler ---

class InsufficientPool(StereocrawlError):
    """In-context pool cannot satisfy the sampling constraints."""


class EmptyPool(StereocrawlError):
    """In-context pool holds no triples."""


class ParseFailure(StereocrawlError):
    """Completion did not match the expected prompt-slot shape."""


# --- harm scoring ---

class ScorerTransport(StereocrawlError):
    """Remote scorer could not be reached or answered malformed."""


class ScorerRejectedInput(StereocrawlError):
    """Scorer refused the input (e.g. empty statement)."""


class EmptyInput(StereocrawlError):
    """Aggregation called with no data."""


class MisalignedInput(StereocrawlError):
    """Parallel input lists differ in length."""


class DegenerateInput(StereocrawlError):
    """Statistical test called with an empty sample."""


# --- topic modeling ---

class DimensionMismatch(StereocrawlError):
    """Vectors of differing dimension passed to one clustering run."""


class TooFewPoints(StereocrawlError):
    """Fewer vectors than the minimum cluster size."""


class NoTopics(StereocrawlError):
    """Clustering produced no non-noise topic."""


class SubjectAllNoise(StereocrawlError):
    """Every triple of a subject fell into the noise bucket."""

    def __init__(self, subject: str):
        self.subject = subject
        super().__init__(f"all triples for {subject!r} are noise")


class SupportViolation(StereocrawlError):
    """p places mass on a topic where the reference q has none."""
