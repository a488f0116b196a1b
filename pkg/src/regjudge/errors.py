"""Exception hierarchy shared across the package.

Every error raised by this package derives from :class:`RegJudgeError`,
so callers can catch one type at process boundaries (CLI, HTTP service)
and map it to an exit code or API error payload.
"""

from __future__ import annotations


class RegJudgeError(Exception):
    """Base class for all package errors."""


class InvalidInput(RegJudgeError):
    """A caller-supplied value violates a documented precondition."""


class InvalidIdentifier(InvalidInput):
    """A standard identifier is empty or normalizes to nothing."""


class CorpusReadError(RegJudgeError):
    """The corpus file could not be read from disk."""


class ParseError(RegJudgeError):
    """Structured input (JSON corpus, benchmark CSV) failed to parse.

    ``line`` is 1-based when known, else None.
    """

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message)
        self.line = line


class DimensionError(RegJudgeError):
    """Vector dimension or embedding model does not match the index."""


class EmptyIndex(RegJudgeError):
    """No records survived the index build filter."""


class ProviderError(RegJudgeError):
    """A remote or mock provider call failed.

    ``retryable`` tells callers whether a retry could help;
    ``item_index`` points at the failing batch item when known.
    """

    def __init__(self, message: str, *, retryable: bool = False,
                 item_index: int | None = None):
        super().__init__(message)
        self.retryable = retryable
        self.item_index = item_index


class ProviderTimeout(ProviderError):
    """Provider call exceeded its deadline. Always retryable."""

    def __init__(self, message: str, *, item_index: int | None = None):
        super().__init__(message, retryable=True, item_index=item_index)


class MalformedOutput(RegJudgeError):
    """Provider output could not be parsed even after the repair pass.

    The raw response is preserved on ``raw`` for inspection.
    """

    def __init__(self, message: str, raw: str):
        super().__init__(message)
        self.raw = raw


class NoJudgments(RegJudgeError):
    """Provider returned a syntactically valid but empty judgment array."""

    def __init__(self, message: str = "provider returned an empty judgment array"):
        super().__init__(message)


class NotFound(RegJudgeError):
    """A lookup by identifier found nothing."""


class DuplicateMember(RegJudgeError):
    """Two judgments claim the same (group, region) slot."""


class RuleConfigError(RegJudgeError):
    """The advice rule file is missing, unreadable, or structurally invalid."""


class EmptyBenchmark(RegJudgeError):
    """The benchmark CSV contains no data rows."""


class StageError(RegJudgeError):
    """Wraps a failure inside one pipeline stage with the stage name.

    ``partial_artifact_id`` is set when a partial run artifact was
    persisted for debugging before the error propagated.
    """

    def __init__(self, stage: str, cause: Exception,
                 partial_artifact_id: str | None = None):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
        self.partial_artifact_id = partial_artifact_id


class IntegrityError(RegJudgeError):
    """A stored artifact's content hash no longer matches its id."""


class ReplayError(RegJudgeError):
    """Replay preconditions not met (missing artifact or transcripts)."""


class ReplayMismatch(RegJudgeError):
    """Replay recomputation produced different output than stored.

    ``diff`` holds a unified diff of the canonical serializations.
    """

    def __init__(self, message: str, diff: str):
        super().__init__(message)
        self.diff = diff
