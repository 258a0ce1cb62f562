"""Exception types shared across the toolkit."""

from __future__ import annotations


class ProsemillError(Exception):
    """Base class for every error raised by this package."""


# --- corpus ingest ---------------------------------------------------------

class EmptyAfterNormalize(ProsemillError):
    """Document text is empty (or whitespace-only) after normalization."""

    def __init__(self, doc_id: str):
        super().__init__(f"document {doc_id!r} is empty after normalization")
        self.doc_id = doc_id


class InsufficientStratum(ProsemillError):
    """A mix stratum cannot supply enough documents for the target."""

    def __init__(self, stratum: str, needed: int | None = None, available: int | None = None):
        detail = f"stratum {stratum!r} cannot meet the mix target"
        if needed is not None:
            detail += f" (need {needed}, have {available})"
        super().__init__(detail)
        self.stratum = stratum
        self.needed = needed
        self.available = available


class ScorerFailure(ProsemillError):
    """A pluggable quality scorer raised while scoring one document."""

    def __init__(self, doc_id: str, cause: Exception):
        super().__init__(f"quality scorer failed on document {doc_id!r}: {cause}")
        self.doc_id = doc_id
        self.cause = cause


# --- llm gateway -----------------------------------------------------------

class InvalidRequest(ProsemillError):
    """Chat request violates a precondition (empty messages, bad role order...)."""


class TransientBackendError(ProsemillError):
    """Retryable backend failure (timeouts, 429/5xx). Internal retry signal."""


class BackendUnavailable(ProsemillError):
    """Backend still failing after the configured retry budget."""


class BudgetExceeded(ProsemillError):
    """A configured token/spend cap was hit; no further calls are allowed."""


# --- synthesis (backtranslate / scoring / preference / funcall) ------------

class DocTooShort(ProsemillError):
    """Document shorter than the minimum span size."""


class ExemplarError(ProsemillError):
    """Exemplar bucket missing or malformed for a (subdomain, task) pair."""


class ParseFailure(ProsemillError):
    """LLM output did not match the expected structure.

    The raw transcript is preserved on ``raw_output`` for inspection.
    """

    def __init__(self, message: str, raw_output: str = ""):
        super().__init__(message)
        self.raw_output = raw_output


class GroundingViolation(ProsemillError):
    """Synthesized pair broke a task-specific grounding constraint."""

    def __init__(self, message: str, raw_output: str = ""):
        super().__init__(message)
        self.raw_output = raw_output


class NoCandidatePrinciples(ProsemillError):
    """No principle is registered for the pair's (domain, task)."""


class PerturbationRejected(ProsemillError):
    """Perturbed negative failed the edit-distance/length constraints twice."""


class NonFiniteInput(ProsemillError):
    """A numeric kernel received NaN or infinite input."""


class SampleRejected(ProsemillError):
    """Synthesized function-call sample failed validation twice."""


# --- retrieval -------------------------------------------------------------

class EmptyText(ProsemillError):
    """Cannot embed empty or whitespace-only text."""


class EmptyIndex(ProsemillError):
    """Retrieval was asked to search an empty index."""


# --- evaluation ------------------------------------------------------------

class SelfPlay(ProsemillError):
    """A comparison record pits a model against itself."""


# --- pipeline --------------------------------------------------------------

class ConfigError(ProsemillError):
    """Run configuration failed validation."""


class StageFailed(ProsemillError):
    """A pipeline stage raised; completed outputs are preserved."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause
