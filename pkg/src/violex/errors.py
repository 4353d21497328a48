"""Typed errors shared across the package.

The CLI maps error classes onto exit codes: usage problems exit 1,
:class:`DataError` subclasses exit 2, everything else exits 3.
"""


class PipelineError(Exception):
    """Base class for every error raised by this package."""


class DataError(PipelineError):
    """User-supplied data is malformed, inconsistent, or missing."""


# --- corpus -----------------------------------------------------------------

class MalformedRecord(DataError):
    """A dataset record has the wrong shape (missing field, length mismatch,
    unknown tag or label)."""


class InvalidBio(DataError):
    """A BIO tag sequence is ill-formed (orphan I- tag, bad tag syntax)."""


class OverlapError(DataError):
    """Two spans claim the same token index."""


class EmptyDataset(DataError):
    """An operation that needs at least one record received none."""


class EmptyInput(DataError):
    """A single input (sentence, premise, hypothesis) is empty."""


# --- nli / metrics ----------------------------------------------------------

class MissingDomain(DataError):
    """A legal domain required for the operation is absent from the data."""


class LengthMismatch(DataError):
    """Two parallel sequences differ in length (or are empty)."""


class IdMismatch(DataError):
    """Gold and predicted example ids do not line up."""


class WrongModelCount(DataError):
    """An ensemble operation did not receive exactly one model per domain."""


# --- span_ner / models ------------------------------------------------------

class VariantMismatch(PipelineError):
    """An encode function was called on a model built for another variant."""


class CheckpointMismatch(DataError):
    """A checkpoint's version, kind, or config does not match expectations."""


# --- trainer ----------------------------------------------------------------

class UnclassifiedParameter(PipelineError):
    """A model parameter matched neither the backbone nor the head name set."""


class NonFiniteLoss(PipelineError):
    """Training produced a NaN or infinite loss."""


class LeakageError(PipelineError):
    """A checkpoint was asked to evaluate on one of its own training domains."""


# --- augment ----------------------------------------------------------------

class ClientError(PipelineError):
    """The chat-completion client failed after exhausting its retries."""

    def __init__(self, message: str, record_index: int | None = None):
        super().__init__(message)
        self.record_index = record_index


class EmptyGeneration(ClientError):
    """The client returned a blank completion."""


class GenerationInvalid(PipelineError):
    """A synthesized record stayed invalid through the whole retry budget."""


class PoolTooSmall(DataError):
    """Fewer few-shot pool examples than requested sample size."""


class UnboundPlaceholder(PipelineError):
    """A prompt template placeholder was left without a binding."""
