"""Exception hierarchy for seqmia."""

from typing import Optional, Tuple


class SeqMiaError(Exception):
    """Base class for every error raised by seqmia."""


class DatasetError(SeqMiaError, ValueError):
    """A dataset container or fixture could not be accepted."""


class FormatError(DatasetError):
    """Bad magic, unsupported version or malformed header/manifest."""


class TruncationError(DatasetError):
    """Payload is shorter than the declared dimensions require."""


class DataError(DatasetError):
    """Scores contain NaN or Inf."""

    def __init__(self, message: str, index: Optional[Tuple[int, ...]] = None):
        super().__init__(message)
        self.index = index


class DatasetValidationError(DatasetError):
    """Shapes, counts or manifest fields violate an invariant."""


class TransformDomainError(SeqMiaError, ValueError):
    """A score lies outside the domain of the requested transform."""


class ReductionError(SeqMiaError, ValueError):
    """Length-reduction parameter out of range."""


class DimensionError(SeqMiaError, ValueError):
    """Array dimensions do not agree."""


class ConfigConflictError(SeqMiaError, ValueError):
    """Mutually incompatible configuration options."""


class EvaluationError(SeqMiaError, ValueError):
    """ROC input or study parameters are unusable (e.g. a single class)."""


class DegenerateFitError(SeqMiaError):
    """Too few samples, or a covariance that stays singular under jitter."""


# errors that map to CLI exit code 1
VALIDATION_ERRORS = (
    DatasetError,
    TransformDomainError,
    ReductionError,
    DimensionError,
    ConfigConflictError,
    EvaluationError,
)
