"""Exception hierarchy shared by all ktl modules.

Public functions never raise bare ValueError; callers can catch KtlError
to handle everything this package reports.
"""


class KtlError(Exception):
    """Base class for all errors raised by ktl."""


class ValidationError(KtlError, ValueError):
    """Inputs violate a contract: shapes, masses, missing ids, bad ranges."""


class DomainError(KtlError, ValueError):
    """A parameter is outside the mathematical domain of an operation."""


class DegenerateInputError(KtlError):
    """Statistics undefined on the given data (zero variance, rank loss)."""


class IngestionError(KtlError):
    """A data file failed to parse or contained invalid rows."""


class InternalConsistencyError(KtlError):
    """A quantity that is guaranteed by construction came out wrong."""


class GenerationError(KtlError):
    """A seeded generator could not satisfy its output contract."""


class TrainingError(KtlError):
    """Head training failed across the whole hyperparameter grid."""
