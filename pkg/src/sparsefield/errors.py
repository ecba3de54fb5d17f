"""Exception hierarchy shared by every module.

The CLI maps the three families onto exit codes: configuration-type errors
exit with 2, numerical failures with 3 and persistence failures with 4.
"""


class SparseFieldError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(SparseFieldError, ValueError):
    """Invalid configuration or argument value."""


class LayoutError(ConfigError):
    """Sensor layout or grid violates its invariants."""


class DimensionError(ConfigError):
    """Array shapes do not agree."""


class DomainError(ConfigError):
    """Query point lies outside the domain of a continuous field."""


class InsufficientDataError(ConfigError):
    """Too few snapshots (or samples) for the requested operation."""


class NumericalError(SparseFieldError, ArithmeticError):
    """Non-finite values, non-convergence or singular systems."""


class DegenerateDataError(NumericalError):
    """Data carries no energy at all (all singular values zero)."""


class TrainingError(NumericalError):
    """Temporal model training diverged."""


class PersistenceError(SparseFieldError, OSError):
    """Base for dataset / model file problems."""


class MissingFileError(PersistenceError):
    pass


class ParseError(PersistenceError):
    pass


class SchemaError(PersistenceError):
    pass


class StageError(SparseFieldError):
    """Wraps an error raised inside one stage of the offline fit.

    The original exception is kept as ``__cause__`` and ``stage`` names the
    pipeline step that failed.
    """

    def __init__(self, stage: str, error: Exception):
        super().__init__(f"[{stage}] {error}")
        self.stage = stage
        self.error = error
