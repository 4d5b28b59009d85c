"""Exception types shared across the package.

Each class maps onto one CLI error category so failures stay
machine-classifiable end to end.
"""


class SetGradeError(Exception):
    """Base class for all package errors."""


class ShapeError(SetGradeError):
    """Operands have incompatible dimensions."""


class ConfigError(SetGradeError):
    """Invalid hyperparameter, split, or run configuration."""


class ParseError(SetGradeError):
    """Malformed input file (CSV, config, model, or report)."""


class SamplingError(SetGradeError):
    """A sampling request exceeds what a data pool can provide."""


class UsageError(SetGradeError):
    """An API was called outside its documented protocol."""


class TrainError(SetGradeError):
    """Training aborted (e.g. non-finite gradients)."""


class ScoreError(SetGradeError):
    """Scoring aborted (e.g. non-finite model output)."""


class EvalError(SetGradeError):
    """Metric undefined for the given labels."""
