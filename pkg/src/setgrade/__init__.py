"""Graded-set anomaly scoring: set encoder, trainer, calibrated scorer."""

from .errors import (
    SetGradeError,
    ShapeError,
    ConfigError,
    ParseError,
    SamplingError,
    UsageError,
    TrainError,
    ScoreError,
    EvalError,
)
from . import kernels

__version__ = "0.1.0"

__all__ = [
    "SetGradeError",
    "ShapeError",
    "ConfigError",
    "ParseError",
    "SamplingError",
    "UsageError",
    "TrainError",
    "ScoreError",
    "EvalError",
    "kernels",
    "__version__",
]
