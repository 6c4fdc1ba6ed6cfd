"""Common utilities."""

from .errors import (
    BlowUpError,
    CFLViolationError,
    ConfigurationError,
    DegenerateCoefficientsError,
    FlowDegeneracyError,
    InversionFailureError,
    LinearSolveError,
    NonFiniteFieldError,
    OutputError,
    ParabolicityError,
    PathFailedError,
    SimulationError,
    TransformationError,
)
from .logger import setup_logging

__all__ = [
    "BlowUpError",
    "CFLViolationError",
    "ConfigurationError",
    "DegenerateCoefficientsError",
    "FlowDegeneracyError",
    "InversionFailureError",
    "LinearSolveError",
    "NonFiniteFieldError",
    "OutputError",
    "ParabolicityError",
    "PathFailedError",
    "SimulationError",
    "TransformationError",
    "setup_logging",
]
