"""
Error types and argument validation for pinvtools.

Every error raised by the library derives from :class:`PinvError`, so callers
(and the CLI) can separate domain failures from programming errors with a
single ``except`` clause.
"""

import math
import logging
from typing import Any

# Set up module-level logger
logger = logging.getLogger(__name__)


class PinvError(Exception):
    """Base class for all pinvtools errors."""
    pass


class ValidationError(PinvError):
    """Raised when a graph violates a structural invariant."""
    pass


class CycleDetected(ValidationError):
    """The graph contains a directed cycle."""
    pass


class NonBipartiteEdge(ValidationError):
    """An edge joins two op nodes or two value nodes."""
    pass


class ValueFanInViolation(ValidationError):
    """A value node has more than one producer, or a source-labeled node has one."""
    pass


class UnlabeledSourceValue(ValidationError):
    """A value node without producer is not labeled Input or Constant."""
    pass


class UnlabeledSinkValue(ValidationError):
    """A value node without consumer is not labeled Output."""
    pass


class DanglingOpPort(ValidationError):
    """An op port is unconnected, connected twice, or out of range."""
    pass


class ParseError(PinvError):
    """Malformed JSON document or kind spelling."""
    pass


class ArityMismatch(PinvError):
    """Wrong number of inputs, outputs or parameters."""
    pass


class TypeMismatch(PinvError):
    """A value has the wrong type for the operation."""
    pass


class ShapeMismatch(PinvError):
    """Tensor shapes are inconsistent."""
    pass


class NotInDomain(PinvError):
    """A value lies outside the domain an operation requires."""
    pass


class UnsupportedKind(PinvError):
    """An op kind (or a use of it) that cannot be inverted."""
    pass


class MissingInput(PinvError):
    """A declared graph input has no bound value."""
    pass


class NotTotalized(PinvError):
    """An inverse run produced an undefined value."""
    pass


class ForwardUndefined(PinvError):
    """A forward run produced an undefined intermediate."""
    pass


class GenerationExhausted(PinvError):
    """The random graph generator hit its rejection limit."""
    pass


class ConfigError(PinvError):
    """Invalid configuration value or file."""
    pass


def check_positive_int(name: str, value: Any) -> int:
    """
    Validate a strictly positive integer setting.

    Raises:
        ConfigError: If the value is not a positive integer.
    """
    if isinstance(value, bool) or not isinstance(value, int) or value <= 0:
        raise ConfigError(f"{name} must be a positive integer, got {value!r}")
    return value


def check_nonneg_int(name: str, value: Any) -> int:
    """Validate an integer setting that may be zero."""
    if isinstance(value, bool) or not isinstance(value, int) or value < 0:
        raise ConfigError(f"{name} must be a non-negative integer, got {value!r}")
    return value


def check_positive(name: str, value: Any) -> float:
    """Validate a strictly positive finite number."""
    value = check_finite(name, value)
    if value <= 0:
        raise ConfigError(f"{name} must be positive, got {value!r}")
    return value


def check_finite(name: str, value: Any) -> float:
    """Validate a finite real number."""
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{name} must be a number, got {value!r}")
    if not math.isfinite(value):
        raise ConfigError(f"{name} must be finite, got {value!r}")
    return float(value)


def check_probability(name: str, value: Any) -> float:
    """Validate a probability in [0, 1]."""
    value = check_finite(name, value)
    if not 0.0 <= value <= 1.0:
        raise ConfigError(f"{name} must lie in [0, 1], got {value!r}")
    return value
