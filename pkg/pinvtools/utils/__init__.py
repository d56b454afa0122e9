"""
Utility modules for pinvtools.

This package contains the logging helpers and the error hierarchy used by
every other module.
"""

from .logger import (
    configure_logging, get_logger, enable_debug_logging,
    disable_logging, log_exception, LogContext
)
from .validation import (
    PinvError, ValidationError, CycleDetected, NonBipartiteEdge, ValueFanInViolation,
    UnlabeledSourceValue, UnlabeledSinkValue, DanglingOpPort, ParseError, ArityMismatch,
    TypeMismatch, ShapeMismatch, NotInDomain, UnsupportedKind, MissingInput, NotTotalized,
    ForwardUndefined, GenerationExhausted, ConfigError
)
