"""
Logging utilities for pinvtools.

This module provides functions for configuring and using logging throughout
the pinvtools library. Library code only ever writes to loggers under the
``pinvtools`` namespace; nothing is printed until an application (or the CLI)
calls :func:`configure_logging`.
"""

import os
import sys
import logging
from logging.handlers import RotatingFileHandler
from typing import Optional, Dict, Any

# Default log format
DEFAULT_LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

# Default date format for log timestamps
DEFAULT_DATE_FORMAT = "%Y-%m-%d %H:%M:%S"

# Default log level
DEFAULT_LOG_LEVEL = logging.INFO

PACKAGE_LOGGER_NAME = "pinvtools"

# Package logger
logger = logging.getLogger(PACKAGE_LOGGER_NAME)
logger.addHandler(logging.NullHandler())


class PinvLogFormatter(logging.Formatter):
    """
    Log formatter for pinvtools.

    Exceptions are followed by the name of the logger that reported them, which
    makes it easy to tell a failing pass from a failing solver restart.
    """

    def __init__(self, fmt: Optional[str] = None, datefmt: Optional[str] = None):
        """
        Initialize the formatter.

        Args:
            fmt: Log format string.
            datefmt: Date format string.
        """
        super().__init__(fmt=fmt or DEFAULT_LOG_FORMAT, datefmt=datefmt or DEFAULT_DATE_FORMAT)

    def formatException(self, ei) -> str:
        result = super().formatException(ei)
        return f"{result}\nLogger: {logger.name}"


def configure_logging(
    level: int = DEFAULT_LOG_LEVEL,
    handler: Optional[logging.Handler] = None,
    format_str: str = DEFAULT_LOG_FORMAT,
    date_format: str = DEFAULT_DATE_FORMAT,
    log_file: Optional[str] = None,
    max_bytes: int = 10485760,  # 10MB
    backup_count: int = 5,
    propagate: bool = False,
) -> logging.Logger:
    """
    Configure logging for pinvtools.

    Console output goes to stderr so that stdout stays free for machine-readable
    results.

    Args:
        level: Logging level (default: logging.INFO).
        handler: Handler to install instead of the default stderr stream handler.
        format_str: Log format string.
        date_format: Date format for log timestamps.
        log_file: Optional path of a rotating log file.
        max_bytes: Maximum log file size before rotation.
        backup_count: Number of backup log files to keep.
        propagate: Whether to propagate logs to the root logger.

    Returns:
        The configured package logger.
    """
    pkg_logger = logging.getLogger(PACKAGE_LOGGER_NAME)

    for old in pkg_logger.handlers[:]:
        pkg_logger.removeHandler(old)

    pkg_logger.setLevel(level)
    formatter = PinvLogFormatter(format_str, date_format)

    if handler is None:
        handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(formatter)
    pkg_logger.addHandler(handler)

    if log_file:
        log_dir = os.path.dirname(log_file)
        if log_dir:
            os.makedirs(log_dir, exist_ok=True)
        try:
            file_handler = RotatingFileHandler(
                log_file, maxBytes=max_bytes, backupCount=backup_count
            )
            file_handler.setFormatter(formatter)
            pkg_logger.addHandler(file_handler)
            logger.info(f"Logging to file: {log_file}")
        except OSError as e:
            logger.warning(f"Failed to set up file logging: {e}")

    pkg_logger.propagate = propagate
    logger.debug("Logging configured successfully")
    return pkg_logger


def get_logger(name: str) -> logging.Logger:
    """
    Get a logger for a specific module.

    Args:
        name: The short name of the module (``"solver"``, ``"inversion"``...).

    Returns:
        The ``pinvtools.<name>`` logger.
    """
    return logging.getLogger(f"{PACKAGE_LOGGER_NAME}.{name}")


def enable_debug_logging() -> None:
    """Enable debug-level logging for pinvtools on stderr."""
    configure_logging(level=logging.DEBUG)
    logger.debug("Debug logging enabled")


def disable_logging() -> None:
    """Disable all logging for pinvtools."""
    pkg_logger = logging.getLogger(PACKAGE_LOGGER_NAME)
    for handler in pkg_logger.handlers[:]:
        pkg_logger.removeHandler(handler)
    pkg_logger.addHandler(logging.NullHandler())
    pkg_logger.setLevel(logging.CRITICAL + 10)


def log_exception(exc: Exception, context: Optional[Dict[str, Any]] = None) -> None:
    """
    Log an exception with additional context information.

    Args:
        exc: The exception to log.
        context: Additional context information (optional).
    """
    context_str = ", ".join(f"{k}={v}" for k, v in (context or {}).items())
    if context_str:
        logger.error(f"{type(exc).__name__} ({context_str}): {exc}")
    else:
        logger.error(f"{type(exc).__name__}: {exc}")
    logger.debug("Traceback follows", exc_info=exc)


class LogContext:
    """
    Context manager for temporarily changing log levels.

    Example:
        with LogContext(logging.DEBUG, module="constraints"):
            eliminate(program, collect(program))
    """

    def __init__(self, level: int = logging.DEBUG, module: Optional[str] = None):
        """
        Initialize the context manager.

        Args:
            level: The logging level to use within the context.
            module: The specific module to change (if None, changes the entire package).
        """
        self.level = level
        self.module = module
        self.previous_level: Optional[int] = None
        self.logger: Optional[logging.Logger] = None

    def __enter__(self) -> "LogContext":
        self.logger = get_logger(self.module) if self.module else logging.getLogger(
            PACKAGE_LOGGER_NAME
        )
        self.previous_level = self.logger.level
        self.logger.setLevel(self.level)
        return self

    def __exit__(self, exc_type, exc_val, exc_tb) -> None:
        if self.logger is not None and self.previous_level is not None:
            self.logger.setLevel(self.previous_level)
