"""Logging configuration for Box-Cox GP experiments."""

import logging
import logging.handlers
from pathlib import Path
from typing import Any, Dict, Optional

DEFAULT_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
TRACE_FORMAT = "%(asctime)s - %(message)s"
TRACE_LOGGER = "bcgp.optimize.trace"


def _rotating_handler(log_file: str, level: int, fmt: str, max_file_size: int, backup_count: int) -> logging.Handler:
    log_path = Path(log_file)
    log_path.parent.mkdir(parents=True, exist_ok=True)
    handler = logging.handlers.RotatingFileHandler(log_file, maxBytes=max_file_size, backupCount=backup_count)
    handler.setLevel(level)
    handler.setFormatter(logging.Formatter(fmt))
    return handler


def setup_logging(
    log_level: str = "INFO",
    log_file: Optional[str] = None,
    log_format: Optional[str] = None,
    max_file_size: int = 10 * 1024 * 1024,  # 10MB
    backup_count: int = 5,
    enable_console: bool = True
) -> None:
    """Setup logging configuration for the application.

    Args:
        log_level: Logging level (DEBUG, INFO, WARNING, ERROR, CRITICAL)
        log_file: Path to log file (optional)
        log_format: Custom log format (optional)
        max_file_size: Maximum log file size in bytes before rotation
        backup_count: Number of backup log files to keep
        enable_console: Whether to enable console logging
    """
    if log_format is None:
        log_format = DEFAULT_FORMAT
    level = getattr(logging, log_level.upper())

    root_logger = logging.getLogger()
    root_logger.setLevel(level)
    for handler in root_logger.handlers[:]:
        root_logger.removeHandler(handler)

    if enable_console:
        console_handler = logging.StreamHandler()
        console_handler.setLevel(level)
        console_handler.setFormatter(logging.Formatter(log_format))
        root_logger.addHandler(console_handler)

    if log_file:
        root_logger.addHandler(_rotating_handler(log_file, level, log_format, max_file_size, backup_count))


def setup_experiment_logging(settings: Dict[str, Any]) -> None:
    """Setup logging for experiment runs.

    Args:
        settings: Mapping with ``log_level``, ``log_file`` and
            ``optimizer_log_file`` (the last two optional)
    """
    log_level = settings.get("log_level") or "INFO"
    level = getattr(logging, log_level.upper())
    setup_logging(log_level=log_level, log_file=settings.get("log_file"), enable_console=True)

    for name in ("bcgp.experiment", "bcgp.optimize", "bcgp.cli"):
        logging.getLogger(name).setLevel(level)

    # per-iteration optimizer progress goes only to its own file
    trace_logger = logging.getLogger(TRACE_LOGGER)
    trace_logger.propagate = False
    for handler in trace_logger.handlers[:]:
        trace_logger.removeHandler(handler)
        handler.close()
    optimizer_log_file = settings.get("optimizer_log_file")
    if optimizer_log_file:
        trace_logger.setLevel(logging.INFO)
        trace_logger.addHandler(_rotating_handler(optimizer_log_file, logging.INFO, TRACE_FORMAT,
                                                  10 * 1024 * 1024, 5))
    else:
        trace_logger.addHandler(logging.NullHandler())
