"""Structured logging configuration using *structlog*.

Provides ``setup_logging`` to initialise structlog with JSON (or console)
output on stderr and a ``timed_stage`` context manager that logs every
pipeline stage with its duration, the way each HTTP request would be logged
by an access-log middleware.
"""

from __future__ import annotations

import logging
import sys
import time
from contextlib import contextmanager
from typing import Any, Iterator

import structlog

from dtr_recovery.errors import ConfigError


def setup_logging(log_level: str = "INFO", json: bool = True) -> None:
    """Configure structlog.

    Parameters:
        log_level: Minimum log level to emit (e.g. ``"DEBUG"``, ``"INFO"``).
        json: Render JSON lines when True, aligned console lines otherwise.

    Raises:
        ConfigError: if ``log_level`` is not a standard level name.
    """
    levels = logging.getLevelNamesMapping()
    level = levels.get(log_level.upper())
    if level is None:
        raise ConfigError(f"Unknown log level {log_level!r}.")
    renderer: Any = (
        structlog.processors.JSONRenderer()
        if json
        else structlog.dev.ConsoleRenderer(colors=False)
    )
    structlog.configure(
        processors=[
            structlog.contextvars.merge_contextvars,
            structlog.processors.add_log_level,
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,
            renderer,
        ],
        wrapper_class=structlog.make_filtering_bound_logger(level),
        context_class=dict,
        # stdout is reserved for CSV output.
        logger_factory=structlog.PrintLoggerFactory(file=sys.stderr),
        cache_logger_on_first_use=False,
    )


@contextmanager
def timed_stage(stage: str, **fields: Any) -> Iterator[dict[str, Any]]:
    """Log one pipeline stage with its wall time.

    The yielded dict may be filled with extra fields by the caller; they are
    attached to the ``stage_finished`` event.

    Parameters:
        stage: Stage name, used as the histogram label.
        fields: Extra key/value pairs bound to both log events.

    Yields:
        A mutable dict of result fields.
    """
    from dtr_recovery.instrumentation import STAGE_DURATION

    logger = structlog.get_logger("dtr_recovery.stage").bind(stage=stage, **fields)
    logger.debug("stage_started")
    extra: dict[str, Any] = {}
    start = time.perf_counter()
    try:
        yield extra
    finally:
        elapsed = time.perf_counter() - start
        STAGE_DURATION.labels(stage=stage).observe(elapsed)
        logger.info("stage_finished", duration_ms=round(elapsed * 1000, 2), **extra)
