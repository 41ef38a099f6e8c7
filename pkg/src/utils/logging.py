"""
Structured logging utilities with trace event support.
"""
import json
import logging
import os
import sys
from datetime import datetime, timezone
from typing import Any, Dict, Optional

LEVEL_ENV = "VARA_LOG_LEVEL"
FORMAT_ENV = "VARA_LOG_FORMAT"

_LEVELS = {"error": "ERROR", "info": "INFO", "debug": "DEBUG"}


class JSONFormatter(logging.Formatter):
    """Custom formatter that outputs logs as JSON."""

    def format(self, record: logging.LogRecord) -> str:
        log_data = {
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
        }

        trace = getattr(record, "trace_event", None)
        if trace:
            log_data["trace_event"] = trace

        if record.exc_info:
            log_data["exception"] = self.formatException(record.exc_info)

        return json.dumps(log_data, default=str)


def resolve_level(level: Optional[str] = None) -> str:
    """
    Resolve a logging level name.

    Args:
        level: Explicit level; falls back to VARA_LOG_LEVEL, then "info"

    Returns:
        Upper-case logging level name
    """
    raw = (level or os.getenv(LEVEL_ENV) or "info").lower()
    if raw in _LEVELS:
        return _LEVELS[raw]
    # Accept standard names (WARNING, CRITICAL) passed programmatically
    if raw.upper() in logging._nameToLevel:
        return raw.upper()
    return "INFO"


def setup_logger(
    name: str,
    level: Optional[str] = None,
    log_format: Optional[str] = None,
) -> logging.Logger:
    """
    Set up a logger with the specified configuration.

    Args:
        name: Logger name
        level: Logging level (error, info, debug); defaults to VARA_LOG_LEVEL
        log_format: Format type ("json" or "text"); defaults to VARA_LOG_FORMAT

    Returns:
        Configured logger instance
    """
    logger = logging.getLogger(name)
    logger.setLevel(getattr(logging, resolve_level(level)))

    # Remove existing handlers
    logger.handlers.clear()

    # stderr keeps command summaries on stdout parseable
    handler = logging.StreamHandler(sys.stderr)

    fmt = (log_format or os.getenv(FORMAT_ENV) or "json").lower()
    if fmt == "json":
        handler.setFormatter(JSONFormatter())
    else:
        formatter = logging.Formatter(
            "%(asctime)s - %(name)s - %(levelname)s - %(message)s",
            datefmt="%Y-%m-%d %H:%M:%S"
        )
        handler.setFormatter(formatter)

    logger.addHandler(handler)
    logger.propagate = False

    return logger


def set_global_level(level: Optional[str] = None) -> None:
    """Re-apply the level to every logger created through setup_logger."""
    resolved = getattr(logging, resolve_level(level))
    for name in list(logging.Logger.manager.loggerDict):
        if name == "src" or name.startswith("src."):
            logging.getLogger(name).setLevel(resolved)


class TraceEvent:
    """Structured trace event for a training or inference milestone."""

    def __init__(
        self,
        component: str,
        action: str,
        summary: str,
        artifacts: Optional[Dict[str, Any]] = None
    ):
        self.at = datetime.now(timezone.utc).isoformat()
        self.component = component
        self.action = action
        self.summary = summary
        self.artifacts = artifacts or {}

    def to_dict(self) -> Dict[str, Any]:
        """Convert trace event to dictionary."""
        return {
            "at": self.at,
            "component": self.component,
            "action": self.action,
            "summary": self.summary,
            "artifacts": self.artifacts
        }

    def __repr__(self) -> str:
        return f"TraceEvent(component={self.component}, action={self.action}, at={self.at})"


def log_trace_event(
    logger: logging.Logger,
    component: str,
    action: str,
    summary: str,
    artifacts: Optional[Dict[str, Any]] = None,
    level: int = logging.INFO,
) -> TraceEvent:
    """
    Create and log a trace event.

    Args:
        logger: Logger instance
        component: Name of the component (trainer, checkpoint, ablation, ...)
        action: Action being performed
        summary: Human-readable summary
        artifacts: Optional additional data
        level: Logging level for the record

    Returns:
        TraceEvent instance
    """
    event = TraceEvent(component, action, summary, artifacts)
    logger.log(
        level,
        f"[TRACE] {component}.{action}: {summary}",
        extra={"trace_event": event.to_dict()}
    )
    return event
