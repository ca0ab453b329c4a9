"""
Centralized logging configuration.

Console output goes to stderr, so stdout carries only the command summaries.
Every record is also captured by ``log_buffer`` and flushed to ``run.log``.
"""

import logging
import sys
from typing import Any, TextIO

from app.config import settings
from app.utils.log_buffer import MemoryLogHandler

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"

# Global log buffer instance - flushed by the CLI into each output directory
log_buffer = MemoryLogHandler(maxlen=settings.log_buffer_size)


class CustomFormatter(logging.Formatter):
    """One color per level; plain text when the stream is not a terminal."""

    COLORS = {
        logging.DEBUG: "\x1b[38;21m",
        logging.INFO: "\x1b[38;5;39m",
        logging.WARNING: "\x1b[38;5;226m",
        logging.ERROR: "\x1b[38;5;196m",
        logging.CRITICAL: "\x1b[31;1m",
    }
    RESET = "\x1b[0m"

    def __init__(self, colored: bool = True) -> None:
        super().__init__(LOG_FORMAT, datefmt=DATE_FORMAT)
        self.colored = colored

    def format(self, record: logging.LogRecord) -> str:
        text = super().format(record)
        if not self.colored:
            return text
        return f"{self.COLORS.get(record.levelno, '')}{text}{self.RESET}"


def setup_logging(level: str | None = None, stream: TextIO | None = None) -> None:
    """Configure root logging for one CLI invocation."""
    root_logger = logging.getLogger()
    root_logger.setLevel(getattr(logging, level or settings.log_level))

    for handler in root_logger.handlers[:]:
        root_logger.removeHandler(handler)

    out = stream or sys.stderr
    console_handler = logging.StreamHandler(out)
    console_handler.setFormatter(CustomFormatter(colored=out.isatty()))
    root_logger.addHandler(console_handler)

    root_logger.addHandler(log_buffer)


def get_logger(name: str) -> logging.Logger:
    """Get a logger instance for a specific module."""
    return logging.getLogger(name)


def _format_value(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.4g}"
    return str(value)


class RunContextLogger:
    """Logger wrapper that prefixes a job id (``HS/seq-s01_e01_walk``) and appends k=v pairs."""

    def __init__(self, logger: logging.Logger, run_id: str | None = None):
        self.logger = logger
        self.run_id = run_id

    def child(self, suffix: str) -> "RunContextLogger":
        run_id = f"{self.run_id}/{suffix}" if self.run_id else suffix
        return RunContextLogger(self.logger, run_id)

    def _format_message(self, msg: str, **kwargs: Any) -> str:
        prefix = f"[{self.run_id}] " if self.run_id else ""
        extra = " | ".join(f"{k}={_format_value(v)}" for k, v in kwargs.items())
        return f"{prefix}{msg}" + (f" | {extra}" if extra else "")

    def debug(self, msg: str, **kwargs: Any) -> None:
        if self.logger.isEnabledFor(logging.DEBUG):
            self.logger.debug(self._format_message(msg, **kwargs))

    def info(self, msg: str, **kwargs: Any) -> None:
        self.logger.info(self._format_message(msg, **kwargs))

    def warning(self, msg: str, **kwargs: Any) -> None:
        self.logger.warning(self._format_message(msg, **kwargs))

    def error(self, msg: str, **kwargs: Any) -> None:
        self.logger.error(self._format_message(msg, **kwargs))
