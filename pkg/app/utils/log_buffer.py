"""
In-memory log buffer.

Captures Python log records into a ring buffer so that every command
can persist its own log next to the outputs it produced.
"""

import logging
import traceback
from collections import deque
from datetime import datetime
from pathlib import Path


class LogEntry:
    """Structured log entry."""

    __slots__ = ("timestamp", "level", "source", "message")

    def __init__(self, timestamp: str, level: str, source: str, message: str):
        self.timestamp = timestamp
        self.level = level
        self.source = source
        self.message = message

    def to_line(self) -> str:
        return f"{self.timestamp} - {self.source} - {self.level} - {self.message}"


class MemoryLogHandler(logging.Handler):
    """Logging handler that stores records in a ring buffer."""

    def __init__(self, maxlen: int = 5000) -> None:
        super().__init__()
        self._buffer: deque[LogEntry] = deque(maxlen=maxlen)

    def emit(self, record: logging.LogRecord) -> None:
        """Capture log record into buffer."""
        try:
            # Build message including exception traceback when available
            message = record.getMessage()
            if record.exc_info and record.exc_info[1] is not None:
                tb = "".join(traceback.format_exception(*record.exc_info))
                message = f"{message}\n{tb.rstrip()}"

            entry = LogEntry(
                timestamp=datetime.fromtimestamp(record.created).strftime("%Y-%m-%d %H:%M:%S"),
                level=record.levelname,
                source=record.name,
                message=message,
            )
            self._buffer.append(entry)
        except Exception:
            self.handleError(record)

    def flush_to(self, path: Path) -> int:
        """Append buffered entries to a log file and clear the buffer. Returns entry count."""
        entries = list(self._buffer)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("a", encoding="utf-8") as fh:
            for entry in entries:
                fh.write(entry.to_line() + "\n")
        self._buffer.clear()
        return len(entries)
