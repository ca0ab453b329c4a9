"""
Exceptions raised while reading and preparing skeleton datasets.
"""

from pathlib import Path


class SkeletonIOError(Exception):
    """Base exception for skeleton dataset errors."""
    pass


class DatasetIOError(SkeletonIOError, OSError):
    """A dataset file or directory is missing or unreadable."""

    def __init__(self, message: str, path: str | Path) -> None:
        super().__init__(f"{message}: {path}")
        self.path = str(path)


class DatasetParseError(SkeletonIOError):
    """Malformed dataset content, located by file and line."""

    def __init__(self, message: str, path: str | Path, line: int | None = None) -> None:
        where = f"{path}:{line}" if line is not None else str(path)
        super().__init__(f"{where}: {message}")
        self.path = str(path)
        self.line = line


class DegenerateSequenceError(SkeletonIOError):
    """Sequence too short for the requested operation."""
    pass


class PartitionError(SkeletonIOError):
    """Partition scheme does not fit the sequence."""
    pass


class SplitError(SkeletonIOError):
    """Unknown protocol or unusable split."""
    pass
