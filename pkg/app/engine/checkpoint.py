"""
Self-describing binary checkpoints.

Layout: ``RIACCKPT`` magic, little-endian u32 format version, u64 header
length, a JSON header listing every array (name, shape, byte offset) plus
free-form metadata, then the raw little-endian float64 payloads.
"""

import json
import struct
from pathlib import Path
from typing import Any, Mapping

import numpy as np
from pydantic import BaseModel, Field, ValidationError

MAGIC = b"RIACCKPT"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<IQ")


class CheckpointError(Exception):
    """Checkpoint file is missing, corrupt, or of an unknown version."""
    pass


class CheckpointEntry(BaseModel):
    name: str
    shape: list[int]
    offset: int = Field(..., ge=0, description="Byte offset from the start of the payload")


class CheckpointHeader(BaseModel):
    version: int = FORMAT_VERSION
    entries: list[CheckpointEntry] = Field(default_factory=list)
    metadata: dict[str, Any] = Field(default_factory=dict)


def save_checkpoint(
    path: Path, arrays: Mapping[str, np.ndarray], metadata: Mapping[str, Any] | None = None
) -> None:
    entries = []
    payloads = []
    offset = 0
    for name, array in arrays.items():
        data = np.ascontiguousarray(array, dtype="<f8")
        entries.append(CheckpointEntry(name=name, shape=list(data.shape), offset=offset))
        payloads.append(data.tobytes())
        offset += data.nbytes

    header = CheckpointHeader(entries=entries, metadata=dict(metadata or {}))
    header_bytes = header.model_dump_json().encode("utf-8")
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(_PREFIX.pack(FORMAT_VERSION, len(header_bytes)))
        f.write(header_bytes)
        for chunk in payloads:
            f.write(chunk)


def load_checkpoint(path: Path) -> tuple[dict[str, np.ndarray], dict[str, Any]]:
    """Return the stored arrays by name and the metadata dictionary."""
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e

    if raw[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    start = len(MAGIC) + _PREFIX.size
    if len(raw) < start:
        raise CheckpointError(f"{path}: truncated prefix")
    version, header_len = _PREFIX.unpack_from(raw, len(MAGIC))
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")

    try:
        header = CheckpointHeader.model_validate(json.loads(raw[start : start + header_len]))
    except (ValueError, ValidationError) as e:
        raise CheckpointError(f"{path}: corrupt header: {e}") from e

    payload = memoryview(raw)[start + header_len :]
    arrays: dict[str, np.ndarray] = {}
    for entry in header.entries:
        count = int(np.prod(entry.shape)) if entry.shape else 1
        if entry.offset + 8 * count > len(payload):
            raise CheckpointError(f"{path}: truncated payload for {entry.name}")
        data = np.frombuffer(payload, dtype="<f8", count=count, offset=entry.offset)
        arrays[entry.name] = data.reshape(entry.shape).astype(np.float64)
    return arrays, header.metadata
