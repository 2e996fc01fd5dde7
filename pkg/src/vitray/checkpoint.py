"""Binary named-tensor checkpoint container.

Layout (all integers little-endian ``u32``)::

    b"RVXR"  version  header_len  header (UTF-8 JSON)  tensor_count
    repeated tensor_count times:
        name_len  name (UTF-8)  rank  dims[rank]  payload (float64 LE)

The JSON header is ``{"best_accuracy", "best_epoch", "config"}`` serialised
with sorted keys and no whitespace, so identical checkpoints have identical
bytes. Writes go to a temporary file that is renamed into place.
"""

from __future__ import annotations

import json
import math
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CheckpointCorruptionError, CheckpointFormatError, ShapeError
from .vit import ModelConfig, param_shapes, validate_params

MAGIC = b"RVXR"
VERSION = 1


@dataclass
class Checkpoint:
    config: ModelConfig
    params: dict
    best_accuracy: float = float("nan")
    best_epoch: int = 0


def to_bytes(ckpt: Checkpoint) -> bytes:
    header = {
        "best_accuracy": None if math.isnan(ckpt.best_accuracy) else ckpt.best_accuracy,
        "best_epoch": ckpt.best_epoch,
        "config": ckpt.config.to_dict(),
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [MAGIC, struct.pack("<II", VERSION, len(head)), head]
    names = [name for name, _ in param_shapes(ckpt.config)]
    names += sorted(set(ckpt.params) - set(names))
    parts.append(struct.pack("<I", len(names)))
    for name in names:
        arr = np.ascontiguousarray(ckpt.params[name], dtype="<f8")
        raw = name.encode("utf-8")
        parts.append(struct.pack(f"<I{len(raw)}sI{arr.ndim}I", len(raw), raw, arr.ndim, *arr.shape))
        parts.append(arr.tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointCorruptionError(
                f"checkpoint truncated: needed {n} bytes at offset {self.pos}, file has {len(self.data)}"
            )
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def from_bytes(data: bytes, expected_config: ModelConfig | None = None) -> Checkpoint:
    """Parse and validate a checkpoint; nothing is returned unless all of it is sound."""
    r = _Reader(data)
    if len(data) < 4 or data[:4] != MAGIC:
        raise CheckpointFormatError(f"bad magic: expected {MAGIC!r}, found {data[:4]!r}")
    r.take(4)
    version = r.u32()
    if version != VERSION:
        raise CheckpointFormatError(f"unsupported checkpoint version {version}")
    try:
        header = json.loads(r.take(r.u32()).decode("utf-8"))
        config = ModelConfig.from_dict(header["config"])
    except (ValueError, KeyError, TypeError) as exc:
        raise CheckpointCorruptionError(f"unreadable checkpoint header: {exc}") from exc
    params = {}
    for _ in range(r.u32()):
        name = r.take(r.u32()).decode("utf-8", errors="replace")
        rank = r.u32()
        dims = struct.unpack(f"<{rank}I", r.take(4 * rank))
        count = math.prod(dims)
        params[name] = np.frombuffer(r.take(8 * count), dtype="<f8").astype(np.float64).reshape(dims)
    if r.pos != len(data):
        raise CheckpointCorruptionError(f"{len(data) - r.pos} trailing bytes after the last tensor")
    try:
        validate_params(params, config)
    except ShapeError as exc:
        raise CheckpointCorruptionError(f"checkpoint inconsistent with its own config: {exc}") from exc
    if expected_config is not None and expected_config != config:
        validate_params(params, expected_config)
    best = header.get("best_accuracy")
    return Checkpoint(config, params, float("nan") if best is None else float(best), int(header.get("best_epoch", 0)))


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    path = Path(path)
    payload = to_bytes(ckpt)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path, expected_config: ModelConfig | None = None) -> Checkpoint:
    with open(path, "rb") as fh:
        return from_bytes(fh.read(), expected_config)


def diff_params(a: dict, b: dict) -> list[str]:
    """Names of tensors that are missing from one side or not bitwise equal."""
    names = sorted(set(a) | set(b))
    return [
        n for n in names
        if n not in a or n not in b or np.asarray(a[n]).tobytes() != np.asarray(b[n]).tobytes()
        or np.shape(a[n]) != np.shape(b[n])
    ]
