# coding: utf-8
"""
Checkpoint Container
====================
Versioned binary file holding named float64 parameters and a manifest.

Layout (little-endian):

    magic         4 bytes   b"SPCK"
    version       uint32    1
    manifest_len  uint32
    manifest      UTF-8 JSON, manifest_len bytes
    n_params      uint32
    per parameter, sorted by name:
        name_len  uint16
        name      UTF-8, name_len bytes
        ndim      uint8
        dims      uint32 * ndim
        values    float64 * prod(dims), row-major

The manifest carries no timestamps, so identical training runs produce
identical files.
"""

import json
import struct
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ValidationError

from .errors import CheckpointFormat

MAGIC = b"SPCK"
VERSION = 1


class CheckpointManifest(BaseModel):
    experiment: str
    task: str
    encoding: Optional[str] = None
    config_hash: str
    config: str
    seed: int
    fold: int
    epoch: int
    metric_name: str
    metric: float
    vocab_size: int


def save_checkpoint(path: Union[str, Path], state: Dict[str, np.ndarray], manifest: CheckpointManifest):
    manifest_bytes = json.dumps(manifest.model_dump(mode="json"), sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<II", VERSION, len(manifest_bytes)), manifest_bytes, struct.pack("<I", len(state))]
    for name in sorted(state):
        values = np.ascontiguousarray(state[name], dtype="<f8")
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<B", values.ndim))
        parts.append(struct.pack(f"<{values.ndim}I", *values.shape))
        parts.append(values.tobytes())
    Path(path).write_bytes(b"".join(parts))


class _Reader:
    def __init__(self, data: bytes, path: Path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointFormat(f"{self.path}: truncated at byte {self.pos}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path: Union[str, Path]) -> Tuple[Dict[str, np.ndarray], CheckpointManifest]:
    path = Path(path)
    reader = _Reader(path.read_bytes(), path)
    if reader.take(4) != MAGIC:
        raise CheckpointFormat(f"{path}: not a checkpoint (bad magic)")
    version, manifest_len = reader.unpack("<II")
    if version != VERSION:
        raise CheckpointFormat(f"{path}: unsupported checkpoint version {version}")
    try:
        manifest = CheckpointManifest(**json.loads(reader.take(manifest_len).decode("utf-8")))
    except (ValueError, ValidationError) as e:
        raise CheckpointFormat(f"{path}: unreadable manifest ({e})") from e

    (n_params,) = reader.unpack("<I")
    state: Dict[str, np.ndarray] = {}
    for _ in range(n_params):
        (name_len,) = reader.unpack("<H")
        name = reader.take(name_len).decode("utf-8")
        (ndim,) = reader.unpack("<B")
        shape = reader.unpack(f"<{ndim}I") if ndim else ()
        count = int(np.prod(shape)) if shape else 1
        values = np.frombuffer(reader.take(8 * count), dtype="<f8").astype(np.float64)
        state[name] = values.reshape(shape)
    if reader.pos != len(reader.data):
        raise CheckpointFormat(f"{path}: {len(reader.data) - reader.pos} trailing bytes")
    return state, manifest
