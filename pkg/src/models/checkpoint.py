"""
OSTG binary checkpoint format.

Layout (little-endian): magic b"OSTG", u32 version, u32 parameter count, then
for each parameter in lexicographic name order: u16 name length, UTF-8 name,
u8 rank, u32 per dimension, float64 values in row-major order.
"""

import logging
import struct
from pathlib import Path
from typing import Union

import numpy as np

from src.exceptions import CheckpointError, MissingCheckpointError

logger = logging.getLogger(__name__)

MAGIC = b"OSTG"
VERSION = 1


def encode_state(state: dict[str, np.ndarray]) -> bytes:
    chunks = [MAGIC, struct.pack("<II", VERSION, len(state))]
    for name in sorted(state):
        value = np.ascontiguousarray(state[name], dtype="<f8")
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", value.ndim))
        chunks.append(struct.pack(f"<{value.ndim}I", *value.shape))
        chunks.append(value.tobytes())
    return b"".join(chunks)


def decode_state(blob: bytes) -> dict[str, np.ndarray]:
    if blob[:4] != MAGIC:
        raise CheckpointError("Not an OSTG checkpoint (bad magic)")
    try:
        version, count = struct.unpack_from("<II", blob, 4)
        if version != VERSION:
            raise CheckpointError(f"Unsupported checkpoint version {version}")
        offset = 12
        state: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", blob, offset)
            offset += 2
            name = blob[offset : offset + name_len].decode("utf-8")
            offset += name_len
            (rank,) = struct.unpack_from("<B", blob, offset)
            offset += 1
            shape = struct.unpack_from(f"<{rank}I", blob, offset)
            offset += 4 * rank
            size = int(np.prod(shape)) if rank else 1
            values = np.frombuffer(blob, dtype="<f8", count=size, offset=offset)
            offset += 8 * size
            state[name] = values.astype(np.float64).reshape(shape)
    except (struct.error, ValueError, UnicodeDecodeError) as e:
        raise CheckpointError(f"Truncated or corrupt checkpoint: {e}") from e
    if offset != len(blob):
        raise CheckpointError(f"Trailing bytes after checkpoint payload at {offset}")
    return state


def save_checkpoint(state: dict[str, np.ndarray], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_state(state))
    logger.debug(f"Wrote checkpoint with {len(state)} tensors to {path}")
    return path


def load_checkpoint(path: Union[str, Path], fold: int = -1) -> dict[str, np.ndarray]:
    """Read a checkpoint; a missing file raises MissingCheckpointError for fold"""
    path = Path(path)
    if not path.is_file():
        raise MissingCheckpointError(fold, str(path))
    return decode_state(path.read_bytes())
