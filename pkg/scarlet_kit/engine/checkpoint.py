"""SCNT checkpoint container.

Layout (all integers little-endian):
    b"SCNT" | version u32 | tensor count u32 |
    per tensor: name length u16 | UTF-8 name | rank u8 | dims u32 x rank | float32 payload
"""

import logging
import struct
from pathlib import Path
from typing import Dict, Mapping

import numpy as np

from scarlet_kit.errors import ParseError

logger = logging.getLogger(__name__)

MAGIC = b"SCNT"
VERSION = 1


def encode_checkpoint(tensors: Mapping[str, np.ndarray]) -> bytes:
    chunks = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name, array in tensors.items():
        encoded = name.encode("utf-8")
        array = np.asarray(array)
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", array.ndim))
        chunks.append(struct.pack(f"<{array.ndim}I", *array.shape))
        chunks.append(np.ascontiguousarray(array, dtype="<f4").tobytes())
    return b"".join(chunks)


def decode_checkpoint(blob: bytes, source: str = "<bytes>") -> Dict[str, np.ndarray]:
    def take(offset: int, size: int, what: str) -> bytes:
        if offset + size > len(blob):
            raise ParseError(
                f"{source}: truncated {what} at byte {offset}: expected {size} bytes, got {len(blob) - offset}"
            )
        return blob[offset:offset + size]

    if take(0, 4, "magic") != MAGIC:
        raise ParseError(f"{source}: bad magic at byte 0, expected {MAGIC!r}")
    version, count = struct.unpack("<II", take(4, 8, "header"))
    if version != VERSION:
        raise ParseError(f"{source}: unsupported version {version} at byte 4")
    offset = 12
    tensors: Dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(offset, 2, "name length"))
        offset += 2
        try:
            name = take(offset, name_len, "name").decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"{source}: tensor name at byte {offset} is not UTF-8") from exc
        offset += name_len
        (rank,) = struct.unpack("<B", take(offset, 1, "rank"))
        offset += 1
        dims = struct.unpack(f"<{rank}I", take(offset, 4 * rank, "dims"))
        offset += 4 * rank
        size = int(np.prod(dims, dtype=np.int64)) * 4
        payload = take(offset, size, f"payload of {name!r}")
        offset += size
        tensors[name] = np.frombuffer(payload, dtype="<f4").astype(np.float32).reshape(dims)
    if offset != len(blob):
        raise ParseError(f"{source}: {len(blob) - offset} trailing bytes after byte {offset}")
    return tensors


def save_checkpoint(path, tensors: Mapping[str, np.ndarray]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_checkpoint(tensors))
    logger.info(f"💾 Saved {len(tensors)} tensors to {path}")
    return path


def load_checkpoint(path) -> Dict[str, np.ndarray]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Checkpoint not found: {path}")
    return decode_checkpoint(path.read_bytes(), source=str(path))
