"""Binary checkpoint container for named float32 arrays.

Layout, all integers little-endian u32:

    magic   7 bytes  b"SFSCKPT"
    version u32      currently 1
    count   u32      number of entries
    entry*  u32 name length, UTF-8 name, u32 rank, rank x u32 extents,
            float32 payload in C order

Entries are written sorted by name so identical states produce identical
bytes. Payloads are float32 regardless of in-memory dtype; integer-valued
state such as step counters survives the round trip exactly up to 2**24.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"SFSCKPT"
VERSION = 1


class CheckpointFormatError(ValueError):
    """File does not parse as a checkpoint."""


def save_checkpoint(path, entries: dict[str, np.ndarray]) -> None:
    """Write named arrays to ``path`` in the container format."""
    path = Path(path)
    chunks = [MAGIC, struct.pack("<II", VERSION, len(entries))]
    for name in sorted(entries):
        # note: ascontiguousarray would promote 0-d entries to 1-d
        arr = np.asarray(entries[name], dtype=np.float32, order="C")
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<I", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape) if arr.ndim else b"")
        chunks.append(arr.astype("<f4", copy=False).tobytes())
    path.write_bytes(b"".join(chunks))


def load_checkpoint(path) -> dict[str, np.ndarray]:
    """Read a checkpoint back as a dict of float32 arrays."""
    blob = Path(path).read_bytes()
    if blob[: len(MAGIC)] != MAGIC:
        raise CheckpointFormatError(f"{path}: bad magic, not a checkpoint")
    off = len(MAGIC)

    def take(n: int) -> bytes:
        nonlocal off
        if off + n > len(blob):
            raise CheckpointFormatError(f"{path}: truncated at byte {off}")
        piece = blob[off : off + n]
        off += n
        return piece

    version, count = struct.unpack("<II", take(8))
    if version != VERSION:
        raise CheckpointFormatError(f"{path}: unsupported version {version}")
    entries: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<I", take(4))
        name = take(name_len).decode("utf-8")
        (rank,) = struct.unpack("<I", take(4))
        extents = struct.unpack(f"<{rank}I", take(4 * rank)) if rank else ()
        n_items = int(np.prod(extents, dtype=np.int64)) if rank else 1
        payload = np.frombuffer(take(4 * n_items), dtype="<f4")
        entries[name] = payload.reshape(extents).astype(np.float32)
    if off != len(blob):
        raise CheckpointFormatError(f"{path}: {len(blob) - off} trailing bytes")
    return entries
