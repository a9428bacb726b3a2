"""File formats: FMAP float maps, lighting JSON, 8-bit PNG previews.

FMAP is the source of truth for all pixel data. Layout, little-endian:

    magic "FMAP" | u32 version=1 | u32 H | u32 W | u32 C | H*W*C float32

with the payload row-major and channel-fastest (i.e. a C-contiguous
(H, W, C) array). PNG files are lossy 8-bit conversions for human
inspection only.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .types import LightSH, Mask

FMAP_MAGIC = b"FMAP"
FMAP_VERSION = 1


def write_fmap(path, array: np.ndarray) -> None:
    """Write an (H, W) or (H, W, C) float array as an FMAP file."""
    arr = np.asarray(array, dtype=np.float32)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise ValueError(f"FMAP data must be (H, W) or (H, W, C), got {arr.shape}")
    h, w, c = arr.shape
    with open(path, "wb") as f:
        f.write(FMAP_MAGIC)
        f.write(struct.pack("<IIII", FMAP_VERSION, h, w, c))
        f.write(np.ascontiguousarray(arr).astype("<f4").tobytes())


def read_fmap(path) -> np.ndarray:
    """Read an FMAP file into an (H, W, C) float32 array."""
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != FMAP_MAGIC:
            raise ValueError(f"{path}: not an FMAP file (magic {magic!r})")
        version, h, w, c = struct.unpack("<IIII", f.read(16))
        if version != FMAP_VERSION:
            raise ValueError(f"{path}: unsupported FMAP version {version}")
        payload = f.read(h * w * c * 4)
        if len(payload) != h * w * c * 4:
            raise ValueError(f"{path}: truncated FMAP payload")
    return np.frombuffer(payload, dtype="<f4").reshape(h, w, c).copy()


def write_mask_fmap(path, mask: Mask) -> None:
    write_fmap(path, mask.bits.astype(np.float32))


def read_mask_fmap(path) -> Mask:
    arr = read_fmap(path)
    if arr.shape[2] != 1:
        raise ValueError(f"{path}: mask FMAP must have 1 channel, got {arr.shape[2]}")
    return Mask(arr[:, :, 0] > 0.5)


def save_light(path, light: LightSH, note: str | None = None) -> None:
    """Serialize lighting as JSON: a 27-element channel-major "sh" array."""
    doc: dict = {"sh": [float(v) for v in light.coeffs]}
    if note is not None:
        doc["note"] = note
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def load_light(path) -> LightSH:
    doc = json.loads(Path(path).read_text())
    if "sh" not in doc:
        raise ValueError(f"{path}: missing 'sh' key")
    return LightSH(np.asarray(doc["sh"], dtype=np.float32))


def to_uint8(values: np.ndarray) -> np.ndarray:
    """Clamp [0, 1] floats to 8-bit; the only place clamping happens."""
    return (np.clip(values, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def save_png(path, values: np.ndarray) -> None:
    """Save an (H, W) or (H, W, 3) array of [0, 1] floats as 8-bit PNG."""
    arr = to_uint8(np.asarray(values))
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    Image.fromarray(arr).save(path, format="PNG")


def load_png(path) -> np.ndarray:
    """Load a PNG into an (H, W, 3) float32 array in [0, 1]."""
    img = Image.open(path).convert("RGB")
    return np.asarray(img, dtype=np.float32) / 255.0


def normal_to_rgb(vectors: np.ndarray) -> np.ndarray:
    """Map normal components from [-1, 1] to [0, 1] for display."""
    return (np.asarray(vectors) + 1.0) * 0.5


def rgb_to_normal(values: np.ndarray) -> np.ndarray:
    return np.asarray(values) * 2.0 - 1.0
