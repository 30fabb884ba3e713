"""Binary persistence (LPAT) and 16-bit grayscale image export of patterns."""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from PIL import Image

MAGIC = b"LPAT"
VERSION = 1
_HEADER = struct.Struct("<4sHII")


class PatternFormatError(ValueError):
    pass


def pattern_to_bytes(pattern: np.ndarray) -> bytes:
    a = np.asarray(pattern, dtype="<f4")
    if a.ndim != 2:
        raise ValueError(f"pattern must be 2D, got shape {a.shape}")
    h, w = a.shape
    return _HEADER.pack(MAGIC, VERSION, w, h) + np.ascontiguousarray(a).tobytes()


def pattern_from_bytes(data: bytes) -> np.ndarray:
    if len(data) < _HEADER.size:
        raise PatternFormatError("truncated LPAT header")
    magic, version, w, h = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise PatternFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise PatternFormatError(f"unsupported LPAT version {version}")
    body = data[_HEADER.size:]
    if len(body) != 4 * w * h:
        raise PatternFormatError(f"expected {4 * w * h} payload bytes, got {len(body)}")
    return np.frombuffer(body, dtype="<f4").reshape(h, w).astype(np.float32)


def save_pattern(path, pattern: np.ndarray) -> None:
    Path(path).write_bytes(pattern_to_bytes(pattern))


def load_pattern(path) -> np.ndarray:
    return pattern_from_bytes(Path(path).read_bytes())


def save_png16(path, pattern: np.ndarray) -> None:
    """Write ``pattern`` as a 16-bit grayscale PNG (0 -> black, 1 -> white)."""
    a = np.clip(np.asarray(pattern, dtype=np.float64), 0.0, 1.0)
    img = Image.fromarray(np.round(a * 65535).astype(np.uint16))
    img.save(path, format="PNG")


def load_png16(path) -> np.ndarray:
    with Image.open(path) as img:
        return (np.asarray(img, dtype=np.float64) / 65535.0).astype(np.float32)
