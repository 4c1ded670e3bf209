"""Radio map raster type and file formats.

A RadioMap is an n x n float32 grid of normalized brightness in [0, 1]
(brightness grows with pathloss; building interiors are exactly 0).

Binary format "RMB1": magic bytes ``RMB1``, u32 height, u32 width,
u8 dtype flag (0 = float32, 1 = float16), then the row-major payload,
all little-endian. CSV export (6 significant digits) is the secondary,
human-readable format.
"""

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

_MAGIC = b"RMB1"
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f2")}
_DTYPE_FLAGS = {"f32": 0, "f16": 1}


@dataclass(frozen=True)
class RadioMap:
    """Normalized pathloss raster."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float32)
        if v.ndim != 2:
            raise ValidationError("radio map must be a 2-D grid")
        if not np.all(np.isfinite(v)):
            raise ValidationError("radio map contains non-finite values")
        if v.min() < 0.0 or v.max() > 1.0:
            raise ValidationError("radio map values must lie in [0, 1]")
        object.__setattr__(self, "values", v)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


def write_rmb(path, rmap: RadioMap, dtype: str = "f32") -> None:
    if dtype not in _DTYPE_FLAGS:
        raise ValidationError(f"unknown raster dtype {dtype!r}")
    flag = _DTYPE_FLAGS[dtype]
    h, w = rmap.shape
    payload = np.ascontiguousarray(rmap.values, dtype=_DTYPES[flag])
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IIB", h, w, flag))
        fh.write(payload.tobytes())


def read_rmb(path) -> RadioMap:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 13 or blob[:4] != _MAGIC:
        raise ValidationError(f"{path}: not an RMB1 raster")
    h, w, flag = struct.unpack("<IIB", blob[4:13])
    if flag not in _DTYPES:
        raise ValidationError(f"{path}: unknown dtype flag {flag}")
    dt = _DTYPES[flag]
    expected = 13 + h * w * dt.itemsize
    if len(blob) != expected:
        raise ValidationError(
            f"{path}: payload size mismatch (expected {expected} bytes, got {len(blob)})"
        )
    values = np.frombuffer(blob[13:], dtype=dt).reshape(h, w).astype(np.float32)
    return RadioMap(values)


def write_csv(path, rmap: RadioMap) -> None:
    np.savetxt(path, rmap.values, fmt="%.6g", delimiter=",")
