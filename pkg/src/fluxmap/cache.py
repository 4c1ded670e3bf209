"""Directory-backed LRU cache of diffusion midpoints.

One record per file, named ``<64-hex-char key>.mid``:

    offset  size  field
    0       8     magic "FLUXMID1"
    8       8     t, little-endian float64
    16      12    dims, three little-endian uint32
    28      1     dtype flag: 0 = float32, 1 = float16
    29      ...   payload, little-endian, row-major, prod(dims) elements

A sidecar ``<key>.json`` carries human-readable metadata plus the sha256
of the payload bytes; get() re-verifies it so corruption surfaces as an
IntegrityError rather than a wrong latent. Keys are 32-byte digests of the
canonical encoding of the generating condition plus stage and grid-
quantized time (see reuse.midpoint_key).

Writes go through a temp file and os.replace, so readers never observe a
partial record. Recency is tracked in memory and mirrored to file mtimes,
letting a reopened cache rebuild its LRU order.
"""

import hashlib
import json
import os
import struct
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CacheMissError, IntegrityError, ValidationError

MAGIC = b"FLUXMID1"
_DTYPES = {"f32": np.dtype("<f4"), "f16": np.dtype("<f2")}
_FLAGS = {"f32": 0, "f16": 1}
_FLAG_NAMES = {v: k for k, v in _FLAGS.items()}
DEFAULT_CAPACITY = 100


@dataclass(frozen=True)
class MidpointRecord:
    """A cached latent state plus the metadata needed to reuse it."""

    key: bytes
    t: float
    dims: tuple[int, int, int]
    dtype: str
    payload: np.ndarray
    created_at: float

    def __post_init__(self):
        if len(self.key) != 32:
            raise ValidationError("record key must be a 32-byte digest")
        if self.dtype not in _DTYPES:
            raise ValidationError(f"unknown record dtype {self.dtype!r}")
        if len(self.dims) != 3 or any(d <= 0 for d in self.dims):
            raise ValidationError("dims must be three positive integers")
        payload = np.ascontiguousarray(self.payload, dtype=_DTYPES[self.dtype])
        if payload.size != self.dims[0] * self.dims[1] * self.dims[2]:
            raise ValidationError("payload length does not match dims")
        object.__setattr__(self, "payload", payload.reshape(self.dims))

    @property
    def hex_key(self) -> str:
        return self.key.hex()

    @property
    def payload_bytes(self) -> int:
        return self.payload.size * _DTYPES[self.dtype].itemsize

    def latent(self) -> np.ndarray:
        return self.payload.astype(np.float32).ravel()


def make_record(
    key: bytes, t: float, latent: np.ndarray, dims: tuple[int, int, int] | None = None,
    dtype: str = "f32",
) -> MidpointRecord:
    latent = np.asarray(latent)
    if dims is None:
        dims = (latent.size, 1, 1) if latent.ndim == 1 else tuple(latent.shape)
    return MidpointRecord(
        key=key, t=float(t), dims=tuple(int(d) for d in dims), dtype=dtype,
        payload=latent.reshape(dims), created_at=time.time(),
    )


def encode_record(record: MidpointRecord) -> bytes:
    head = MAGIC + struct.pack(
        "<dIIIB", record.t, *record.dims, _FLAGS[record.dtype]
    )
    return head + record.payload.tobytes()


def decode_record(blob: bytes, key: bytes, created_at: float = 0.0) -> MidpointRecord:
    if len(blob) < 29 or blob[:8] != MAGIC:
        raise IntegrityError("not a FLUXMID1 record")
    t, d0, d1, d2, flag = struct.unpack("<dIIIB", blob[8:29])
    if flag not in _FLAG_NAMES:
        raise IntegrityError(f"unknown dtype flag {flag}")
    dtype = _FLAG_NAMES[flag]
    expected = 29 + d0 * d1 * d2 * _DTYPES[dtype].itemsize
    if len(blob) != expected:
        raise IntegrityError(
            f"payload size mismatch: expected {expected} bytes, got {len(blob)}"
        )
    payload = np.frombuffer(blob[29:], dtype=_DTYPES[dtype]).reshape(d0, d1, d2)
    return MidpointRecord(
        key=key, t=t, dims=(d0, d1, d2), dtype=dtype, payload=payload,
        created_at=created_at,
    )


class MidpointCache:
    """LRU store of MidpointRecords under a directory."""

    def __init__(self, directory, capacity: int = DEFAULT_CAPACITY):
        if capacity <= 0:
            raise ValidationError("cache capacity must be positive")
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.capacity = int(capacity)
        self._recency: dict[bytes, float] = {}
        self._scan()

    def _scan(self) -> None:
        for path in self.directory.glob("*.mid"):
            try:
                key = bytes.fromhex(path.stem)
            except ValueError:
                continue
            if len(key) == 32:
                self._recency[key] = path.stat().st_mtime

    def _mid_path(self, key: bytes) -> Path:
        return self.directory / f"{key.hex()}.mid"

    def _meta_path(self, key: bytes) -> Path:
        return self.directory / f"{key.hex()}.json"

    def __len__(self) -> int:
        return len(self._recency)

    def __contains__(self, key: bytes) -> bool:
        return key in self._recency

    def keys(self) -> list[bytes]:
        """Keys ordered least-recently-used first."""
        return sorted(self._recency, key=self._recency.get)

    def put(self, record: MidpointRecord) -> None:
        blob = encode_record(record)
        meta = {
            "key": record.hex_key,
            "t": record.t,
            "dims": list(record.dims),
            "dtype": record.dtype,
            "created_at": record.created_at,
            "payload_sha256": hashlib.sha256(blob[29:]).hexdigest(),
        }
        tmp = self._mid_path(record.key).with_suffix(".tmp")
        tmp.write_bytes(blob)
        os.replace(tmp, self._mid_path(record.key))
        tmp_meta = self._meta_path(record.key).with_suffix(".jtmp")
        tmp_meta.write_text(json.dumps(meta, indent=2))
        os.replace(tmp_meta, self._meta_path(record.key))
        self._touch(record.key)
        while len(self._recency) > self.capacity:
            self.evict()

    def _read(self, key: bytes) -> MidpointRecord:
        mid_path = self._mid_path(key)
        meta_path = self._meta_path(key)
        try:
            blob = mid_path.read_bytes()
            meta = json.loads(meta_path.read_text())
        except FileNotFoundError as e:
            raise IntegrityError(f"record file missing for {key.hex()}: {e}") from None
        record = decode_record(blob, key, created_at=float(meta.get("created_at", 0.0)))
        digest = hashlib.sha256(blob[29:]).hexdigest()
        if digest != meta.get("payload_sha256"):
            raise IntegrityError(f"payload digest mismatch for {key.hex()}")
        return record

    def get(self, key: bytes) -> MidpointRecord:
        if key not in self._recency:
            raise CacheMissError(key.hex())
        record = self._read(key)
        self._touch(key)
        return record

    def peek(self, key: bytes) -> MidpointRecord:
        """Like get, but without refreshing recency."""
        if key not in self._recency:
            raise CacheMissError(key.hex())
        return self._read(key)

    def evict(self, key: bytes | None = None) -> bytes:
        """Remove a specific key, or the least-recently-used one."""
        if key is None:
            if not self._recency:
                raise CacheMissError("cache is empty")
            key = min(self._recency, key=self._recency.get)
        if key not in self._recency:
            raise CacheMissError(key.hex())
        del self._recency[key]
        self._mid_path(key).unlink(missing_ok=True)
        self._meta_path(key).unlink(missing_ok=True)
        return key

    def _touch(self, key: bytes) -> None:
        now = time.time()
        last = self._recency.get(key)
        # strictly increasing stamps keep LRU order total even within one clock tick
        if last is not None and now <= last:
            now = np.nextafter(last, np.inf)
        self._recency[key] = now
        path = self._mid_path(key)
        if path.exists():
            os.utime(path, (now, now))
