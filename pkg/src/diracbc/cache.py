"""Binary cache container: JSON header + raw complex64 payload + checksum.

Layout::

    b"DBC1\\n" | uint64-le header length | header JSON (utf-8) | payload | sha256

The checksum covers header and payload.  Readers must treat any structural or
checksum mismatch as :class:`~diracbc.errors.CacheCorrupt` and recompute —
a stale or truncated cache is never silently used.
"""
from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .errors import CacheCorrupt

MAGIC = b"DBC1\n"


def write_array(path: str | Path, array: np.ndarray, meta: dict | None = None) -> None:
    """Store a complex array (cast to complex64, little-endian) with metadata."""
    arr = np.ascontiguousarray(array, dtype=np.dtype("<c8"))
    header = dict(meta or {})
    header["shape"] = list(arr.shape)
    header["dtype"] = "complex64-le"
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    payload = arr.tobytes()
    digest = hashlib.sha256(hbytes + payload).digest()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(hbytes)))
        fh.write(hbytes)
        fh.write(payload)
        fh.write(digest)


def read_array(path: str | Path) -> tuple[np.ndarray, dict]:
    """Load an array written by :func:`write_array`.

    Raises
    ------
    CacheCorrupt
        On bad magic, truncation, undecodable header, or checksum mismatch.
    """
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise CacheCorrupt(f"unreadable cache file {path}: {exc}") from exc
    if len(blob) < len(MAGIC) + 8 + 32 or not blob.startswith(MAGIC):
        raise CacheCorrupt(f"not a cache container: {path}")
    off = len(MAGIC)
    (hlen,) = struct.unpack("<Q", blob[off:off + 8])
    off += 8
    if len(blob) < off + hlen + 32:
        raise CacheCorrupt(f"truncated cache container: {path}")
    hbytes = blob[off:off + hlen]
    payload = blob[off + hlen:-32]
    if hashlib.sha256(hbytes + payload).digest() != blob[-32:]:
        raise CacheCorrupt(f"checksum mismatch: {path}")
    try:
        header = json.loads(hbytes.decode("utf-8"))
        shape = tuple(int(s) for s in header["shape"])
    except (ValueError, KeyError, UnicodeDecodeError) as exc:
        raise CacheCorrupt(f"bad cache header: {path}") from exc
    arr = np.frombuffer(payload, dtype=np.dtype("<c8"))
    if arr.size != int(np.prod(shape, dtype=np.int64)):
        raise CacheCorrupt(f"payload size does not match shape: {path}")
    return arr.reshape(shape).copy(), header


def fetch_or_compute(path: str | Path, compute, meta: dict | None = None):
    """Return the cached array at `path`, recomputing (and rewriting) if the
    cache is absent or corrupt.  `compute` is a zero-argument callable."""
    path = Path(path)
    if path.exists():
        try:
            arr, _ = read_array(path)
            return arr
        except CacheCorrupt:
            pass
    arr = np.asarray(compute())
    write_array(path, arr, meta=meta)
    return arr
