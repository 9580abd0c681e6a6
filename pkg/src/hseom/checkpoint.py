"""Versioned binary checkpoint files.

Layout (all integers little-endian)::

    8 bytes   magic  b"HSEOMCK\\0"
    4 bytes   uint32 format version
    8 bytes   uint64 length H of the JSON header
    H bytes   UTF-8 JSON header; its "arrays" entry lists name, dtype, shape,
              offset and nbytes of every array, offsets counted from the
              start of the payload
    ...       payload: raw C-ordered little-endian array data
    32 bytes  SHA-256 of everything above

The writer goes through a temporary file and an atomic rename, so a crash
leaves either the old or the new checkpoint on disk.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from pathlib import Path

import numpy as np

__all__ = ["MAGIC", "FORMAT_VERSION", "CheckpointError", "save_checkpoint", "load_checkpoint"]

MAGIC = b"HSEOMCK\x00"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<8sIQ")
_DIGEST = 32


class CheckpointError(ValueError):
    pass


def _le(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    if a.dtype.byteorder == ">" or (a.dtype.byteorder == "=" and not np.little_endian):
        a = a.astype(a.dtype.newbyteorder("<"))
    return a


def save_checkpoint(path, header: dict, arrays: dict[str, np.ndarray]) -> Path:
    path = Path(path)
    entries = []
    blobs = []
    offset = 0
    for name, arr in arrays.items():
        a = _le(np.asarray(arr))
        entries.append({"name": name, "dtype": a.dtype.newbyteorder("<").str, "shape": list(a.shape),
                        "offset": offset, "nbytes": a.nbytes})
        blobs.append(a)
        offset += a.nbytes
    full = dict(header)
    full["arrays"] = entries
    head = json.dumps(full, sort_keys=True, separators=(",", ":")).encode()
    digest = hashlib.sha256()
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        prefix = _PREFIX.pack(MAGIC, FORMAT_VERSION, len(head))
        for chunk in (prefix, head):
            fh.write(chunk)
            digest.update(chunk)
        for a in blobs:
            buf = memoryview(a.reshape(-1).view(np.uint8)) if a.size else b""
            fh.write(buf)
            digest.update(buf)
        fh.write(digest.digest())
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)
    return path


def load_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    """Read and verify a checkpoint; raises CheckpointError on any inconsistency."""
    raw = Path(path).read_bytes()
    if len(raw) < _PREFIX.size + _DIGEST:
        raise CheckpointError("checkpoint file is truncated")
    magic, version, hlen = _PREFIX.unpack_from(raw, 0)
    if magic != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"checkpoint format version {version}, this build reads {FORMAT_VERSION}")
    body, digest = raw[:-_DIGEST], raw[-_DIGEST:]
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointError("checkpoint checksum mismatch (file corrupted)")
    start = _PREFIX.size
    try:
        header = json.loads(raw[start:start + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupted checkpoint header: {exc}") from exc
    payload = start + hlen
    arrays = {}
    for e in header.get("arrays", []):
        lo = payload + e["offset"]
        hi = lo + e["nbytes"]
        if hi > len(body):
            raise CheckpointError(f"array {e['name']} extends past the end of the file")
        dt = np.dtype(e["dtype"])
        arrays[e["name"]] = np.frombuffer(raw[lo:hi], dtype=dt).reshape(e["shape"]).astype(dt.newbyteorder("="))
    return header, arrays
