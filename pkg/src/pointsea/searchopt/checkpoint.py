"""Versioned binary checkpoints.

Layout: ``b"PSCK"``, u32 format version, u64 metadata length, UTF-8 JSON
metadata, then the raw little-endian float64 (or int64) arrays listed in the
metadata manifest, in manifest order.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"PSCK"
VERSION = 1
_HEAD = struct.Struct("<4sIQ")


class CheckpointError(ValueError):
    pass


def dumps(meta: dict, arrays: dict[str, np.ndarray]) -> bytes:
    manifest = []
    blobs = []
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        dtype = "<i8" if np.issubdtype(arr.dtype, np.integer) else "<f8"
        data = np.ascontiguousarray(arr, dtype=dtype)
        manifest.append({"name": name, "dtype": dtype, "shape": list(data.shape)})
        blobs.append(data.tobytes())
    payload = dict(meta)
    payload["arrays"] = manifest
    text = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
    return _HEAD.pack(MAGIC, VERSION, len(text)) + text + b"".join(blobs)


def loads(blob: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    if len(blob) < _HEAD.size:
        raise CheckpointError("truncated checkpoint header")
    magic, version, n = _HEAD.unpack_from(blob, 0)
    if magic != MAGIC:
        raise CheckpointError(f"bad checkpoint magic {magic!r}")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    start = _HEAD.size + n
    meta = json.loads(blob[_HEAD.size:start].decode())
    arrays = {}
    off = start
    for entry in meta.pop("arrays"):
        dt = np.dtype(entry["dtype"])
        count = int(np.prod(entry["shape"], dtype=np.int64))
        size = count * dt.itemsize
        if off + size > len(blob):
            raise CheckpointError(f"checkpoint truncated inside array {entry['name']!r}")
        arrays[entry["name"]] = np.frombuffer(blob, dtype=dt, count=count, offset=off).reshape(entry["shape"]).copy()
        off += size
    if off != len(blob):
        raise CheckpointError("trailing bytes after checkpoint arrays")
    return meta, arrays


def save(path, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dumps(meta, arrays))


def load(path) -> tuple[dict, dict[str, np.ndarray]]:
    return loads(Path(path).read_bytes())
