"""Little-endian binary dataset files.

Layout: ``b"PSEA"``, u32 version, u32 points per cloud, u32 sample count,
then per sample a u32 label followed by N*3 float64 coordinates.
Sample ids are the record positions.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .synth import PointCloudDataset

MAGIC = b"PSEA"
VERSION = 1
_HEADER = struct.Struct("<4sIII")


class DatasetFormatError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class DatasetVersionError(DatasetFormatError):
    pass


def dumps(dataset: PointCloudDataset) -> bytes:
    n = dataset.num_points
    rec = np.dtype([("label", "<u4"), ("xyz", "<f8", (n, 3))])
    body = np.empty(len(dataset), dtype=rec)
    body["label"] = dataset.labels
    body["xyz"] = dataset.points
    return _HEADER.pack(MAGIC, VERSION, n, len(dataset)) + body.tobytes()


def loads(blob: bytes) -> PointCloudDataset:
    if len(blob) < _HEADER.size:
        raise DatasetFormatError("truncated header", len(blob))
    magic, version, n, count = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise DatasetFormatError(f"bad magic {magic!r}", 0)
    if version != VERSION:
        raise DatasetVersionError(f"unsupported dataset version {version}, expected {VERSION}", 4)
    rec = np.dtype([("label", "<u4"), ("xyz", "<f8", (n, 3))])
    expected = _HEADER.size + count * rec.itemsize
    if len(blob) < expected:
        whole = (len(blob) - _HEADER.size) // rec.itemsize
        raise DatasetFormatError(
            f"truncated body: {count} samples declared, {whole} complete",
            _HEADER.size + whole * rec.itemsize,
        )
    if len(blob) > expected:
        raise DatasetFormatError("trailing bytes after last sample", expected)
    body = np.frombuffer(blob, dtype=rec, count=count, offset=_HEADER.size)
    points = np.array(body["xyz"], dtype=np.float64)
    if not np.all(np.isfinite(points)):
        bad = int(np.flatnonzero(~np.isfinite(points).all(axis=(1, 2)))[0])
        raise DatasetFormatError(f"non-finite coordinates in sample {bad}", _HEADER.size + bad * rec.itemsize)
    return PointCloudDataset(points, body["label"].astype(np.int64), np.arange(count))


def save(dataset: PointCloudDataset, path) -> None:
    Path(path).write_bytes(dumps(dataset))


def load(path) -> PointCloudDataset:
    return loads(Path(path).read_bytes())
