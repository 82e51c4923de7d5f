"""Exact neighbourhood queries, farthest point sampling and augmentation."""
from __future__ import annotations

import numpy as np

from .kernels import knn_select
from .synth import PointCloudSample

SCALE_RANGE = (2.0 / 3.0, 3.0 / 2.0)
SHIFT_RANGE = 0.2


def fps(points: np.ndarray, m: int, start: int = 0) -> np.ndarray:
    """Greedy farthest point order of ``m`` indices beginning at ``start``.

    Each new pick maximises the distance to the already chosen set; ties go
    to the lower index.
    """
    points = np.asarray(points, dtype=np.float64)
    n = len(points)
    if not 1 <= m <= n:
        raise ValueError(f"fps needs 1 <= m <= N, got m={m}, N={n}")
    if not 0 <= start < n:
        raise IndexError(f"start index {start} out of range")
    chosen = np.empty(m, dtype=np.int64)
    chosen[0] = start
    diff = points - points[start]
    mind = np.einsum("ij,ij->i", diff, diff)
    mind[start] = -1.0
    for t in range(1, m):
        nxt = int(np.argmax(mind))
        chosen[t] = nxt
        diff = points - points[nxt]
        np.minimum(mind, np.einsum("ij,ij->i", diff, diff), out=mind)
        mind[chosen[: t + 1]] = -1.0
    return chosen


def knn(points: np.ndarray, k: int) -> np.ndarray:
    """(N, k) table of each point's k nearest neighbours, itself excluded.

    Rows are ordered by distance with ties broken toward the lower index.
    """
    points = np.asarray(points, dtype=np.float64)
    n = len(points)
    if not 1 <= k < n:
        raise ValueError(f"knn needs 1 <= k < N, got k={k}, N={n}")
    if points.ndim != 2 or points.shape[1] != 3:
        raise ValueError(f"knn expects (N, 3) coordinates, got {points.shape}")
    out = np.empty((n, k), dtype=np.int64)
    knn_select(np.ascontiguousarray(points), k, 0, out)
    return out


def knn_batch(points: np.ndarray, k: int) -> np.ndarray:
    """k-NN for a (B, N, 3) batch, as indices into the flattened (B*N) rows."""
    b, n, _ = points.shape
    if not 1 <= k < n:
        raise ValueError(f"knn needs 1 <= k < N, got k={k}, N={n}")
    points = np.ascontiguousarray(points, dtype=np.float64)
    out = np.empty((b, n, k), dtype=np.int64)
    for i in range(b):
        knn_select(points[i], k, i * n, out[i])
    return out.reshape(b * n, k)


def affine_transform(points: np.ndarray, scale, shift) -> np.ndarray:
    return np.asarray(points) * np.asarray(scale, dtype=np.float64) + np.asarray(shift, dtype=np.float64)


def draw_augmentation(sample_id: int, seed: int, epoch: int = 0) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng([seed, epoch, sample_id, 0xA06])
    scale = rng.uniform(*SCALE_RANGE, size=3)
    shift = rng.uniform(-SHIFT_RANGE, SHIFT_RANGE, size=3)
    return scale, shift


def augment(sample: PointCloudSample, seed: int, epoch: int = 0) -> PointCloudSample:
    """Random anisotropic scaling and translation, a pure function of (id, seed, epoch)."""
    scale, shift = draw_augmentation(sample.id, seed, epoch)
    return PointCloudSample(affine_transform(sample.points, scale, shift), sample.label, sample.id)


def augment_batch(points: np.ndarray, ids: np.ndarray, seed: int, epoch: int) -> np.ndarray:
    out = np.empty_like(points)
    for i, sid in enumerate(ids):
        scale, shift = draw_augmentation(int(sid), seed, epoch)
        out[i] = affine_transform(points[i], scale, shift)
    return out
