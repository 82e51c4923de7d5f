"""Synthetic surface samplers and the in-memory dataset container."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

SHAPES = ("sphere", "cube", "cylinder", "torus", "cone")

TORUS_MAJOR = 1.0
TORUS_MINOR = 0.4


@dataclass(frozen=True)
class DatasetConfig:
    classes: tuple[str, ...] = ("sphere", "cube", "cylinder", "torus")
    num_points: int = 256
    samples_per_class: int = 200
    noise: float = 0.0
    seed: int = 0
    train_fraction: float = 0.6
    val_fraction: float = 0.1
    test_fraction: float = 0.3
    rotate: bool = False

    def validate(self, k: int | None = None) -> None:
        if not self.classes:
            raise ValueError("dataset config needs at least one shape class")
        unknown = [c for c in self.classes if c not in SHAPES]
        if unknown:
            raise ValueError(f"unknown shape classes {unknown}; choose from {SHAPES}")
        if len(set(self.classes)) != len(self.classes):
            raise ValueError("duplicate shape classes")
        if self.num_points < 2 or self.samples_per_class < 1:
            raise ValueError("num_points must be >= 2 and samples_per_class >= 1")
        if self.noise < 0:
            raise ValueError("noise must be non-negative")
        fr = (self.train_fraction, self.val_fraction, self.test_fraction)
        if min(fr) < 0 or abs(sum(fr) - 1.0) > 1e-9:
            raise ValueError(f"split fractions must be non-negative and sum to 1, got {fr}")
        if k is not None and self.num_points < k + 1:
            raise ValueError(f"num_points={self.num_points} too small for k={k}")


@dataclass
class PointCloudSample:
    points: np.ndarray
    label: int
    id: int


@dataclass
class PointCloudDataset:
    """Stacked clouds: ``points`` is (S, N, 3), ``labels`` and ``ids`` are (S,)."""

    points: np.ndarray
    labels: np.ndarray
    ids: np.ndarray
    classes: tuple[str, ...] = field(default=())

    def __post_init__(self) -> None:
        self.points = np.ascontiguousarray(self.points, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.ids = np.asarray(self.ids, dtype=np.int64)
        if self.points.ndim != 3 or self.points.shape[2] != 3:
            raise ValueError(f"points must be (S, N, 3), got {self.points.shape}")
        if not (len(self.labels) == len(self.ids) == len(self.points)):
            raise ValueError("points, labels and ids disagree in length")

    def __len__(self) -> int:
        return len(self.labels)

    def __getitem__(self, i: int) -> PointCloudSample:
        return PointCloudSample(self.points[i], int(self.labels[i]), int(self.ids[i]))

    @property
    def num_points(self) -> int:
        return self.points.shape[1]

    @property
    def num_classes(self) -> int:
        if self.classes:
            return len(self.classes)
        return int(self.labels.max()) + 1 if len(self.labels) else 0

    def subset(self, index) -> "PointCloudDataset":
        index = np.asarray(index, dtype=np.int64)
        return PointCloudDataset(self.points[index], self.labels[index], self.ids[index], self.classes)

    def equals(self, other: "PointCloudDataset") -> bool:
        return (
            self.points.shape == other.points.shape
            and self.points.tobytes() == other.points.tobytes()
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.ids, other.ids)
        )


def _antithetic(sampler: Callable[[int, np.random.Generator], np.ndarray]):
    # centrally symmetric surfaces: mirror half the draws so the centroid is exactly the centre
    def sample(n: int, rng: np.random.Generator) -> np.ndarray:
        half = sampler((n + 1) // 2, rng)
        return np.concatenate([half, -half])[:n]

    return sample


def _sphere(n, rng):
    v = rng.standard_normal((n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _cube(n, rng):
    pts = rng.uniform(-1.0, 1.0, size=(n, 3))
    axis = rng.integers(0, 3, size=n)
    sign = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    pts[np.arange(n), axis] = sign
    return pts


def _disc(n, rng):
    r = np.sqrt(rng.random(n))
    phi = rng.uniform(0.0, 2 * np.pi, size=n)
    return r * np.cos(phi), r * np.sin(phi)


def _cylinder(n, rng):
    # radius 1, height 2: lateral area 4*pi against 2*pi for both caps
    lateral = rng.random(n) < 2.0 / 3.0
    phi = rng.uniform(0.0, 2 * np.pi, size=n)
    x, y = np.cos(phi), np.sin(phi)
    z = rng.uniform(-1.0, 1.0, size=n)
    dx, dy = _disc(n, rng)
    cap_z = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    return np.stack(
        [np.where(lateral, x, dx), np.where(lateral, y, dy), np.where(lateral, z, cap_z)], axis=1
    )


def _torus(n, rng):
    R, r = TORUS_MAJOR, TORUS_MINOR
    out = np.empty((0, 2))
    while len(out) < n:
        theta = rng.uniform(0.0, 2 * np.pi, size=2 * n)
        phi = rng.uniform(0.0, 2 * np.pi, size=2 * n)
        keep = rng.random(2 * n) < (R + r * np.cos(phi)) / (R + r)
        out = np.concatenate([out, np.stack([theta[keep], phi[keep]], axis=1)])
    theta, phi = out[:n, 0], out[:n, 1]
    ring = R + r * np.cos(phi)
    return np.stack([ring * np.cos(theta), ring * np.sin(theta), r * np.sin(phi)], axis=1)


def _cone(n, rng):
    # apex at z=1, unit base disc at z=-1; lateral area pi*sqrt(5) against pi for the base
    slant = np.sqrt(5.0)
    lateral = rng.random(n) < slant / (1.0 + slant)
    t = np.sqrt(rng.random(n))
    phi = rng.uniform(0.0, 2 * np.pi, size=n)
    dx, dy = _disc(n, rng)
    x = np.where(lateral, t * np.cos(phi), dx)
    y = np.where(lateral, t * np.sin(phi), dy)
    z = np.where(lateral, 1.0 - 2.0 * t, -1.0)
    return np.stack([x, y, z], axis=1)


SAMPLERS: dict[str, Callable[[int, np.random.Generator], np.ndarray]] = {
    "sphere": _antithetic(_sphere),
    "cube": _antithetic(_cube),
    "cylinder": _antithetic(_cylinder),
    "torus": _antithetic(_torus),
    "cone": _cone,
}


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def normalize(points: np.ndarray) -> np.ndarray:
    """Centre on the centroid and scale into the unit ball."""
    centred = points - points.mean(axis=0)
    radius = np.linalg.norm(centred, axis=1).max()
    return centred / radius if radius > 0 else centred


def sample_shape(shape: str, n: int, rng: np.random.Generator, noise: float = 0.0,
                 rotate: bool = False) -> np.ndarray:
    pts = SAMPLERS[shape](n, rng)
    if noise > 0:
        pts = pts + noise * rng.standard_normal(pts.shape)
    if rotate:
        pts = pts @ random_rotation(rng).T
    return normalize(pts)


def generate(config: DatasetConfig) -> PointCloudDataset:
    """Sample ``samples_per_class`` clouds per class, deterministically in ``config.seed``.

    Each cloud draws from its own stream keyed by (seed, class, index), so the
    output does not depend on the order of generation.
    """
    config.validate()
    spc = config.samples_per_class
    total = spc * len(config.classes)
    points = np.empty((total, config.num_points, 3))
    labels = np.repeat(np.arange(len(config.classes)), spc)
    for c, shape in enumerate(config.classes):
        for s in range(spc):
            rng = np.random.default_rng([config.seed, c, s])
            points[c * spc + s] = sample_shape(shape, config.num_points, rng, config.noise, config.rotate)
    return PointCloudDataset(points, labels, np.arange(total), tuple(config.classes))


def split(dataset: PointCloudDataset, config: DatasetConfig) -> dict[str, PointCloudDataset]:
    """Stratified train/val/test split, shuffled with a stream derived from the seed."""
    rng = np.random.default_rng([config.seed, 0x5EA])
    parts: dict[str, list[np.ndarray]] = {"train": [], "val": [], "test": []}
    for label in np.unique(dataset.labels):
        idx = rng.permutation(np.flatnonzero(dataset.labels == label))
        n_train = int(round(config.train_fraction * len(idx)))
        n_val = int(round(config.val_fraction * len(idx)))
        parts["train"].append(idx[:n_train])
        parts["val"].append(idx[n_train:n_train + n_val])
        parts["test"].append(idx[n_train + n_val:])
    return {name: dataset.subset(np.sort(np.concatenate(ix))) for name, ix in parts.items()}
