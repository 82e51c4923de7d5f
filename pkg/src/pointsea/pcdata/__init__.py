"""Synthetic point clouds, exact neighbourhoods, augmentation and dataset files."""
from .geometry import augment, augment_batch, affine_transform, draw_augmentation, fps, knn, knn_batch
from .io import DatasetFormatError, DatasetVersionError, load, save
from .synth import (
    SHAPES,
    DatasetConfig,
    PointCloudDataset,
    PointCloudSample,
    generate,
    normalize,
    sample_shape,
    split,
)

__all__ = [
    "SHAPES", "DatasetConfig", "DatasetFormatError", "DatasetVersionError", "PointCloudDataset",
    "PointCloudSample", "affine_transform", "augment", "augment_batch", "draw_augmentation", "fps",
    "generate", "knn", "knn_batch", "load", "normalize", "sample_shape", "save", "split",
]
