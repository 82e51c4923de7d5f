"""Differentiable convolution search on point clouds, without a deep-learning framework."""

__version__ = "0.1.0"
