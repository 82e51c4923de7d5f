"""Searchable point convolution and its handcrafted special cases."""
from .conv import (
    AGGREGATORS,
    ConvConfig,
    ConvGenotype,
    ConvParams,
    aggregate,
    discretize,
    forward,
    forward_genotype,
    genotype_from_kinds,
    random_genotype,
)
from .dot import conv_dot
from .presets import PRESETS, preset, reference_oracle

__all__ = [
    "AGGREGATORS", "ConvConfig", "ConvGenotype", "ConvParams", "PRESETS", "aggregate",
    "conv_dot", "discretize", "forward", "forward_genotype", "genotype_from_kinds",
    "preset", "random_genotype", "reference_oracle",
]
