"""Search cells over mixed operations and the stacked point-cloud classifier."""
from .cell import (
    CONV_OPS,
    EDGES,
    INPUTS,
    NONZERO,
    OPS,
    STEPS,
    Cell,
    CellGenotype,
    Context,
    EdgeOps,
    NetConfig,
    Network,
    apply_op,
    discretize_cell,
    mixed_op,
    random_cell_genotype,
)

__all__ = [
    "CONV_OPS", "EDGES", "INPUTS", "NONZERO", "OPS", "STEPS", "Cell", "CellGenotype", "Context", "EdgeOps",
    "NetConfig", "Network", "apply_op", "discretize_cell", "mixed_op", "random_cell_genotype",
]
