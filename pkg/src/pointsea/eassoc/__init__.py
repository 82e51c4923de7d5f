"""Essential-association primitives, mixed edges and epsilon-greedy sampling."""
from .core import (
    ALL_KINDS,
    EAKind,
    EAMixture,
    MixtureBank,
    NeighborContext,
    choose_epsilon_greedy,
    eval_ea,
    kind_matrix,
    kinds_onehot,
    mixed_edge,
    mixed_level,
    mixed_node,
    parse_subset,
    sample_epsilon_greedy,
)

__all__ = [
    "ALL_KINDS", "EAKind", "EAMixture", "MixtureBank", "NeighborContext",
    "choose_epsilon_greedy", "eval_ea", "kind_matrix", "kinds_onehot", "mixed_edge",
    "mixed_level", "mixed_node", "parse_subset", "sample_epsilon_greedy",
]
