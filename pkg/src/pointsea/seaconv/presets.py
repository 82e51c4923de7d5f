"""Handcrafted local operators expressed as fixed settings of the searchable
convolution, plus direct numpy versions used to check them."""
from __future__ import annotations

import numpy as np

from pointsea.eassoc import EAKind

from .conv import ConvConfig, ConvGenotype

E1, E2, E3, E4, E5 = EAKind

PRESETS: dict[str, tuple[str, tuple[EAKind, ...]]] = {
    "pointnet++": ("max", (E2,)),
    "dgcnn": ("max", (E1, E3)),
    "rs-cnn": ("max", (E1, E2, E3, E4)),
    "pointweb": ("maxsum", (E1, E3)),
    "pointwise-cnn": ("sum", (E1, E2, E3, E4, E5)),
}


def preset(name: str, width: int = 8, in_features: int = 32,
           out_features: int = 32) -> tuple[ConvConfig, ConvGenotype]:
    """One level, one computed node per listed association, each reading the
    input pair, so the level MLP sees exactly their concatenation."""
    key = name.lower()
    if key not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    agg, kinds = PRESETS[key]
    cfg = ConvConfig(levels=1, nodes=len(kinds) + 2, width=width, aggregator=agg,
                     in_features=in_features, out_features=out_features,
                     wiring="input-pair", preset=key)
    return cfg, ConvGenotype(kinds, agg, 1, cfg.nodes, width, "input-pair")


def reference_oracle(name: str, features: np.ndarray, coords: np.ndarray, nb: np.ndarray,
                     weights: dict) -> np.ndarray:
    """Straight numpy evaluation of the named operator, loop over centres."""
    agg, kinds = PRESETS[name.lower()]
    we = weights["embed"]
    (w, b), = weights["mlp"]
    x = np.concatenate([features, coords], axis=1) @ we
    out = []
    for i in range(len(x)):
        xi = x[i]
        xj = x[nb[i]]
        centroid = xj.mean(axis=0)
        rows = []
        for j in range(len(xj)):
            cand = {
                E1: xi,
                E2: xj[j],
                E3: xi - xj[j],
                E4: np.full(len(xi), np.linalg.norm(xi - xj[j])),
                E5: xi - centroid,
            }
            rows.append(np.maximum(np.concatenate([cand[k] for k in kinds]) @ w + b, 0.0))
        h = np.array(rows)
        if agg == "max":
            out.append(h.max(axis=0))
        elif agg == "sum":
            out.append(h.sum(axis=0))
        else:
            out.append(h.max(axis=0) + h.sum(axis=0))
    return np.array(out)
