"""Searchable point convolution: an EA-DAG over (centre, neighbour) pairs,
shared per-level MLPs and a symmetric aggregation over each neighbourhood."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

import pointsea.numcore as nc
from pointsea.eassoc import ALL_KINDS, EAKind, MixtureBank, kinds_onehot, mixed_level, parse_subset
from pointsea.numcore import Tensor

AGGREGATORS = ("max", "sum", "mean", "maxsum")
WIRINGS = ("full", "input-pair")


@dataclass(frozen=True)
class ConvConfig:
    levels: int = 3
    nodes: int = 5
    width: int = 8
    aggregator: str = "max"
    ea_subset: tuple = ALL_KINDS
    in_features: int = 32
    out_features: int = 32
    wiring: str = "full"
    preset: str | None = None
    # width of h_gamma's last level; when narrower than out_features a
    # per-point linear map after aggregation restores the output width
    mlp_width: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "ea_subset", parse_subset(self.ea_subset))
        if self.levels < 1:
            raise ValueError("a convolution needs at least one level")
        if self.nodes < 3:
            raise ValueError("each level needs at least 3 nodes (2 inputs and 1 computed)")
        if self.aggregator not in AGGREGATORS:
            raise ValueError(f"unknown aggregator {self.aggregator!r}")
        if self.wiring not in WIRINGS:
            raise ValueError(f"unknown wiring {self.wiring!r}")
        if min(self.width, self.in_features, self.out_features) < 1:
            raise ValueError("widths must be positive")

    def replace(self, **kw) -> "ConvConfig":
        return dataclasses.replace(self, **kw)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["ea_subset"] = [k.label for k in self.ea_subset]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ConvConfig":
        return cls(**d)

    def level_pairs(self) -> list[tuple[int, list[tuple[int, int]]]]:
        """(target node, incoming pairs) for every computed node of one level."""
        out = []
        for t in range(2, self.nodes):
            if self.wiring == "full":
                pairs = [(a, b) for b in range(1, t) for a in range(b)]
            else:
                pairs = [(0, 1)]
            out.append((t, pairs))
        return out

    @property
    def positions_per_level(self) -> int:
        return sum(len(p) for _, p in self.level_pairs())

    @property
    def positions(self) -> int:
        return self.levels * self.positions_per_level

    def position_table(self) -> list[tuple[int, int, int, int]]:
        """(level, target, a, b) for every mixture position, in bank row order."""
        return [(lv, t, a, b) for lv in range(self.levels)
                for t, pairs in self.level_pairs() for a, b in pairs]

    @property
    def head_width(self) -> int:
        return self.out_features if self.mlp_width is None else self.mlp_width

    @property
    def projects(self) -> bool:
        return self.head_width != self.out_features

    def level_out_width(self, level: int) -> int:
        return self.head_width if level == self.levels - 1 else self.width


@dataclass
class ConvGenotype:
    kinds: tuple[EAKind, ...]
    aggregator: str = "max"
    levels: int = 3
    nodes: int = 5
    width: int = 8
    wiring: str = "full"

    def __post_init__(self):
        self.kinds = tuple(EAKind(k) for k in self.kinds)

    def to_dict(self) -> dict:
        return {"kinds": [k.label for k in self.kinds], "aggregator": self.aggregator,
                "levels": self.levels, "nodes": self.nodes, "width": self.width, "wiring": self.wiring}

    @classmethod
    def from_dict(cls, d: dict) -> "ConvGenotype":
        d = dict(d)
        d["kinds"] = tuple(EAKind.parse(k) if isinstance(k, str) else EAKind(k) for k in d["kinds"])
        return cls(**d)

    def used_kinds(self) -> set[EAKind]:
        return set(self.kinds)

    def apply_to(self, cfg: ConvConfig) -> ConvConfig:
        return cfg.replace(levels=self.levels, nodes=self.nodes, width=self.width,
                           aggregator=self.aggregator, wiring=self.wiring)


    def validate(self, cfg: ConvConfig | None = None) -> None:
        cfg = cfg or self.apply_to(ConvConfig())
        if len(self.kinds) != cfg.positions:
            raise ValueError(f"genotype lists {len(self.kinds)} associations, structure needs {cfg.positions}")

    def weights(self) -> np.ndarray:
        return kinds_onehot(self.kinds)


def _init(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    return rng.standard_normal((fan_in, fan_out)) * np.sqrt(2.0 / fan_in)


@dataclass
class ConvParams:
    embed: Tensor
    mlp: list[tuple[Tensor, Tensor]]
    bank: MixtureBank
    extra: dict = field(default_factory=dict)

    @classmethod
    def create(cls, cfg: ConvConfig, rng: np.random.Generator, bank: MixtureBank | None = None,
               name: str = "conv") -> "ConvParams":
        embed = nc.parameter(_init(rng, cfg.in_features + 3, cfg.width), name=f"{name}.embed")
        mlp = []
        for lv in range(cfg.levels):
            fan_in = (cfg.nodes - 2) * cfg.width
            w = nc.parameter(_init(rng, fan_in, cfg.level_out_width(lv)), name=f"{name}.mlp{lv}.w")
            b = nc.parameter(np.zeros(cfg.level_out_width(lv)), name=f"{name}.mlp{lv}.b")
            mlp.append((w, b))
        extra = {}
        if cfg.projects:
            extra["proj"] = nc.parameter(_init(rng, cfg.head_width, cfg.out_features), name=f"{name}.proj")
        if bank is None:
            bank = MixtureBank.create(cfg.positions, cfg.ea_subset, rng)
        if bank.positions != cfg.positions:
            raise nc.ShapeError(f"mixture bank has {bank.positions} rows, structure needs {cfg.positions}")
        return cls(embed, mlp, bank, extra)

    def weight_params(self) -> list[Tensor]:
        """Network weights (embedding and h_gamma)."""
        return [self.embed] + [p for pair in self.mlp for p in pair] + list(self.extra.values())

    def shared_weights(self) -> dict:
        return {
            "embed": self.embed.data,
            "mlp": [(w.data, b.data) for w, b in self.mlp],
        }


def aggregate(h: Tensor, how: str) -> Tensor:
    if how == "max":
        return nc.max(h, axis=1)
    if how == "sum":
        return nc.sum(h, axis=1)
    if how == "mean":
        return nc.mean(h, axis=1)
    if how == "maxsum":
        return nc.add(nc.max(h, axis=1), nc.sum(h, axis=1))
    raise ValueError(f"unknown aggregator {how!r}")


def forward(cfg: ConvConfig, params: ConvParams, features, coords: np.ndarray, nb: np.ndarray,
            weights=None) -> Tensor:
    """Apply the convolution to an (N, F) feature block.

    ``nb`` is an (N, k) table of row indices into the same block.  ``weights``
    overrides the mixture weights with a (positions, 5) array or Tensor on the
    e1..e5 columns; by default the bank's current mode decides.
    """
    features = nc.as_tensor(features)
    coords = np.asarray(coords, dtype=np.float64)
    nb = np.asarray(nb)
    n = features.shape[0]
    if features.ndim != 2 or features.shape[1] != cfg.in_features:
        raise nc.ShapeError(f"features {features.shape} do not match in_features={cfg.in_features}")
    if coords.shape != (n, 3) or nb.ndim != 2 or nb.shape[0] != n:
        raise nc.ShapeError(f"neighbourhood {nb.shape} / coords {coords.shape} inconsistent with {n} points")
    k = nb.shape[1]
    if weights is None:
        weights = params.bank.weights()
    const = not isinstance(weights, Tensor)

    x = nc.concat([features, Tensor(coords)], axis=1)
    emb = nc.matmul(x, params.embed)
    center = nc.expand(emb, 1, k)
    neighbour = nc.gather_rows(emb, nb)

    per_level = cfg.positions_per_level
    structure = cfg.level_pairs()
    inputs = (center, neighbour)
    for lv in range(cfg.levels):
        sl = slice(lv * per_level, (lv + 1) * per_level)
        w = weights[sl] if const else nc.take(weights, sl)
        cat = mixed_level(inputs[0], inputs[1], structure, w)
        wl, bl = params.mlp[lv]
        flat = nc.reshape(cat, (n * k, cat.shape[2]))
        out = nc.reshape(nc.affine(flat, wl, bl, activation="relu"), (n, k, wl.shape[1]))
        inputs = (out, neighbour)
    pooled = aggregate(out, cfg.aggregator)
    if cfg.projects:
        pooled = nc.matmul(pooled, params.extra["proj"])
    return pooled


def discretize(params: ConvParams, cfg: ConvConfig) -> ConvGenotype:
    """Strongest association per position, ties to the lowest index."""
    return ConvGenotype(tuple(params.bank.strongest()), cfg.aggregator, cfg.levels, cfg.nodes,
                        cfg.width, cfg.wiring)


def forward_genotype(cfg: ConvConfig, params: ConvParams, genotype: ConvGenotype, features,
                     coords, nb) -> Tensor:
    genotype.validate(cfg)
    return forward(cfg, params, features, coords, nb, weights=genotype.weights())


def random_genotype(cfg: ConvConfig, rng: np.random.Generator) -> ConvGenotype:
    subset = cfg.ea_subset
    picks = rng.integers(0, len(subset), size=cfg.positions)
    return ConvGenotype(tuple(subset[i] for i in picks), cfg.aggregator, cfg.levels, cfg.nodes,
                        cfg.width, cfg.wiring)


def genotype_from_kinds(cfg: ConvConfig, kinds: Sequence) -> ConvGenotype:
    g = ConvGenotype(tuple(kinds), cfg.aggregator, cfg.levels, cfg.nodes, cfg.width, cfg.wiring)
    g.validate(cfg)
    return g
