"""Cells built from mixed operations, the stacked classifier and cell-level
discretisation."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

import pointsea.numcore as nc
from pointsea import pcdata, seaconv
from pointsea.eassoc import MixtureBank
from pointsea.numcore import Tensor
from pointsea.seaconv import ConvConfig, ConvGenotype, ConvParams

OPS = ("conv_a", "conv_b", "mlp", "skip", "zero")
CONV_OPS = ("conv_a", "conv_b")
NONZERO = tuple(o for o in OPS if o != "zero")
INPUTS = 2
STEPS = 3


def cell_edges() -> list[tuple[int, int]]:
    """(source, target) for every edge; intermediate node t reads all t precedents."""
    return [(s, t) for t in range(INPUTS, INPUTS + STEPS) for s in range(t)]


EDGES = cell_edges()


@dataclass
class CellGenotype:
    # per intermediate node, two (source, op) choices
    nodes: list[list[tuple[int, str]]]
    convs: dict[str, ConvGenotype] = field(default_factory=dict)

    def validate(self) -> None:
        if len(self.nodes) != STEPS:
            raise ValueError(f"cell needs {STEPS} intermediate nodes, got {len(self.nodes)}")
        for i, picks in enumerate(self.nodes):
            t = INPUTS + i
            if len(picks) != 2 or len({s for s, _ in picks}) != 2:
                raise ValueError(f"node {t} must pick two distinct inputs")
            for s, op in picks:
                if not 0 <= s < t:
                    raise ValueError(f"node {t} reads from {s}, which is not a precedent")
                if op not in NONZERO:
                    raise ValueError(f"node {t} uses invalid op {op!r}")
        for op in self.used_convs():
            if op not in self.convs:
                raise ValueError(f"cell uses {op} but carries no genotype for it")

    def to_dict(self) -> dict:
        return {"nodes": [[[s, op] for s, op in picks] for picks in self.nodes],
                "convs": {o: g.to_dict() for o, g in self.convs.items()}}

    @classmethod
    def from_dict(cls, d: dict) -> "CellGenotype":
        nodes = [[(int(s), str(op)) for s, op in picks] for picks in d["nodes"]]
        return cls(nodes, {o: ConvGenotype.from_dict(g) for o, g in d.get("convs", {}).items()})

    def used_convs(self) -> list[str]:
        return sorted({op for picks in self.nodes for _, op in picks if op in CONV_OPS})

    def edge_mask(self) -> np.ndarray:
        """(edges, ops) 0/1 matrix of the kept edges and their ops."""
        mask = np.zeros((len(EDGES), len(OPS)))
        for i, picks in enumerate(self.nodes):
            for s, op in picks:
                mask[EDGES.index((s, INPUTS + i)), OPS.index(op)] = 1.0
        return mask


@dataclass(frozen=True)
class NetConfig:
    cells: int = 2
    channels: int = 32
    k: int = 9
    num_classes: int = 4
    head_hidden: int = 64
    conv: ConvConfig = ConvConfig()

    def conv_config(self) -> ConvConfig:
        return self.conv.replace(in_features=self.channels, out_features=self.channels)

    def replace(self, **kw) -> "NetConfig":
        return dataclasses.replace(self, **kw)

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}
        d["conv"] = self.conv.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NetConfig":
        d = dict(d)
        d["conv"] = ConvConfig.from_dict(d["conv"])
        return cls(**d)


def _dense(rng, fan_in, fan_out, name):
    w = nc.parameter(rng.standard_normal((fan_in, fan_out)) * np.sqrt(2.0 / fan_in), name=f"{name}.w")
    return w, nc.parameter(np.zeros(fan_out), name=f"{name}.b")


class EdgeOps:
    """Weights of every candidate op on one edge."""

    def __init__(self, cfg: NetConfig, conv_cfgs: dict, rng, banks: dict[str, MixtureBank], ops, name: str):
        c = cfg.channels
        self.convs = {o: ConvParams.create(conv_cfgs[o], rng, banks.get(o), name=f"{name}.{o}")
                      for o in ops if o in CONV_OPS}
        self.mlp = _dense(rng, c, c, f"{name}.mlp") if "mlp" in ops else None

    def params(self) -> list[Tensor]:
        out = [p for conv in self.convs.values() for p in conv.weight_params()]
        return out + (list(self.mlp) if self.mlp else [])


@dataclass
class Context:
    """Per-batch state shared by every op: raw coordinates, the k-NN table,
    conv structures and the mixture weights of both conv candidates."""

    coords: np.ndarray
    nb: np.ndarray
    conv_cfgs: dict
    ea_weights: dict


def apply_op(op: str, edge: EdgeOps, x: Tensor, ctx: Context) -> Tensor | None:
    if op == "zero":
        return None
    if op == "skip":
        return x
    # parametric ops are standardised per point; without it the scale grows
    # by roughly an order of magnitude per cell
    if op == "mlp":
        return nc.layer_norm(nc.affine(x, edge.mlp[0], edge.mlp[1], activation="relu"))
    return nc.layer_norm(seaconv.forward(ctx.conv_cfgs[op], edge.convs[op], x, ctx.coords, ctx.nb,
                                         weights=ctx.ea_weights[op]))


def mixed_op(weights, edge: EdgeOps, x: Tensor, ctx: Context) -> Tensor:
    """Sum of op outputs weighted by a 5-vector (Tensor or constant array).

    The zero op adds nothing, so with constant weights any op carrying an
    exact zero weight is skipped entirely.
    """
    const = not isinstance(weights, Tensor)
    total = None
    for o, op in enumerate(OPS):
        if op == "zero" or (const and weights[o] == 0.0):
            continue
        y = apply_op(op, edge, x, ctx)
        if const:
            term = y if weights[o] == 1.0 else nc.mul(y, float(weights[o]))
        else:
            term = nc.mul(y, nc.take(weights, o))
        total = term if total is None else nc.add(total, term)
    return nc.zeros(x.shape) if total is None else total


class Cell:
    def __init__(self, cfg: NetConfig, conv_cfgs: dict, rng, banks, name: str,
                 genotype: CellGenotype | None = None):
        self.edges: dict[int, EdgeOps] = {}
        mask = None if genotype is None else genotype.edge_mask()
        for e in range(len(EDGES)):
            ops = OPS if mask is None else tuple(o for i, o in enumerate(OPS) if mask[e, i])
            if ops:
                self.edges[e] = EdgeOps(cfg, conv_cfgs, rng, banks, ops, f"{name}.e{e}")
        self.proj = _dense(rng, (STEPS + 1) * cfg.channels, cfg.channels, f"{name}.proj")

    def params(self) -> list[Tensor]:
        return [p for e in self.edges.values() for p in e.params()] + list(self.proj)

    def forward(self, s0: Tensor, s1: Tensor, op_weights, ctx: Context) -> Tensor:
        const = not isinstance(op_weights, Tensor)
        states = [s0, s1]
        for t in range(INPUTS, INPUTS + STEPS):
            acc = None
            for e, (src, dst) in enumerate(EDGES):
                if dst != t or e not in self.edges:
                    continue
                if const and not np.any(op_weights[e][:-1]):
                    continue
                w = op_weights[e] if const else nc.take(op_weights, e)
                y = mixed_op(w, self.edges[e], states[src], ctx)
                acc = y if acc is None else nc.add(acc, y)
            states.append(nc.zeros(s1.shape) if acc is None else acc)
        cat = nc.concat(states[INPUTS:] + [s1], axis=1)
        return nc.layer_norm(nc.affine(cat, self.proj[0], self.proj[1]))


class Network:
    """Stem, stacked cells and classification head.

    Without a genotype this is the search supernet: every edge holds every op
    and the architecture logits ``theta`` and mixture banks are live.  With a
    genotype only the kept edges and ops carry weights.
    """

    def __init__(self, cfg: NetConfig, rng: np.random.Generator, genotype: CellGenotype | None = None,
                 init_scale: float = 1e-3):
        self.cfg = cfg
        self.genotype = genotype
        base = cfg.conv_config()
        self.conv_cfgs = {o: base for o in CONV_OPS}
        if genotype is None:
            self.theta = nc.parameter(init_scale * rng.standard_normal((len(EDGES), len(OPS))), name="theta")
            self.banks = {o: MixtureBank.create(base.positions, base.ea_subset, rng, init_scale)
                          for o in CONV_OPS}
            for o, b in self.banks.items():
                b.beta.name = f"beta.{o}"
        else:
            genotype.validate()
            self.theta = None
            self.banks = {}
            for o, g in genotype.convs.items():
                self.conv_cfgs[o] = g.apply_to(base)
                g.validate(self.conv_cfgs[o])
        self.stem = _dense(rng, 3, cfg.channels, "stem")
        self.cells = [Cell(cfg, self.conv_cfgs, rng, self.banks, f"cell{i}", genotype)
                      for i in range(cfg.cells)]
        self.head1 = _dense(rng, cfg.channels, cfg.head_hidden, "head1")
        self.head2 = _dense(rng, cfg.head_hidden, cfg.num_classes, "head2")

    @property
    def is_supernet(self) -> bool:
        return self.theta is not None

    def weight_params(self) -> list[Tensor]:
        out = list(self.stem)
        for c in self.cells:
            out += c.params()
        return out + list(self.head1) + list(self.head2)

    def arch_params(self) -> list[Tensor]:
        if self.theta is None:
            return []
        return [self.theta] + [self.banks[o].beta for o in CONV_OPS]

    def op_weights(self):
        if self.theta is None:
            return self.genotype.edge_mask()
        return nc.softmax(self.theta, axis=1)

    def ea_weights(self, mode: str = "bank") -> dict:
        """Mixture weights per conv candidate: the banks' current state, fully
        relaxed, or the greedy (argmax) choice."""
        if self.theta is None:
            return {o: g.weights() for o, g in self.genotype.convs.items()}
        if mode == "bank":
            return {o: b.weights() for o, b in self.banks.items()}
        if mode == "relaxed":
            return {o: b.relaxed_weights() for o, b in self.banks.items()}
        if mode == "greedy":
            return {o: g.weights() for o, g in self.conv_genotypes().items()}
        raise ValueError(f"unknown mixture mode {mode!r}")

    def forward(self, points: np.ndarray, nb: np.ndarray | None = None, op_weights=None,
                ea_weights: dict | None = None) -> Tensor:
        points = np.asarray(points, dtype=np.float64)
        b, n, _ = points.shape
        if nb is None:
            nb = pcdata.knn_batch(points, self.cfg.k)
        coords = points.reshape(b * n, 3)
        ow = self.op_weights() if op_weights is None else op_weights
        ew = self.ea_weights() if ea_weights is None else ea_weights
        ctx = Context(coords, nb, self.conv_cfgs, ew)
        x = nc.affine(Tensor(coords), self.stem[0], self.stem[1], activation="relu")
        s0 = s1 = x
        for cell in self.cells:
            s0, s1 = s1, cell.forward(s0, s1, ow, ctx)
        pooled = nc.max(nc.reshape(s1, (b, n, self.cfg.channels)), axis=1)
        h = nc.affine(pooled, self.head1[0], self.head1[1], activation="relu")
        return nc.affine(h, self.head2[0], self.head2[1])

    def conv_genotypes(self) -> dict[str, ConvGenotype]:
        if self.theta is None:
            return dict(self.genotype.convs)
        return {o: seaconv.discretize(ConvParams(None, [], self.banks[o]), self.conv_cfgs[o])
                for o in CONV_OPS}

    def discretize(self) -> CellGenotype:
        if self.theta is None:
            return self.genotype
        geno = discretize_cell(self.theta.data)
        geno.convs = self.conv_genotypes()
        return geno

    @staticmethod
    def masked_weights(genotype: CellGenotype) -> tuple[np.ndarray, dict]:
        """Constant weights that run the supernet as the given discrete cell."""
        return genotype.edge_mask(), {o: g.weights() for o, g in genotype.convs.items()}


def discretize_cell(theta: np.ndarray) -> CellGenotype:
    """Per edge the strongest non-zero op; per node the two edges whose best
    non-zero weight is largest.  Ties go to the lower index."""
    theta = np.asarray(theta, dtype=np.float64)
    w = np.exp(theta - theta.max(axis=1, keepdims=True))
    w /= w.sum(axis=1, keepdims=True)
    nz = [OPS.index(o) for o in NONZERO]
    best_op = [nz[int(np.argmax(w[e, nz]))] for e in range(len(EDGES))]
    nodes = []
    for t in range(INPUTS, INPUTS + STEPS):
        cand = [e for e, (_, dst) in enumerate(EDGES) if dst == t]
        ranked = sorted(cand, key=lambda e: (-w[e, best_op[e]], e))[:2]
        nodes.append([(EDGES[e][0], OPS[best_op[e]]) for e in sorted(ranked)])
    return CellGenotype(nodes)


def random_cell_genotype(rng: np.random.Generator, conv_cfg: ConvConfig) -> CellGenotype:
    nodes = []
    for t in range(INPUTS, INPUTS + STEPS):
        srcs = sorted(rng.choice(t, size=2, replace=False).tolist())
        nodes.append([(int(s), NONZERO[int(rng.integers(len(NONZERO)))]) for s in srcs])
    convs = {o: seaconv.random_genotype(conv_cfg, rng) for o in CONV_OPS}
    return CellGenotype(nodes, convs)
