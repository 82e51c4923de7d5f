"""Essential associations between a centre node and its neighbours.

Node values are laid out as ``(..., k, d)``: one row per neighbour slot.  The
centroid used by e5 is the mean over the ``k`` axis of the neighbourhood
values, which default to the neighbour node itself.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

import pointsea.numcore as nc
from pointsea.numcore import Tensor

from . import kernels


class EAKind(enum.IntEnum):
    E1 = 0  # n_i
    E2 = 1  # n_j
    E3 = 2  # n_i - n_j
    E4 = 3  # ||n_i - n_j||, replicated across the width
    E5 = 4  # n_i - mean of the neighbourhood

    @property
    def label(self) -> str:
        return f"e{int(self) + 1}"

    @classmethod
    def parse(cls, text: str) -> "EAKind":
        text = text.strip().lower()
        if len(text) != 2 or text[0] != "e" or text[1] not in "12345":
            raise ValueError(f"unknown essential association {text!r}")
        return cls(int(text[1]) - 1)


ALL_KINDS: tuple[EAKind, ...] = tuple(EAKind)


def parse_subset(text: str | Sequence) -> tuple[EAKind, ...]:
    items = text.split(",") if isinstance(text, str) else list(text)
    kinds = sorted({k if isinstance(k, EAKind) else EAKind.parse(str(k)) for k in items if str(k).strip()})
    if not kinds:
        raise ValueError("essential-association subset is empty")
    return tuple(kinds)


@dataclass
class NeighborContext:
    center: Tensor
    neighbor: Tensor
    neighborhood: Tensor | None = None

    def __post_init__(self) -> None:
        self.center = nc.as_tensor(self.center)
        self.neighbor = nc.as_tensor(self.neighbor)
        if self.neighborhood is not None:
            self.neighborhood = nc.as_tensor(self.neighborhood)
        if self.center.shape != self.neighbor.shape or self.center.ndim < 2:
            raise nc.ShapeError(
                f"centre {self.center.shape} and neighbour {self.neighbor.shape} must share a (..., k, d) shape"
            )
        if self.neighborhood is not None and self.neighborhood.shape[-1] != self.center.shape[-1]:
            raise nc.ShapeError("neighbourhood width differs from node width")

    @classmethod
    def pair(cls, n_i, n_j, neighborhood=None) -> "NeighborContext":
        """Single centre/neighbour pair given as 1-D vectors."""
        ci = np.asarray(n_i.data if isinstance(n_i, Tensor) else n_i, dtype=np.float64)
        cj = np.asarray(n_j.data if isinstance(n_j, Tensor) else n_j, dtype=np.float64)
        nb = None
        if neighborhood is not None:
            nb = Tensor(np.asarray(neighborhood, dtype=np.float64).reshape(-1, ci.size))
        return cls(Tensor(ci.reshape(1, -1)), Tensor(cj.reshape(1, -1)), nb)

    @property
    def width(self) -> int:
        return self.center.shape[-1]

    def neighbourhood_values(self) -> Tensor:
        return self.neighbor if self.neighborhood is None else self.neighborhood


def eval_ea(kind: EAKind, ctx: NeighborContext) -> Tensor:
    """One association evaluated with plain tape primitives."""
    kind = EAKind(kind)
    if kind is EAKind.E1:
        return ctx.center
    if kind is EAKind.E2:
        return ctx.neighbor
    if kind is EAKind.E3:
        return nc.sub(ctx.center, ctx.neighbor)
    if kind is EAKind.E4:
        dist = nc.l2norm(nc.sub(ctx.center, ctx.neighbor), axis=-1)
        return nc.expand(dist, dist.ndim, ctx.width)
    hood = ctx.neighbourhood_values()
    if hood.shape[-2] == 0:
        raise ValueError("e5 needs a non-empty neighbourhood")
    centroid = nc.mean(hood, axis=-2)
    if ctx.neighborhood is None:
        spread = nc.expand(centroid, centroid.ndim - 1, ctx.center.shape[-2])
    else:
        spread = nc.expand(centroid, centroid.ndim - 1, ctx.center.shape[-2]) if hood.ndim == ctx.center.ndim else None
        if spread is None:
            raise nc.ShapeError("explicit neighbourhood must share leading axes with the centre")
    return nc.sub(ctx.center, spread)


@dataclass
class EAMixture:
    """Logits over a subset of kinds for one DAG edge, plus the sampled choice."""

    beta: Tensor
    kinds: tuple[EAKind, ...] = ALL_KINDS
    sampled: int | None = None
    mode: str = "relaxed"

    def __post_init__(self) -> None:
        if self.beta.shape != (len(self.kinds),):
            raise nc.ShapeError(f"beta shape {self.beta.shape} does not match {len(self.kinds)} kinds")
        if self.mode not in ("relaxed", "sampled"):
            raise ValueError(f"unknown mixture mode {self.mode!r}")

    @property
    def sampled_onehot(self) -> np.ndarray | None:
        if self.sampled is None:
            return None
        v = np.zeros(len(self.kinds))
        v[self.sampled] = 1.0
        return v

    def weights(self) -> np.ndarray:
        return nc.softmax(Tensor(self.beta.data)).data

    def strongest(self) -> EAKind:
        return self.kinds[int(np.argmax(self.beta.data))]


def kind_matrix(kinds: Sequence[EAKind]) -> np.ndarray:
    """(len(kinds), 5) selector mapping subset weights onto the e1..e5 columns."""
    m = np.zeros((len(kinds), 5))
    m[np.arange(len(kinds)), [int(k) for k in kinds]] = 1.0
    return m


def mixed_node(nodes: Sequence[Tensor], pairs: Sequence[tuple[int, int]], weights) -> Tensor:
    """Sum of weighted associations over ``pairs`` of ``nodes``.

    ``weights`` is a (len(pairs), 5) array on the e1..e5 columns: a Tensor
    for relaxed mixtures (gradients flow into it) or a constant ndarray for
    sampled/discrete ones.
    """
    if not pairs:
        raise ValueError("mixed_node needs at least one incoming pair")
    const = not isinstance(weights, Tensor)
    w = np.ascontiguousarray(weights if const else weights.data, dtype=np.float64)
    if w.shape != (len(pairs), 5):
        raise nc.ShapeError(f"weights shape {w.shape} does not match {len(pairs)} pairs")
    used = sorted({i for p in pairs for i in p})
    shape = nodes[used[0]].shape
    for i in used:
        if nodes[i].shape != shape or nodes[i].ndim != 3:
            raise nc.ShapeError("mixed_node inputs must share a (centres, k, d) shape")
    k = shape[1]
    means = {b: nc.sum_mid(nodes[b].data) / k for b in {p[1] for p in pairs}}
    out = np.zeros(shape)
    for row, (a, b) in enumerate(pairs):
        kernels.mix_forward(nodes[a].data, nodes[b].data, means[b], w[row], out)

    inputs = [nodes[i] for i in used] + ([] if const else [weights])
    slot = {i: s for s, i in enumerate(used)}

    def back(g):
        g = np.ascontiguousarray(g)
        grads = [np.zeros(shape) if nodes[i].requires_grad else None for i in used]
        gw = None if const else np.zeros((len(pairs), 5))
        scratch = np.zeros(shape)
        for row, (a, b) in enumerate(pairs):
            ga = grads[slot[a]] if grads[slot[a]] is not None else scratch
            gb = grads[slot[b]] if grads[slot[b]] is not None else scratch
            gw_row = gw[row] if gw is not None else np.zeros(5)
            kernels.mix_backward(nodes[a].data, nodes[b].data, means[b], w[row], g, ga, gb,
                                 gw_row, gw is not None)
        return grads + ([] if const else [gw])

    return nc.record("mixed_node", out, inputs, back)


def mixed_level(n0: Tensor, n1: Tensor, level_pairs: Sequence[tuple[int, Sequence[tuple[int, int]]]],
                weights) -> Tensor:
    """All computed nodes of one DAG level, concatenated along the width.

    ``level_pairs`` lists ``(target, incoming pairs)`` with targets 2, 3, ...
    in order; ``weights`` has one e1..e5 row per pair in that order.  Gives
    the same values as chaining :func:`mixed_node` but runs as one compiled
    pass over the centres.
    """
    if n0.shape != n1.shape or n0.ndim != 3:
        raise nc.ShapeError(f"level inputs {n0.shape} and {n1.shape} must share a (centres, k, d) shape")
    targets = [t for t, _ in level_pairs]
    if targets != list(range(2, 2 + len(targets))):
        raise ValueError("level targets must be 2, 3, ... in order")
    pa, pb, pt = [], [], []
    for t, pairs in level_pairs:
        for a, b in pairs:
            if not 0 <= a < b < t:
                raise ValueError(f"pair ({a}, {b}) cannot feed node {t}")
            pa.append(a)
            pb.append(b)
            pt.append(t)
    pa, pb, pt = (np.array(v, dtype=np.int64) for v in (pa, pb, pt))
    const = not isinstance(weights, Tensor)
    w = np.ascontiguousarray(weights if const else weights.data, dtype=np.float64)
    if w.shape != (len(pa), 5):
        raise nc.ShapeError(f"weights shape {w.shape} does not match {len(pa)} pairs")
    c, k, d = n0.shape
    a0 = np.ascontiguousarray(n0.data)
    a1 = np.ascontiguousarray(n1.data)
    hidden = np.empty((c, k, len(targets) * d))
    kernels.level_forward(a0, a1, w, pa, pb, pt, hidden)
    inputs = [n0, n1] + ([] if const else [weights])

    def back(g):
        g0 = np.zeros(n0.shape)
        g1 = np.zeros(n1.shape)
        gw = np.zeros(w.shape)
        kernels.level_backward(a0, a1, hidden, w, pa, pb, pt, np.ascontiguousarray(g), g0, g1, gw,
                               not const)
        return [g0, g1] + ([] if const else [gw])

    return nc.record("mixed_level", hidden, inputs, back)


def mixed_edge(mix: EAMixture, ctx: NeighborContext) -> Tensor:
    """Softmax-weighted association for one edge.

    Relaxed mode is differentiable in ``beta``; sampled mode returns the
    selected candidate's output unchanged.
    """
    if mix.mode == "sampled":
        if mix.sampled is None:
            raise ValueError("sampled mixture has no sampled one-hot")
        return eval_ea(mix.kinds[mix.sampled], ctx)
    w5 = nc.matmul(nc.reshape(nc.softmax(mix.beta), (1, -1)), Tensor(kind_matrix(mix.kinds)))
    if ctx.neighborhood is not None:
        # explicit neighbourhoods fall back to the primitive path
        parts = [nc.mul(nc.take(w5, (0, int(k))), eval_ea(k, ctx)) for k in mix.kinds]
        out = parts[0]
        for p in parts[1:]:
            out = nc.add(out, p)
        return out
    lead = ctx.center.shape[:-2]
    k, d = ctx.center.shape[-2:]
    a = nc.reshape(ctx.center, (-1, k, d))
    b = nc.reshape(ctx.neighbor, (-1, k, d))
    return nc.reshape(mixed_node([a, b], [(0, 1)], w5), lead + (k, d))


def choose_epsilon_greedy(beta: np.ndarray, epsilon: float, rng: np.random.Generator) -> np.ndarray:
    """Per row of logits: argmax with prob 1-eps, otherwise a uniform index.

    Consumes exactly two draws per row so the stream advances identically
    whatever the outcome.
    """
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
    beta = np.atleast_2d(beta)
    rows, m = beta.shape
    explore = rng.random(rows) < epsilon
    uniform = rng.integers(0, m, size=rows)
    return np.where(explore, uniform, np.argmax(beta, axis=1)).astype(np.int64)


def sample_epsilon_greedy(mix: EAMixture, epsilon: float, rng: np.random.Generator) -> EAMixture:
    choice = int(choose_epsilon_greedy(mix.beta.data.reshape(1, -1), epsilon, rng)[0])
    return EAMixture(mix.beta, mix.kinds, sampled=choice, mode="sampled")


@dataclass
class MixtureBank:
    """All edge mixtures of one searchable convolution, stacked row-wise.

    Shared by every instance of that convolution, so sampling once per
    optimiser step fixes the choice network-wide.
    """

    beta: Tensor
    kinds: tuple[EAKind, ...] = ALL_KINDS
    sampled: np.ndarray | None = None
    mode: str = "relaxed"
    _selector: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.beta.ndim != 2 or self.beta.shape[1] != len(self.kinds):
            raise nc.ShapeError(f"beta shape {self.beta.shape} does not match {len(self.kinds)} kinds")
        self._selector = kind_matrix(self.kinds)

    @classmethod
    def create(cls, positions: int, kinds: Sequence[EAKind] = ALL_KINDS,
               rng: np.random.Generator | None = None, scale: float = 1e-3) -> "MixtureBank":
        kinds = tuple(kinds)
        init = np.zeros((positions, len(kinds)))
        if rng is not None and scale > 0:
            init = scale * rng.standard_normal((positions, len(kinds)))
        return cls(nc.parameter(init, name="beta"), kinds)

    @property
    def positions(self) -> int:
        return self.beta.shape[0]

    @property
    def degrees_of_freedom(self) -> int:
        return self.positions * (len(self.kinds) - 1)

    def __getitem__(self, p: int) -> EAMixture:
        sampled = None if self.sampled is None else int(self.sampled[p])
        return EAMixture(nc.take(self.beta, p) if nc.active_tape() else Tensor(self.beta.data[p]),
                         self.kinds, sampled, self.mode if sampled is not None else "relaxed")

    def sample(self, epsilon: float, rng: np.random.Generator) -> None:
        self.sampled = choose_epsilon_greedy(self.beta.data, epsilon, rng)
        self.mode = "sampled"

    def set_greedy(self) -> None:
        self.sampled = np.argmax(self.beta.data, axis=1).astype(np.int64)
        self.mode = "sampled"

    def relax(self) -> None:
        self.mode = "relaxed"

    def strongest(self) -> list[EAKind]:
        return [self.kinds[int(i)] for i in np.argmax(self.beta.data, axis=1)]

    def relaxed_weights(self) -> Tensor:
        """(positions, 5) softmax weights in e1..e5 column order."""
        return nc.matmul(nc.softmax(self.beta, axis=1), Tensor(self._selector))

    def onehot_weights(self) -> np.ndarray:
        if self.sampled is None:
            raise ValueError("mixture bank has not been sampled")
        return self._selector[self.sampled]

    def weights(self):
        return self.onehot_weights() if self.mode == "sampled" else self.relaxed_weights()


def kinds_onehot(kinds: Sequence[EAKind]) -> np.ndarray:
    """Constant weight rows selecting ``kinds`` (one per position)."""
    return kind_matrix(ALL_KINDS)[[int(k) for k in kinds]]
