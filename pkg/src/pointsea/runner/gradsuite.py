"""Finite-difference sweep over every primitive and the composite losses."""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

import pointsea.numcore as nc
from pointsea import eassoc, pcdata, seaconv
from pointsea.numcore.gradcheck import check_gradients, sample_coords
from pointsea.supernet import Context, NetConfig, Network, mixed_op

SMOOTH_TOL = 1e-6
KINK_TOL = 1e-4


@dataclass
class GradCase:
    name: str
    error: float
    tol: float

    @property
    def ok(self) -> bool:
        return self.error <= self.tol


def _probe(rng, shape):
    return nc.Tensor(rng.standard_normal(shape))


def _weighted(out_fn, rng, shape):
    probe = _probe(rng, shape)
    return lambda: nc.sum(nc.mul(out_fn(), probe))


def _primitive_cases(rng) -> list[tuple[str, Callable, list, float]]:
    p = lambda *s: nc.parameter(rng.standard_normal(s))  # noqa: E731
    # kinks are kept away from the probes: |x| bounded below for relu, distinct entries for max
    away = lambda *s: nc.parameter(np.sign(rng.standard_normal(s)) * rng.uniform(0.2, 1.5, s))  # noqa: E731
    a, b = p(4, 3), p(4, 3)
    scalar = p(1)
    m1, m2 = p(4, 5), p(5, 3)
    w, bias = p(5, 3), p(3)
    x3 = p(4, 6, 3)
    r = away(4, 3)
    v = p(6, 3)
    logits = p(5, 4)
    labels = np.array([0, 3, 1, 1, 2])
    idx = np.array([2, 0, 2, 5, 1, 1, 4])
    cases = [
        ("add", lambda: nc.add(a, b), [a, b], (4, 3), SMOOTH_TOL),
        ("add[scalar]", lambda: nc.add(a, scalar), [a, scalar], (4, 3), SMOOTH_TOL),
        ("sub", lambda: nc.sub(a, b), [a, b], (4, 3), SMOOTH_TOL),
        ("mul", lambda: nc.mul(a, b), [a, b], (4, 3), SMOOTH_TOL),
        ("matmul", lambda: nc.matmul(m1, m2), [m1, m2], (4, 3), SMOOTH_TOL),
        ("affine", lambda: nc.affine(m1, w, bias), [m1, w, bias], (4, 3), SMOOTH_TOL),
        ("relu", lambda: nc.relu(r), [r], (4, 3), KINK_TOL),
        ("softmax", lambda: nc.softmax(a, axis=1), [a], (4, 3), SMOOTH_TOL),
        ("log_softmax", lambda: nc.log_softmax(a, axis=1), [a], (4, 3), SMOOTH_TOL),
        ("sum", lambda: nc.sum(x3, axis=1), [x3], (4, 3), SMOOTH_TOL),
        ("mean", lambda: nc.mean(x3, axis=1), [x3], (4, 3), SMOOTH_TOL),
        ("max", lambda: nc.max(x3, axis=1), [x3], (4, 3), KINK_TOL),
        ("concat", lambda: nc.concat([a, b], axis=1), [a, b], (4, 6), SMOOTH_TOL),
        ("l2norm", lambda: nc.l2norm(a, axis=1), [a], (4,), SMOOTH_TOL),
        ("layer_norm", lambda: nc.layer_norm(a), [a], (4, 3), SMOOTH_TOL),
        ("reshape", lambda: nc.reshape(a, (3, 4)), [a], (3, 4), SMOOTH_TOL),
        ("expand", lambda: nc.expand(a, 1, 5), [a], (4, 5, 3), SMOOTH_TOL),
        ("gather_rows", lambda: nc.gather_rows(v, idx), [v], (7, 3), SMOOTH_TOL),
        ("take", lambda: nc.take(v, idx), [v], (7, 3), SMOOTH_TOL),
    ]
    out = [(name, _weighted(fn, rng, shape), params, tol) for name, fn, params, shape, tol in cases]
    out.append(("cross_entropy", lambda: nc.cross_entropy(logits, labels), [logits], SMOOTH_TOL))
    return out


def jitter_biases(params, rng, scale: float = 0.1) -> None:
    """Move zero-initialised biases off the relu kink at exactly 0."""
    for p in params:
        if p.ndim == 1 and not np.any(p.data):
            p.data[:] = scale * rng.standard_normal(p.shape)


def _composite_cases(rng) -> list[tuple[str, Callable, list, float, object]]:
    # mixed EA edge: beta gradient through the softmax relaxation
    ctx = eassoc.NeighborContext(rng.standard_normal((6, 5, 3)), rng.standard_normal((6, 5, 3)))
    mix = eassoc.EAMixture(nc.parameter(rng.standard_normal(5)))
    edge_fn = _weighted(lambda: eassoc.mixed_edge(mix, ctx), rng, (6, 5, 3))

    # one searchable convolution, relaxed
    cfg = seaconv.ConvConfig(levels=2, nodes=4, width=3, in_features=4, out_features=4)
    params = seaconv.ConvParams.create(cfg, rng)
    pts = rng.standard_normal((20, 3))
    nb = pcdata.knn(pts, 4)
    feats = nc.parameter(rng.standard_normal((20, 4)))
    conv_fn = _weighted(lambda: seaconv.forward(cfg, params, feats, pts, nb), rng, (20, 4))
    conv_params = [params.bank.beta, feats] + params.weight_params()
    jitter_biases(conv_params, rng)

    # mixed cell op: theta gradient
    ncfg = NetConfig(cells=2, channels=4, k=3, num_classes=3, head_hidden=5,
                     conv=seaconv.ConvConfig(levels=1, nodes=3, width=2))
    net = Network(ncfg, rng)
    jitter_biases(net.weight_params(), rng)
    cloud = rng.standard_normal((2, 8, 3))
    cnb = pcdata.knn_batch(cloud, ncfg.k)
    octx = Context(cloud.reshape(-1, 3), cnb, net.conv_cfgs, net.ea_weights("relaxed"))
    x = nc.Tensor(rng.standard_normal((16, 4)))
    theta = nc.parameter(rng.standard_normal(5))
    op_fn = _weighted(lambda: mixed_op(nc.softmax(theta), net.cells[0].edges[0], x, octx), rng, (16, 4))

    # two-cell network cross-entropy: weights and architecture
    labels = np.array([0, 2])
    net_params = net.weight_params() + net.arch_params()
    net_fn = lambda: nc.cross_entropy(net.forward(cloud, ea_weights=net.ea_weights("relaxed")), labels)  # noqa: E731
    return [
        ("mixed_edge[beta]", edge_fn, [mix.beta], KINK_TOL, None),
        ("seaconv[beta,w]", conv_fn, conv_params, KINK_TOL, sample_coords(conv_params, 40, rng)),
        ("mixed_op[theta]", op_fn, [theta], KINK_TOL, None),
        ("network[omega,rho]", net_fn, net_params, KINK_TOL, sample_coords(net_params, 40, rng)),
    ]


def run_suite(seed: int = 0) -> list[GradCase]:
    rng = np.random.default_rng(seed)
    results = []
    for name, fn, params, tol in _primitive_cases(rng):
        results.append(GradCase(name, check_gradients(fn, params), tol))
    for name, fn, params, tol, coords in _composite_cases(rng):
        results.append(GradCase(name, check_gradients(fn, params, coords=coords), tol))
    return results


def report(results: list[GradCase], elapsed: float | None = None) -> str:
    lines = [f"{r.name:<20} max rel err {r.error:.3e}  tol {r.tol:.0e}  {'ok' if r.ok else 'FAIL'}"
             for r in results]
    if elapsed is not None:
        lines.append(f"{len(results)} checks in {elapsed:.1f}s")
    return "\n".join(lines)


def timed_suite(seed: int = 0) -> tuple[list[GradCase], float]:
    t0 = time.perf_counter()
    res = run_suite(seed)
    return res, time.perf_counter() - t0
