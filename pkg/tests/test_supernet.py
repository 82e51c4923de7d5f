import numpy as np
import pytest

import pointsea.numcore as nc
from pointsea import pcdata
from pointsea.numcore.gradcheck import check_gradients, sample_coords
from pointsea.runner.gradsuite import jitter_biases
from pointsea.seaconv import ConvConfig
from pointsea.supernet import (
    EDGES, NONZERO, OPS, CellGenotype, Context, EdgeOps, NetConfig, Network, apply_op,
    discretize_cell, mixed_op, random_cell_genotype,
)


def tiny_cfg(**kw):
    base = dict(cells=2, channels=4, k=3, num_classes=3, head_hidden=5,
                conv=ConvConfig(levels=1, nodes=3, width=2))
    base.update(kw)
    return NetConfig(**base)


def tiny_batch(rng, b=2, n=8):
    return rng.standard_normal((b, n, 3))


def edge_setup(rng, cfg=None):
    cfg = cfg or tiny_cfg()
    net = Network(cfg, rng)
    pts = tiny_batch(rng, 1)
    nb = pcdata.knn_batch(pts, cfg.k)
    ctx = Context(pts.reshape(-1, 3), nb, net.conv_cfgs, net.ea_weights("relaxed"))
    x = nc.Tensor(rng.standard_normal((8, cfg.channels)))
    return net, net.cells[0].edges[0], x, ctx


def test_edge_layout():
    assert len(EDGES) == 9
    assert [t for _, t in EDGES].count(4) == 4
    assert OPS[-1] == "zero" and len(OPS) == 5


def test_skip_dominant_is_identity(rng):
    _, edge, x, ctx = edge_setup(rng)
    w = nc.softmax(nc.Tensor([0, 0, 0, 60.0, 0]))
    assert np.max(np.abs(mixed_op(w, edge, x, ctx).data - x.data)) <= 1e-9


def test_uniform_theta_is_mean_of_ops(rng):
    _, edge, x, ctx = edge_setup(rng)
    outs = [apply_op(o, edge, x, ctx) for o in OPS]
    expect = sum(o.data for o in outs if o is not None) / 5
    got = mixed_op(nc.softmax(nc.Tensor(np.zeros(5))), edge, x, ctx).data
    assert np.max(np.abs(got - expect)) <= 1e-12


def test_mixed_op_linear_in_weights(rng):
    _, edge, x, ctx = edge_setup(rng)
    w = rng.random(5)
    w /= w.sum()
    outs = [apply_op(o, edge, x, ctx) for o in OPS]
    expect = sum(wi * o.data for wi, o in zip(w, outs) if o is not None)
    assert np.max(np.abs(mixed_op(nc.Tensor(w), edge, x, ctx).data - expect)) <= 1e-12
    assert abs(nc.softmax(nc.Tensor(rng.standard_normal(5))).data.sum() - 1) <= 1e-12


def test_theta_gradient(rng):
    _, edge, x, ctx = edge_setup(rng)
    theta = nc.parameter(rng.standard_normal(5))
    probe = nc.Tensor(rng.standard_normal(x.shape))
    err = check_gradients(lambda: nc.sum(nc.mul(mixed_op(nc.softmax(theta), edge, x, ctx), probe)), [theta])
    assert err <= 1e-4


def forced(op):
    m = np.zeros((len(EDGES), len(OPS)))
    m[:, OPS.index(op)] = 1.0
    return m


def test_all_zero_edges_depend_only_on_input2(rng):
    cfg = tiny_cfg()
    net = Network(cfg, rng)
    cell = net.cells[0]
    ctx = Context(np.zeros((8, 3)), np.zeros((8, 3), dtype=int), net.conv_cfgs, net.ea_weights("relaxed"))
    s1 = nc.Tensor(rng.standard_normal((8, 4)))
    a = cell.forward(nc.Tensor(rng.standard_normal((8, 4))), s1, forced("zero"), ctx)
    b = cell.forward(nc.Tensor(rng.standard_normal((8, 4))), s1, forced("zero"), ctx)
    assert np.array_equal(a.data, b.data)
    cat = np.concatenate([np.zeros((8, 12)), s1.data], axis=1) @ cell.proj[0].data + cell.proj[1].data
    assert np.allclose(a.data, nc.layer_norm(nc.Tensor(cat)).data, atol=1e-12)


def test_all_skip_hand_sums(rng):
    cfg = tiny_cfg(channels=2)
    net = Network(cfg, rng)
    cell = net.cells[0]
    s0 = nc.Tensor([[1.0, 2.0]])
    s1 = nc.Tensor([[10.0, 20.0]])
    ctx = Context(np.zeros((1, 3)), np.zeros((1, 1), dtype=int), net.conv_cfgs, {})
    n2 = s0.data + s1.data
    n3 = s0.data + s1.data + n2
    n4 = s0.data + s1.data + n2 + n3
    cat = np.concatenate([n2, n3, n4, s1.data], axis=1) @ cell.proj[0].data + cell.proj[1].data
    got = cell.forward(s0, s1, forced("skip"), ctx).data
    assert np.allclose(got, nc.layer_norm(nc.Tensor(cat)).data, atol=1e-12)
    assert n4.tolist() == [[44.0, 88.0]]


def test_forward_is_deterministic_and_shaped(rng):
    cfg = tiny_cfg()
    net = Network(cfg, rng)
    pts = tiny_batch(rng, 3)
    a = net.forward(pts).data
    assert a.shape == (3, cfg.num_classes)
    assert a.tobytes() == net.forward(pts).data.tobytes()


def test_identical_clouds_identical_logits(rng):
    cfg = tiny_cfg()
    net = Network(cfg, rng)
    one = tiny_batch(rng, 1)
    logits = net.forward(np.repeat(one, 3, axis=0)).data
    assert np.max(np.abs(logits - logits[0])) <= 1e-12


def test_network_gradient(rng):
    cfg = tiny_cfg()
    net = Network(cfg, rng)
    jitter_biases(net.weight_params(), rng)
    pts = tiny_batch(rng, 2)
    labels = np.array([0, 2])
    params = net.weight_params() + net.arch_params()
    coords = sample_coords(params, 10, rng)
    err = check_gradients(lambda: nc.cross_entropy(net.forward(pts), labels), params, coords=coords)
    assert err <= 1e-4


def test_discretize_prefers_strong_skips():
    theta = np.zeros((len(EDGES), len(OPS)))
    keep = {(0, 2), (1, 2), (1, 3), (2, 3), (0, 4), (3, 4)}
    for e, edge in enumerate(EDGES):
        if edge in keep:
            theta[e, OPS.index("skip")] = 8.0
    g = discretize_cell(theta)
    assert g.nodes == [[(0, "skip"), (1, "skip")], [(1, "skip"), (2, "skip")], [(0, "skip"), (3, "skip")]]


def test_discretize_skips_zero():
    theta = np.zeros((len(EDGES), len(OPS)))
    theta[:, OPS.index("zero")] = 10.0
    theta[:, OPS.index("mlp")] = 1.0
    g = discretize_cell(theta)
    assert all(op == "mlp" for picks in g.nodes for _, op in picks)
    # ties in ranking go to the lower edge index
    assert [s for s, _ in g.nodes[2]] == [0, 1]


def test_genotype_validation():
    with pytest.raises(ValueError):
        CellGenotype([[(0, "skip"), (0, "mlp")], [(0, "skip"), (1, "skip")], [(0, "skip"), (1, "skip")]]).validate()
    with pytest.raises(ValueError):
        CellGenotype([[(0, "zero"), (1, "mlp")], [(0, "skip"), (1, "skip")], [(0, "skip"), (1, "skip")]]).validate()
    with pytest.raises(ValueError):
        CellGenotype([[(0, "conv_a"), (1, "mlp")], [(0, "skip"), (1, "skip")], [(0, "skip"), (1, "skip")]]).validate()


def test_random_genotypes_are_valid(rng):
    cfg = tiny_cfg()
    for s in range(20):
        g = random_cell_genotype(np.random.default_rng(s), cfg.conv_config())
        g.validate()
        assert len(g.edge_mask().nonzero()[0]) == 6
        assert all(op in NONZERO for picks in g.nodes for _, op in picks)


def test_discrete_network_runs(rng):
    cfg = tiny_cfg()
    net = Network(cfg, rng)
    net.theta.data[:] = rng.standard_normal(net.theta.shape)
    g = net.discretize()
    g.validate()
    disc = Network(cfg, rng, g)
    assert disc.forward(tiny_batch(rng, 2)).shape == (2, 3)
    assert disc.arch_params() == []


def test_cells_do_not_alias(rng):
    cfg = tiny_cfg(cells=3)
    net = Network(cfg, rng)
    ids = [{id(p) for p in c.params()} for c in net.cells]
    assert not (ids[0] & ids[1]) and not (ids[1] & ids[2])
    per_cell = [sum(len(e.convs) for e in c.edges.values()) for c in net.cells]
    assert per_cell == [2 * len(EDGES)] * 3


def test_masked_supernet_matches_discrete_weights(rng):
    """Masking the supernet with a genotype runs only the kept ops."""
    cfg = tiny_cfg()
    net = Network(cfg, rng)
    g = random_cell_genotype(rng, cfg.conv_config())
    ow, ew = net.masked_weights(g)
    pts = tiny_batch(rng, 2)
    out = net.forward(pts, op_weights=ow, ea_weights=ew)
    assert np.all(np.isfinite(out.data))
