import numpy as np
import pytest

import pointsea.numcore as nc
from pointsea import pcdata
from pointsea.eassoc import EAKind
from pointsea.seaconv import ConvConfig, preset
from pointsea.searchopt import (
    SGD, Adam, CheckpointError, EvalConfig, MetricLog, SearchConfig, SearchDiverged, SearchState,
    alternating_step, checkpoint, cosine_lr, discretization_gap, evaluate_genotype, load_model,
    run_search, split_halves, accuracy,
)
from pointsea.supernet import OPS, CellGenotype, NetConfig


def tiny_net(**conv):
    c = dict(levels=1, nodes=3, width=2)
    c.update(conv)
    return NetConfig(cells=1, channels=4, k=3, num_classes=2, head_hidden=4, conv=ConvConfig(**c))


@pytest.fixture(scope="module")
def tiny_data():
    cfg = pcdata.DatasetConfig(classes=("sphere", "cube"), num_points=12, samples_per_class=10, seed=3)
    return pcdata.split(pcdata.generate(cfg), cfg)


def tiny_search(**kw):
    base = dict(epochs=2, batch_size=4, seed=0)
    base.update(kw)
    return SearchConfig(**base)


def test_cosine_schedule():
    assert cosine_lr(0, 10, 0.1, 0.0) == 0.1
    assert abs(cosine_lr(10, 10, 0.1, 0.001) - 0.001) <= 1e-15
    assert abs(cosine_lr(5, 10, 0.1, 0.0) - 0.05) <= 1e-15
    with pytest.raises(ValueError):
        cosine_lr(1, 0, 0.1, 0.0)
    with pytest.raises(ValueError):
        cosine_lr(11, 10, 0.1, 0.0)


def test_zero_lr_leaves_params(rng):
    for make in (lambda p: SGD(p, 0.0, 0.9, 0.0), lambda p: Adam(p, 0.0)):
        p = nc.parameter(rng.standard_normal(4))
        before = p.data.copy()
        opt = make([p])
        for _ in range(3):
            p.grad = rng.standard_normal(4)
            opt.step()
        assert p.data.tobytes() == before.tobytes()


def test_optimisers_reduce_quadratic(rng):
    target = rng.standard_normal(6)
    for opt_cls, lr in ((SGD, 0.05), (Adam, 0.05)):
        p = nc.parameter(np.zeros(6))
        opt = opt_cls([p], lr)
        first = None
        for _ in range(50):
            with nc.Tape() as tape:
                loss = nc.sum(nc.mul(nc.sub(p, target), nc.sub(p, target)))
                tape.backward(loss)
            first = loss.item() if first is None else first
            opt.step()
            opt.zero_grad()
        assert loss.item() < 0.1 * first


def test_config_validation():
    with pytest.raises(ValueError):
        SearchConfig(epsilon=1.5)
    with pytest.raises(ValueError):
        SearchConfig(first_order=False)
    assert SearchConfig.from_dict(SearchConfig().to_dict()) == SearchConfig()


def test_split_halves_disjoint_and_stratified(tiny_data):
    w, a = split_halves(tiny_data["train"], 0)
    assert not set(w.ids.tolist()) & set(a.ids.tolist())
    assert len(w) + len(a) == len(tiny_data["train"])
    assert abs(np.bincount(w.labels)[0] - np.bincount(a.labels)[0]) <= 1


def batch(ds, n=4):
    return ds.points[:n], ds.labels[:n]


def test_greedy_weight_step_uses_argmax(tiny_data):
    state = SearchState.create(tiny_search(epsilon=0.0), tiny_net())
    w, a = split_halves(tiny_data["train"], 0)
    wp, wl = batch(w)
    expect = nc.cross_entropy(state.net.forward(wp, ea_weights=state.net.ea_weights("greedy")), wl).item()
    loss, _ = alternating_step(state, wp, wl, *batch(a), lr=0.01)
    assert loss == expect


def test_phases_touch_only_their_parameters(tiny_data):
    state = SearchState.create(tiny_search(), tiny_net())
    arch0 = [p.data.copy() for p in state.net.arch_params()]
    weights0 = [p.data.copy() for p in state.net.weight_params()]
    seen = {}
    inner = state.opt_w.step

    def spy():
        inner()
        seen["arch"] = [p.data.copy() for p in state.net.arch_params()]
        seen["arch_grads"] = [p.grad for p in state.net.arch_params()]

    state.opt_w.step = spy
    weight_steps = {}
    outer = state.opt_a.step

    def spy_a():
        weight_steps["w"] = [p.data.copy() for p in state.net.weight_params()]
        weight_steps["w_grads"] = [p.grad for p in state.net.weight_params()]
        outer()

    state.opt_a.step = spy_a
    w, a = split_halves(tiny_data["train"], 0)
    alternating_step(state, *batch(w), *batch(a), lr=0.01)
    assert all(np.array_equal(x, y) for x, y in zip(arch0, seen["arch"]))
    assert all(g is None for g in seen["arch_grads"])
    assert any(not np.array_equal(x, y) for x, y in zip(weights0, weight_steps["w"]))
    assert all(g is None for g in weight_steps["w_grads"])
    assert all(np.array_equal(x, y.data) for x, y in zip(weight_steps["w"], state.net.weight_params()))
    assert any(not np.array_equal(x, y.data) for x, y in zip(arch0, state.net.arch_params()))


def test_repeated_steps_fit_a_batch(tiny_data):
    # frozen architecture: only the weight phase moves
    state = SearchState.create(tiny_search(epsilon=0.0, arch_lr=0.0), tiny_net())
    w, a = split_halves(tiny_data["train"], 0)
    wp, wl = batch(w, 6)
    losses = [alternating_step(state, wp, wl, *batch(a), lr=0.02)[0] for _ in range(50)]
    assert np.mean(losses[-5:]) < np.mean(losses[:5])


def test_search_is_deterministic(tiny_data):
    r1 = run_search(tiny_search(), tiny_net(), tiny_data)
    r2 = run_search(tiny_search(), tiny_net(), tiny_data)
    assert r1.genotype.to_dict() == r2.genotype.to_dict()
    assert r1.log.to_csv() == r2.log.to_csv()
    assert checkpoint.dumps(r1.state.metadata(), r1.state.arrays()) == \
        checkpoint.dumps(r2.state.metadata(), r2.state.arrays())
    r3 = run_search(tiny_search(seed=1), tiny_net(), tiny_data)
    assert r3.log.to_csv() != r1.log.to_csv()


def test_resume_is_trajectory_exact(tiny_data, tmp_path):
    full = run_search(tiny_search(epochs=3), tiny_net(), tiny_data)
    run_search(tiny_search(epochs=3), tiny_net(), tiny_data, checkpoint_dir=tmp_path, stop_after=1)
    state = SearchState.load(tmp_path / "search.psck")
    assert state.epoch == 1
    resumed = run_search(state.config, state.net_config, tiny_data, state=state)
    assert resumed.log.to_csv() == full.log.to_csv()
    a = checkpoint.dumps(full.state.metadata(), full.state.arrays())
    assert checkpoint.dumps(resumed.state.metadata(), resumed.state.arrays()) == a


def test_metric_log_has_finite_gaps(tiny_data):
    for relaxed in (False, True):
        res = run_search(tiny_search(relaxed=relaxed), tiny_net(), tiny_data)
        rows = res.log.rows
        assert [r["split"] for r in rows] == ["train", "val"] * 2
        assert all(np.isfinite(r["gap"]) and r["gap"] >= 0 for r in rows)
        assert all(r["epsilon"] == (0.0 if relaxed else 0.5) for r in rows)
        back = MetricLog.from_csv(res.log.to_csv())
        assert back.rows == rows


def test_gap_zero_for_fully_discrete_supernet(tiny_data):
    state = SearchState.create(tiny_search(), tiny_net())
    net = state.net
    # saturate every logit so relaxed and discretized models coincide
    geno = CellGenotype([[(0, "mlp"), (1, "mlp")], [(0, "mlp"), (1, "mlp")], [(0, "mlp"), (1, "mlp")]])
    net.theta.data[:] = np.where(geno.edge_mask() > 0, 1e3, -1e3)
    dropped = geno.edge_mask().sum(axis=1) == 0
    net.theta.data[dropped, OPS.index("zero")] = 1e3
    _, _, gap = discretization_gap(net, tiny_data["val"])
    assert gap <= 1e-9


def test_e1_only_search_yields_e1_genotype(tiny_data):
    res = run_search(tiny_search(epochs=1), tiny_net(ea_subset=(EAKind.E1,)), tiny_data)
    for g in res.genotype.convs.values():
        assert set(g.kinds) == {EAKind.E1}


def test_epsilon_zero_greedy_equals_discretized(tiny_data):
    res = run_search(tiny_search(epsilon=0.0), tiny_net(), tiny_data)
    net = res.state.net
    ow = net.op_weights()
    pts = tiny_data["test"].points
    greedy = net.forward(pts, op_weights=ow, ea_weights=net.ea_weights("greedy")).data
    geno = net.discretize()
    disc = net.forward(pts, op_weights=ow, ea_weights={o: g.weights() for o, g in geno.convs.items()}).data
    assert greedy.tobytes() == disc.tobytes()


def test_divergence_dumps_state(tiny_data, tmp_path):
    state = SearchState.create(tiny_search(), tiny_net())
    state.net.head2[0].data[0, 0] = np.nan
    w, a = split_halves(tiny_data["train"], 0)
    with pytest.raises(SearchDiverged, match="dumped"):
        alternating_step(state, *batch(w), *batch(a), lr=0.01, dump_dir=tmp_path)
    assert list(tmp_path.glob("diverged-*.psck"))


def test_checkpoint_format_errors(tmp_path):
    blob = checkpoint.dumps({"a": 1}, {"x": np.arange(3.0), "i": np.arange(4)})
    meta, arrays = checkpoint.loads(blob)
    assert meta["a"] == 1 and arrays["i"].dtype == np.int64
    with pytest.raises(CheckpointError):
        checkpoint.loads(blob[:-1])
    with pytest.raises(CheckpointError):
        checkpoint.loads(blob + b"\0")
    with pytest.raises(CheckpointError):
        checkpoint.loads(b"XXXX" + blob[4:])


def test_preset_genotype_retrains_and_reloads(tiny_data, tmp_path):
    net_cfg = tiny_net()
    _, dg = preset("dgcnn", width=2, in_features=4, out_features=4)
    geno = CellGenotype([[(0, "conv_a"), (1, "mlp")], [(0, "skip"), (2, "conv_a")], [(1, "mlp"), (3, "skip")]],
                        {"conv_a": dg})
    ev = EvalConfig(cells=2, k=3, epochs=2, batch_size=8)
    res = evaluate_genotype(geno, tiny_data, ev, net_cfg)
    assert 0.0 <= res.test_acc <= 1.0 and np.isfinite(res.test_loss)
    res.save(tmp_path / "m.psck")
    net, g2, ev2 = load_model(tmp_path / "m.psck")
    assert g2.to_dict() == geno.to_dict() and ev2 == ev
    assert accuracy(net, tiny_data["test"]) == res.test_acc
    with pytest.raises(CheckpointError):
        SearchState.load(tmp_path / "m.psck")


def test_warmup_freezes_architecture(tiny_data):
    state = SearchState.create(tiny_search(epochs=2, warmup_epochs=1), tiny_net())
    theta0 = state.net.theta.data.copy()
    beta0 = [b.beta.data.copy() for b in state.net.banks.values()]
    w0 = state.net.weight_params()[0].data.copy()
    run_search(state.config, state.net_config, tiny_data, state=state, stop_after=1)
    assert np.array_equal(state.net.theta.data, theta0)
    assert all(np.array_equal(b.beta.data, b0) for b, b0 in zip(state.net.banks.values(), beta0))
    assert not np.array_equal(state.net.weight_params()[0].data, w0)
    run_search(state.config, state.net_config, tiny_data, state=state)
    assert not np.array_equal(state.net.theta.data, theta0)
    with pytest.raises(ValueError):
        SearchConfig(warmup_epochs=-1)
