import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import pointsea.numcore as nc
from pointsea.eassoc import (
    EAKind, EAMixture, MixtureBank, NeighborContext, eval_ea, mixed_edge, mixed_level, mixed_node,
    sample_epsilon_greedy, parse_subset,
)
from pointsea.numcore.gradcheck import numeric_gradients, relative_error, tape_gradients


def direct_candidates(a, b):
    """Plain numpy e1..e5 on (C, k, d) arrays, e5 against the k-mean of b."""
    r = np.sqrt(((a - b) ** 2).sum(axis=-1, keepdims=True))
    return [a, b, a - b, np.broadcast_to(r, a.shape), a - b.mean(axis=1, keepdims=True)]


def random_ctx(rng, c=4, k=6, d=3, grad=False):
    a = rng.standard_normal((c, k, d))
    b = rng.standard_normal((c, k, d))
    return NeighborContext(nc.Tensor(a, requires_grad=grad), nc.Tensor(b, requires_grad=grad))


def test_e3_pair():
    ctx = NeighborContext.pair([1.0, 2, 3], [0.5, 0, 1])
    assert eval_ea(EAKind.E3, ctx).data.ravel().tolist() == [0.5, 2, 2]


def test_e4_broadcast():
    ctx = NeighborContext.pair([3.0, 4], [0.0, 0])
    assert eval_ea(EAKind.E4, ctx).data.ravel().tolist() == [5.0, 5.0]


def test_e5_self_neighbourhood_vanishes():
    ni = np.array([0.3, -1.2, 2.0])
    ctx = NeighborContext(nc.Tensor(ni.reshape(1, 1, 3)), nc.Tensor(ni.reshape(1, 1, 3)))
    assert np.array_equal(eval_ea(EAKind.E5, ctx).data, np.zeros((1, 1, 3)))


def test_e5_empty_neighbourhood():
    ctx = NeighborContext(nc.Tensor(np.zeros((2, 0, 3))), nc.Tensor(np.zeros((2, 0, 3))))
    with pytest.raises(ValueError):
        eval_ea(EAKind.E5, ctx)


def test_e1_ignores_neighbour(rng):
    ctx = random_ctx(rng)
    moved = NeighborContext(ctx.center, nc.Tensor(ctx.neighbor.data + 7.0))
    assert np.array_equal(eval_ea(EAKind.E1, ctx).data, eval_ea(EAKind.E1, moved).data)


def test_shape_mismatch():
    with pytest.raises(nc.ShapeError):
        NeighborContext(nc.Tensor(np.zeros((2, 3, 4))), nc.Tensor(np.zeros((2, 3, 5))))


def test_kind_names():
    assert [k.label for k in EAKind] == ["e1", "e2", "e3", "e4", "e5"]
    assert EAKind.parse("E4") is EAKind.E4
    assert parse_subset("e3,e1") == (EAKind.E1, EAKind.E3)
    with pytest.raises(ValueError):
        EAKind.parse("e6")


def test_equal_beta_gives_mean(rng):
    ctx = random_ctx(rng)
    out = mixed_edge(EAMixture(nc.Tensor(np.zeros(5))), ctx)
    expect = sum(direct_candidates(ctx.center.data, ctx.neighbor.data)) / 5
    assert np.max(np.abs(out.data - expect)) <= 1e-12


def test_sampled_returns_candidate(rng):
    ctx = random_ctx(rng)
    mix = EAMixture(nc.Tensor(rng.standard_normal(5)), sampled=2, mode="sampled")
    assert np.array_equal(mixed_edge(mix, ctx).data, eval_ea(EAKind.E3, ctx).data)
    assert mix.sampled_onehot.tolist() == [0, 0, 1, 0, 0]
    with pytest.raises(ValueError):
        mixed_edge(EAMixture(nc.Tensor(np.zeros(5)), mode="sampled"), ctx)


def test_relaxed_matches_direct_sum(rng):
    ctx = random_ctx(rng, c=7, k=5, d=4)
    beta = rng.standard_normal(5)
    w = np.exp(beta - beta.max())
    w /= w.sum()
    expect = sum(wi * ci for wi, ci in zip(w, direct_candidates(ctx.center.data, ctx.neighbor.data)))
    out = mixed_edge(EAMixture(nc.Tensor(beta)), ctx)
    assert np.max(np.abs(out.data - expect)) <= 1e-12
    assert abs(nc.softmax(nc.Tensor(beta)).data.sum() - 1) <= 1e-12


def test_subset_mixture_matches_direct_sum(rng):
    ctx = random_ctx(rng)
    kinds = (EAKind.E2, EAKind.E4)
    beta = np.array([0.3, -0.4])
    w = np.exp(beta) / np.exp(beta).sum()
    cand = direct_candidates(ctx.center.data, ctx.neighbor.data)
    out = mixed_edge(EAMixture(nc.Tensor(beta), kinds), ctx)
    assert np.max(np.abs(out.data - (w[0] * cand[1] + w[1] * cand[3]))) <= 1e-12


def test_linear_in_weights(rng):
    """Doubling one candidate's share and renormalising gives the analytic mix."""
    ctx = random_ctx(rng)
    beta = rng.standard_normal(5)
    cand = direct_candidates(ctx.center.data, ctx.neighbor.data)
    w = np.exp(beta) / np.exp(beta).sum()
    doubled = beta.copy()
    doubled[3] += np.log(2.0)
    w2 = w.copy()
    w2[3] *= 2
    w2 /= w2.sum()
    out = mixed_edge(EAMixture(nc.Tensor(doubled)), ctx).data
    assert np.max(np.abs(out - sum(wi * ci for wi, ci in zip(w2, cand)))) <= 1e-12


def test_translation_invariance(rng):
    c, k = 5, 4
    pts = rng.standard_normal((c, 3))
    nbr = rng.standard_normal((c, k, 3))
    shift = np.array([0.7, -2.0, 3.5])

    def ctx(delta):
        centre = np.repeat((pts + delta)[:, None, :], k, axis=1)
        return NeighborContext(nc.Tensor(centre), nc.Tensor(nbr + delta))

    base, moved = ctx(0.0), ctx(shift)
    for kind in (EAKind.E3, EAKind.E4, EAKind.E5):
        assert np.max(np.abs(eval_ea(kind, base).data - eval_ea(kind, moved).data)) <= 1e-12
    for kind in (EAKind.E1, EAKind.E2):
        diff = eval_ea(kind, moved).data - eval_ea(kind, base).data
        assert np.max(np.abs(diff - shift)) <= 1e-12


def test_beta_gradient(rng):
    ctx = random_ctx(rng)
    beta = nc.parameter(rng.standard_normal(5))
    probe = rng.standard_normal(ctx.center.shape)

    def loss():
        return nc.sum(nc.mul(mixed_edge(EAMixture(beta), ctx), nc.Tensor(probe)))

    (g,) = tape_gradients(loss, [beta])
    (num,) = numeric_gradients(loss, [beta])
    assert relative_error(g, num) <= 1e-5


def test_input_gradients_through_fused_node(rng):
    a = nc.parameter(rng.standard_normal((3, 4, 2)))
    b = nc.parameter(rng.standard_normal((3, 4, 2)))
    c = nc.parameter(rng.standard_normal((3, 4, 2)))
    w = nc.parameter(rng.standard_normal((3, 5)))
    probe = nc.Tensor(rng.standard_normal((3, 4, 2)))

    def loss():
        out = mixed_node([a, b, c], [(0, 1), (0, 2), (1, 2)], w)
        return nc.sum(nc.mul(out, probe))

    got = tape_gradients(loss, [a, b, c, w])
    num = numeric_gradients(loss, [a, b, c, w])
    for g, n in zip(got, num):
        assert relative_error(g, n) <= 1e-6


def test_fused_node_matches_primitives(rng):
    nodes = [nc.Tensor(rng.standard_normal((6, 5, 3))) for _ in range(3)]
    pairs = [(0, 1), (0, 2), (1, 2)]
    w = rng.standard_normal((3, 5))
    expect = np.zeros((6, 5, 3))
    for row, (i, j) in enumerate(pairs):
        ctx = NeighborContext(nodes[i], nodes[j])
        for kind in EAKind:
            expect += w[row, int(kind)] * eval_ea(kind, ctx).data
    assert np.max(np.abs(mixed_node(nodes, pairs, w).data - expect)) <= 1e-12


def test_epsilon_zero_is_argmax(rng):
    mix = EAMixture(nc.Tensor(np.array([0.1, 0.9, 0.2, 0.9, -1.0])))
    for _ in range(50):
        assert sample_epsilon_greedy(mix, 0.0, rng).sampled == 1


@pytest.mark.parametrize("eps,target", [(1.0, None), (0.5, 0.6)])
def test_epsilon_frequencies(eps, target):
    rng = np.random.default_rng(42)
    mix = EAMixture(nc.Tensor(np.array([0.0, 0.0, 3.0, 0.0, 0.0])))
    counts = np.zeros(5)
    for _ in range(10_000):
        counts[sample_epsilon_greedy(mix, eps, rng).sampled] += 1
    freq = counts / counts.sum()
    if target is None:
        assert np.all(np.abs(freq - 0.2) <= 0.02)
    else:
        assert abs(freq[2] - target) <= 0.02


def test_epsilon_out_of_range(rng):
    with pytest.raises(ValueError):
        sample_epsilon_greedy(EAMixture(nc.Tensor(np.zeros(5))), 1.5, rng)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0, 1))
def test_sampling_leaves_beta_alone(seed, eps):
    rng = np.random.default_rng(seed)
    beta = nc.Tensor(rng.standard_normal(5))
    before = beta.data.copy()
    out = sample_epsilon_greedy(EAMixture(beta), eps, rng)
    assert np.array_equal(beta.data, before) and out.beta is beta
    assert out.mode == "sampled" and out.sampled_onehot.sum() == 1


def test_sampling_is_reproducible():
    bank = MixtureBank.create(30, rng=np.random.default_rng(0))
    bank.sample(0.5, np.random.default_rng(9))
    first = bank.sampled.copy()
    bank.sample(0.5, np.random.default_rng(9))
    assert np.array_equal(first, bank.sampled)


def test_bank_subset_dof():
    assert MixtureBank.create(10, (EAKind.E1,)).degrees_of_freedom == 0
    assert MixtureBank.create(10).degrees_of_freedom == 40
    bank = MixtureBank.create(4, (EAKind.E2, EAKind.E5))
    bank.set_greedy()
    assert bank.onehot_weights().tolist() == [[0, 1, 0, 0, 0]] * 4


@pytest.mark.parametrize("onehot", [False, True])
def test_fused_level_matches_node_chain(rng, onehot):
    structure = [(2, [(0, 1)]), (3, [(0, 1), (0, 2), (1, 2)]), (4, [(0, 3), (2, 3)])]
    n0 = nc.parameter(rng.standard_normal((5, 4, 3)))
    n1 = nc.parameter(rng.standard_normal((5, 4, 3)))
    if onehot:
        w = np.eye(5)[rng.integers(0, 5, size=6)]
    else:
        w = nc.parameter(rng.standard_normal((6, 5)))
    probe = nc.Tensor(rng.standard_normal((5, 4, 9)))

    def chain():
        nodes, row = [n0, n1], 0
        for _, pairs in structure:
            ww = w[row:row + len(pairs)] if onehot else nc.take(w, slice(row, row + len(pairs)))
            nodes.append(mixed_node(nodes, pairs, ww))
            row += len(pairs)
        return nc.concat(nodes[2:], axis=2)

    fused = mixed_level(n0, n1, structure, w)
    assert np.max(np.abs(fused.data - chain().data)) <= 1e-12
    params = [n0, n1] + ([] if onehot else [w])
    got = tape_gradients(lambda: nc.sum(nc.mul(mixed_level(n0, n1, structure, w), probe)), params)
    ref = tape_gradients(lambda: nc.sum(nc.mul(chain(), probe)), params)
    for g, r in zip(got, ref):
        assert np.max(np.abs(g - r)) <= 1e-11


def test_fused_level_rejects_bad_pairs(rng):
    n0 = nc.Tensor(rng.standard_normal((2, 3, 2)))
    with pytest.raises(ValueError):
        mixed_level(n0, n0, [(2, [(1, 2)])], np.ones((1, 5)))
