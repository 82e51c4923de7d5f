import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import pointsea.numcore as nc
from pointsea.numcore.gradcheck import check_gradients


def rand(rng, *shape, grad=True):
    return nc.Tensor(rng.standard_normal(shape), requires_grad=grad)


def test_matmul_identity_and_hand_sum():
    x = nc.Tensor([[1.5, -2.0], [0.25, 4.0]])
    assert np.array_equal(nc.matmul(nc.Tensor(np.eye(2)), x).data, x.data)
    out = nc.matmul(nc.Tensor([[1.0, 2.0], [3.0, 4.0]]), nc.Tensor([[1.0], [1.0]]))
    assert out.data.tolist() == [[3.0], [7.0]]


def test_matmul_shape_error():
    with pytest.raises(nc.ShapeError):
        nc.matmul(nc.Tensor(np.ones((2, 3))), nc.Tensor(np.ones((2, 3))))


def test_matmul_gradient(rng):
    a, b = rand(rng, 3, 4), rand(rng, 4, 2)
    w = nc.Tensor(rng.standard_normal((3, 2)))
    err = check_gradients(lambda: nc.sum(nc.mul(nc.matmul(a, b), w)), [a, b])
    assert err <= 1e-6


def test_relu_and_sub():
    assert nc.relu(nc.Tensor([-1.0, 2.0])).data.tolist() == [0.0, 2.0]
    x = nc.Tensor(np.arange(4.0), requires_grad=True)
    with nc.Tape() as tape:
        loss = nc.sum(nc.sub(x, x))
        tape.backward(loss)
    assert loss.item() == 0.0
    assert np.array_equal(x.grad, np.zeros(4))


def test_mul_gradient_and_scalar_broadcast(rng):
    a, b = rand(rng, 5, 3), rand(rng, 5, 3)
    s = nc.Tensor(np.array(0.7), requires_grad=True)
    assert check_gradients(lambda: nc.sum(nc.mul(nc.mul(a, b), s)), [a, b, s]) <= 1e-6


def test_broadcast_rejected():
    with pytest.raises(nc.ShapeError):
        nc.add(nc.Tensor(np.ones((2, 3))), nc.Tensor(np.ones(3)))


def test_softmax_closed_forms():
    assert np.allclose(nc.softmax(nc.Tensor(np.zeros(5))).data, 0.2, atol=1e-15)
    out = nc.softmax(nc.Tensor([np.log(2.0), 0, 0, 0, 0])).data
    assert np.allclose(out, [1 / 3, 1 / 6, 1 / 6, 1 / 6, 1 / 6], atol=1e-15)


def test_softmax_nan_rejected():
    with pytest.raises(nc.NumericError):
        nc.softmax(nc.Tensor([0.0, np.nan]))


def test_softmax_gradient(rng):
    v = rand(rng, 6)
    w = nc.Tensor(rng.standard_normal(6))
    assert check_gradients(lambda: nc.sum(nc.mul(nc.softmax(v), w)), [v]) <= 1e-6


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.floats(-30, 30, allow_nan=False), min_size=1, max_size=12),
    st.floats(-50, 50, allow_nan=False),
)
def test_softmax_sums_to_one_and_shift_invariant(logits, shift):
    v = np.array(logits)
    s = nc.softmax(nc.Tensor(v)).data
    assert np.all(s > 0)
    assert abs(s.sum() - 1.0) <= 1e-12
    assert np.max(np.abs(nc.softmax(nc.Tensor(v + shift)).data - s)) <= 1e-12


def test_max_routes_to_first_argmax():
    x = nc.Tensor([3.0, 1.0, 2.0], requires_grad=True)
    with nc.Tape() as tape:
        m = nc.max(x, axis=0)
        tape.backward(m)
    assert m.item() == 3.0
    assert x.grad.tolist() == [1.0, 0.0, 0.0]
    y = nc.Tensor([2.0, 2.0, 1.0], requires_grad=True)
    with nc.Tape() as tape:
        tape.backward(nc.max(y, axis=0))
    assert y.grad.tolist() == [1.0, 0.0, 0.0]


def test_mean_and_reduce_gradients(rng):
    assert nc.mean(nc.Tensor([2.0, 4.0]), axis=0).item() == 3.0
    x = rand(rng, 4, 5, 3)
    w = nc.Tensor(rng.standard_normal((4, 3)))
    for reducer in (nc.max, nc.sum, nc.mean):
        err = check_gradients(lambda: nc.sum(nc.mul(reducer(x, axis=1), w)), [x])
        assert err <= 1e-6, reducer.__name__


def test_invalid_axis():
    with pytest.raises(nc.ShapeError):
        nc.sum(nc.Tensor(np.ones((2, 2))), axis=2)


def test_concat_cases(rng):
    a = rand(rng, 1, 2)
    assert nc.concat([a], axis=1) is a
    b = rand(rng, 1, 3)
    assert nc.concat([a, b], axis=1).shape == (1, 5)
    w = nc.Tensor(rng.standard_normal((1, 5)))
    assert check_gradients(lambda: nc.sum(nc.mul(nc.concat([a, b], axis=1), w)), [a, b]) <= 1e-6
    with pytest.raises(nc.ShapeError):
        nc.concat([rand(rng, 2, 2), rand(rng, 3, 3)], axis=1)


def test_l2norm():
    assert nc.l2norm(nc.Tensor([3.0, 4.0])).item() == 5.0
    z = nc.Tensor(np.zeros(3), requires_grad=True)
    with nc.Tape() as tape:
        n = nc.l2norm(z)
        tape.backward(n)
    assert n.item() == 0.0
    assert np.array_equal(z.grad, np.zeros(3))


def test_l2norm_gradient(rng):
    v = rand(rng, 7)
    assert check_gradients(lambda: nc.l2norm(v), [v]) <= 1e-6
    m = rand(rng, 4, 3)
    w = nc.Tensor(rng.standard_normal(4))
    assert check_gradients(lambda: nc.sum(nc.mul(nc.l2norm(m, axis=1), w)), [m]) <= 1e-6


def test_backward_basics():
    x = nc.Tensor(np.ones((2, 3)), requires_grad=True)
    with nc.Tape() as tape:
        tape.backward(nc.sum(x))
    assert np.array_equal(x.grad, np.ones((2, 3)))
    y = nc.Tensor([3.0], requires_grad=True)
    with nc.Tape() as tape:
        tape.backward(nc.sum(nc.mul(y, y)))
    assert y.grad.tolist() == [6.0]


def test_backward_requires_scalar():
    x = nc.Tensor(np.ones(3), requires_grad=True)
    with nc.Tape() as tape:
        y = nc.mul(x, 2.0)
        with pytest.raises(ValueError):
            tape.backward(y)


def test_backward_accumulates_until_zero_grad():
    x = nc.Tensor([1.0, -2.0], requires_grad=True)
    with nc.Tape() as tape:
        loss = nc.sum(nc.mul(x, x))
        tape.backward(loss)
        tape.backward(loss)
    assert np.array_equal(x.grad, 2 * 2 * x.data)
    nc.zero_grad([x])
    assert x.grad is None


def test_detached_tensor_gets_no_gradient(rng):
    w = rand(rng, 3)
    const = nc.Tensor(rng.standard_normal(3))
    with nc.Tape() as tape:
        tape.backward(nc.sum(nc.mul(w, const)))
    assert const.grad is None
    assert w.grad is not None


def test_no_tape_records_nothing(rng):
    w = rand(rng, 3)
    out = nc.mul(w, w)
    assert out.tape_id is None and not out.requires_grad


def test_composite_mlp_gradient(rng):
    x = nc.Tensor(rng.standard_normal((6, 4)))
    w1, b1 = rand(rng, 4, 5), rand(rng, 5)
    w2, b2 = rand(rng, 5, 3), rand(rng, 3)
    labels = np.array([0, 1, 2, 1, 0, 2])

    def loss():
        h = nc.affine(x, w1, b1, activation="relu")
        return nc.cross_entropy(nc.affine(h, w2, b2), labels)

    assert check_gradients(loss, [w1, b1, w2, b2]) <= 1e-4


def test_gather_expand_reshape_take_gradients(rng):
    t = rand(rng, 5, 3)
    idx = np.array([[0, 4], [4, 4], [2, 1]])
    w = nc.Tensor(rng.standard_normal((3, 2, 3)))
    assert check_gradients(lambda: nc.sum(nc.mul(nc.gather_rows(t, idx), w)), [t]) <= 1e-6
    w2 = nc.Tensor(rng.standard_normal((5, 4, 3)))
    assert check_gradients(lambda: nc.sum(nc.mul(nc.expand(t, 1, 4), w2)), [t]) <= 1e-6
    w3 = nc.Tensor(rng.standard_normal((15,)))
    assert check_gradients(lambda: nc.sum(nc.mul(nc.reshape(t, (15,)), w3)), [t]) <= 1e-6
    assert check_gradients(lambda: nc.mul(t[2, 1], t[0, 0]), [t]) <= 1e-6


def test_replay_is_bitwise_identical():
    def run():
        rng = np.random.default_rng(11)
        w = nc.Tensor(rng.standard_normal((4, 3)), requires_grad=True)
        x = nc.Tensor(rng.standard_normal((8, 4)))
        with nc.Tape() as tape:
            out = nc.affine(x, w, activation="relu")
            loss = nc.cross_entropy(out, np.arange(8) % 3)
            tape.backward(loss)
        return out.data.tobytes(), w.grad.tobytes()

    assert run() == run()


def test_dump_roundtrip(rng):
    t = nc.Tensor(rng.standard_normal((2, 3, 2)))
    text = nc.format_tensor(t)
    assert text.splitlines()[0] == "# shape 2 3 2"
    assert np.array_equal(nc.parse_tensor(text), t.data)


def test_layer_norm(rng):
    x = rand(rng, 5, 6)
    y = nc.layer_norm(x).data
    assert np.allclose(y.mean(axis=1), 0, atol=1e-12)
    assert np.allclose(y.var(axis=1), 1, atol=1e-4)
    probe = nc.Tensor(rng.standard_normal((5, 6)))
    assert check_gradients(lambda: nc.sum(nc.mul(nc.layer_norm(x), probe)), [x]) <= 1e-6


def test_middle_axis_reductions(rng):
    x = rand(rng, 4, 5, 3)
    assert np.allclose(nc.max(x, axis=1).data, x.data.max(axis=1), rtol=0, atol=0)
    assert np.allclose(nc.sum(x, axis=1).data, x.data.sum(axis=1), atol=1e-14)
    probe = nc.Tensor(rng.standard_normal((4, 3)))
    for op in (nc.max, nc.sum, nc.mean):
        assert check_gradients(lambda: nc.sum(nc.mul(op(x, axis=1), probe)), [x]) <= 1e-6
    e = rand(rng, 4, 3)
    pr = nc.Tensor(rng.standard_normal((4, 6, 3)))
    assert check_gradients(lambda: nc.sum(nc.mul(nc.expand(e, 1, 6), pr)), [e]) <= 1e-6
