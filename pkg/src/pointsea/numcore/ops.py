"""Differentiable primitives.

Broadcasting is limited to scalar-with-tensor and equal shapes; anything
else raises :class:`ShapeError`.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

from . import kernels
from .tensor import Tensor, record


class ShapeError(ValueError):
    pass


class NumericError(ArithmeticError):
    pass


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _is_scalar(t: Tensor) -> bool:
    return t.data.size == 1 and t.data.ndim <= 1


def _binary_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape and not (_is_scalar(a) or _is_scalar(b)):
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}")


def _unbroadcast(g: np.ndarray, t: Tensor) -> np.ndarray:
    if g.shape == t.shape:
        return g
    return np.full(t.shape, g.sum())


def _binary_data(a: Tensor, b: Tensor) -> tuple[np.ndarray, np.ndarray]:
    # scalar operands are reduced to 0-d so the result keeps the tensor's shape
    da = a.data.reshape(()) if _is_scalar(a) and a.shape != b.shape else a.data
    db = b.data.reshape(()) if _is_scalar(b) and a.shape != b.shape else b.data
    return da, db


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_shape(a, b, "add")
    da, db = _binary_data(a, b)
    out = da + db
    return record("add", out, (a, b), lambda g: (_unbroadcast(g, a), _unbroadcast(g, b)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_shape(a, b, "sub")
    da, db = _binary_data(a, b)
    out = da - db
    return record("sub", out, (a, b), lambda g: (_unbroadcast(g, a), _unbroadcast(-g, b)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_shape(a, b, "mul")
    da, db = _binary_data(a, b)
    out = da * db

    def back(g):
        ga = _unbroadcast(g * db, a) if a.requires_grad else None
        gb = _unbroadcast(g * da, b) if b.requires_grad else None
        return ga, gb

    return record("mul", out, (a, b), back)


def relu(x) -> Tensor:
    x = as_tensor(x)
    out = np.maximum(x.data, 0.0)
    return record("relu", out, (x,), lambda g: (g * (x.data > 0),))


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    out = a.data @ b.data

    def back(g):
        ga = g @ b.data.T if a.requires_grad else None
        gb = a.data.T @ g if b.requires_grad else None
        return ga, gb

    return record("matmul", out, (a, b), back)


def affine(x, w, b=None, activation: str | None = None) -> Tensor:
    """``x @ w + b`` for 2-D ``x``, optionally followed by relu.

    The bias is the one row-broadcast the kernel supports.
    """
    x, w = as_tensor(x), as_tensor(w)
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ShapeError(f"affine: cannot multiply {x.shape} by {w.shape}")
    out = x.data @ w.data
    inputs: tuple[Tensor, ...] = (x, w)
    if b is not None:
        b = as_tensor(b)
        if b.shape != (w.shape[1],):
            raise ShapeError(f"affine: bias shape {b.shape} does not match {w.shape[1]} outputs")
        out += b.data
        inputs = (x, w, b)
    if activation == "relu":
        np.maximum(out, 0.0, out=out)
    elif activation is not None:
        raise ValueError(f"unknown activation {activation!r}")

    def back(g):
        if activation == "relu":
            g = g * (out > 0)
        gx = g @ w.data.T if x.requires_grad else None
        gw = x.data.T @ g if w.requires_grad else None
        if b is None:
            return gx, gw
        gb = g.sum(axis=0) if b.requires_grad else None
        return gx, gw, gb

    return record("affine", out, inputs, back)


def softmax(v, axis: int = -1) -> Tensor:
    v = as_tensor(v)
    if v.size == 0:
        raise ShapeError("softmax of an empty tensor")
    if not np.all(np.isfinite(v.data)):
        raise NumericError("softmax input contains non-finite values")
    z = v.data - v.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)

    return record("softmax", s, (v,), back)


def log_softmax(v, axis: int = -1) -> Tensor:
    v = as_tensor(v)
    if not np.all(np.isfinite(v.data)):
        raise NumericError("log_softmax input contains non-finite values")
    z = v.data - v.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse
    s = np.exp(out)
    return record("log_softmax", out, (v,), lambda g: (g - s * g.sum(axis=axis, keepdims=True),))


def cross_entropy(logits, labels: np.ndarray) -> Tensor:
    """Mean negative log-likelihood of integer ``labels`` under row-wise softmax."""
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeError(f"cross_entropy: logits {logits.shape} vs labels {labels.shape}")
    if not np.all(np.isfinite(logits.data)):
        raise NumericError("cross_entropy: non-finite logits")
    n = logits.shape[0]
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(n)
    loss = float(np.mean(lse - z[rows, labels]))

    def back(g):
        p = np.exp(z - lse[:, None])
        p[rows, labels] -= 1.0
        return (p * (g.reshape(()) / n),)

    return record("cross_entropy", np.array(loss), (logits,), back)


def _check_axis(t: Tensor, axis):
    if axis is None:
        return None
    if not -t.ndim <= axis < t.ndim:
        raise ShapeError(f"axis {axis} out of range for shape {t.shape}")
    return axis % t.ndim


def sum_mid(x: np.ndarray) -> np.ndarray:
    """Plain-array sum over axis 1 of a 3-D array (compiled, fixed order)."""
    if x.ndim != 3 or not x.flags.c_contiguous:
        return x.sum(axis=1)
    out = np.empty((x.shape[0], x.shape[2]))
    kernels.sum_k(x, out)
    return out


def sum(t, axis: int | None = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    t = as_tensor(t)
    axis = _check_axis(t, axis)
    if t.ndim == 3 and axis == 1 and not keepdims:
        out = sum_mid(t.data)
    else:
        out = np.sum(t.data, axis=axis, keepdims=keepdims)

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, t.shape).copy(),)

    return record("sum", np.asarray(out), (t,), back)


def mean(t, axis: int | None = None, keepdims: bool = False) -> Tensor:
    t = as_tensor(t)
    axis = _check_axis(t, axis)
    count = t.size if axis is None else t.shape[axis]
    if t.ndim == 3 and axis == 1 and not keepdims and count > 0:
        out = sum_mid(t.data) / count
    else:
        out = np.mean(t.data, axis=axis, keepdims=keepdims)

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, t.shape).copy(),)

    return record("mean", np.asarray(out), (t,), back)


def max(t, axis: int | None = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    """Maximum along ``axis``; the gradient goes to the first maximal entry only."""
    t = as_tensor(t)
    axis = _check_axis(t, axis)
    if axis is None:
        flat = t.data.reshape(-1)
        idx = int(np.argmax(flat))
        out = np.asarray(flat[idx])
        if keepdims:
            out = out.reshape((1,) * t.ndim)

        def back_all(g):
            gx = np.zeros(t.size)
            gx[idx] = g.reshape(-1)[0]
            return (gx.reshape(t.shape),)

        return record("max", out, (t,), back_all)

    if t.ndim == 3 and axis == 1 and not keepdims and t.shape[1] > 0 and t.data.flags.c_contiguous:
        return _max_mid(t)
    idx = np.argmax(t.data, axis=axis)
    out = np.take_along_axis(t.data, np.expand_dims(idx, axis), axis=axis)
    if not keepdims:
        out = np.squeeze(out, axis=axis)

    def back(g):
        gx = np.zeros(t.shape)
        gk = g if keepdims else np.expand_dims(g, axis)
        np.put_along_axis(gx, np.expand_dims(idx, axis), gk, axis=axis)
        return (gx,)

    return record("max", np.ascontiguousarray(out), (t,), back)


def _max_mid(t: Tensor) -> Tensor:
    c, _, d = t.shape
    out = np.empty((c, d))
    idx = np.empty((c, d), dtype=np.int64)
    kernels.max_k_forward(t.data, out, idx)

    def back(g):
        gx = np.zeros(t.shape)
        kernels.max_k_backward(np.ascontiguousarray(g), idx, gx)
        return (gx,)

    return record("max", out, (t,), back)


def concat(ts: Sequence[Tensor], axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in ts]
    if not ts:
        raise ShapeError("concat of an empty list")
    if len(ts) == 1:
        return ts[0]
    ref = ts[0]
    axis = _check_axis(ref, axis)
    for t in ts[1:]:
        if t.ndim != ref.ndim or any(
            s != r for i, (s, r) in enumerate(zip(t.shape, ref.shape)) if i != axis
        ):
            raise ShapeError(f"concat: shape {t.shape} incompatible with {ref.shape} on axis {axis}")
    out = np.concatenate([t.data for t in ts], axis=axis)
    bounds = np.cumsum([t.shape[axis] for t in ts])[:-1]

    def back(g):
        return tuple(np.ascontiguousarray(p) for p in np.split(g, bounds, axis=axis))

    return record("concat", out, ts, back)


def l2norm(v, axis: int | None = None, keepdims: bool = False) -> Tensor:
    """Euclidean norm; the gradient at the zero vector is defined as zero."""
    v = as_tensor(v)
    if axis is None:
        flat = v.data.reshape(-1)
        n = float(np.sqrt(np.dot(flat, flat)))

        def back_all(g):
            if n == 0.0:
                return (np.zeros(v.shape),)
            return (v.data * (g.reshape(()) / n),)

        out = np.asarray(n)
        if keepdims:
            out = out.reshape((1,) * v.ndim)
        return record("l2norm", out, (v,), back_all)

    axis = _check_axis(v, axis)
    n = np.sqrt(np.sum(v.data * v.data, axis=axis, keepdims=True))

    def back(g):
        gk = g if keepdims else np.expand_dims(g, axis)
        safe = np.where(n > 0, n, 1.0)
        return (np.where(n > 0, v.data * (gk / safe), 0.0),)

    out = n if keepdims else np.squeeze(n, axis=axis)
    return record("l2norm", np.ascontiguousarray(out), (v,), back)


def layer_norm(x, eps: float = 1e-5) -> Tensor:
    """Standardise each row of a 2-D tensor over its last axis (no learned scale)."""
    x = as_tensor(x)
    if x.ndim != 2:
        raise ShapeError("layer_norm expects a 2-D tensor")
    mu = x.data.mean(axis=1, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=1, keepdims=True) + eps)
    out = xc * inv

    def back(g):
        gm = g.mean(axis=1, keepdims=True)
        gy = (g * out).mean(axis=1, keepdims=True)
        return (inv * (g - gm - out * gy),)

    return record("layer_norm", out, (x,), back)


def reshape(t, shape) -> Tensor:
    t = as_tensor(t)
    out = t.data.reshape(shape)
    return record("reshape", out, (t,), lambda g: (g.reshape(t.shape),))


def expand(t, axis: int, n: int) -> Tensor:
    """Insert a new axis at ``axis`` and replicate ``n`` times along it."""
    t = as_tensor(t)
    out = np.repeat(np.expand_dims(t.data, axis), n, axis=axis)
    if out.ndim == 3 and axis == 1:
        return record("expand", out, (t,), lambda g: (sum_mid(g),))
    return record("expand", out, (t,), lambda g: (g.sum(axis=axis),))


def gather_rows(t, index: np.ndarray) -> Tensor:
    """``t[index]`` for a 2-D ``t`` and an integer index array of any shape."""
    t = as_tensor(t)
    index = np.asarray(index, dtype=np.int64)
    if t.ndim != 2:
        raise ShapeError("gather_rows expects a 2-D tensor")
    if index.size and (index.min() < 0 or index.max() >= t.shape[0]):
        raise IndexError("gather_rows index out of range")
    out = t.data[index]

    def back(g):
        gx = np.zeros(t.shape)
        kernels.scatter_rows(np.ascontiguousarray(g.reshape(-1, t.shape[1])), index.reshape(-1), gx)
        return (gx,)

    return record("gather_rows", out, (t,), back)


def take(t, index) -> Tensor:
    """Basic indexing ``t[index]`` with a scatter backward."""
    t = as_tensor(t)
    out = np.array(t.data[index], dtype=np.float64)

    def back(g):
        gx = np.zeros(t.shape)
        np.add.at(gx, index, g)
        return (gx,)

    return record("take", out, (t,), back)


def zeros(shape) -> Tensor:
    return Tensor(np.zeros(shape))
