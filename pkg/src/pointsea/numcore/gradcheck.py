"""Central finite-difference oracle for tape gradients."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tape, Tensor


def tape_gradients(fn: Callable[[], Tensor], params: Sequence[Tensor]) -> list[np.ndarray]:
    for p in params:
        p.grad = None
    with Tape() as tape:
        loss = fn()
        tape.backward(loss)
    grads = [np.zeros(p.shape) if p.grad is None else p.grad.copy() for p in params]
    for p in params:
        p.grad = None
    return grads


def numeric_gradients(
    fn: Callable[[], Tensor],
    params: Sequence[Tensor],
    step: float = 1e-5,
    coords: Sequence[tuple[int, int]] | None = None,
) -> list[np.ndarray]:
    """Central differences of ``fn`` (run with no tape) w.r.t. each param entry.

    ``coords`` restricts the probe to ``(param index, flat index)`` pairs; the
    remaining entries are left at zero.
    """
    grads = [np.zeros(p.shape) for p in params]
    if coords is None:
        coords = [(i, j) for i, p in enumerate(params) for j in range(p.size)]
    for i, j in coords:
        flat = params[i].data.reshape(-1)
        orig = flat[j]
        flat[j] = orig + step
        up = fn().item()
        flat[j] = orig - step
        down = fn().item()
        flat[j] = orig
        grads[i].reshape(-1)[j] = (up - down) / (2.0 * step)
    return grads


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-8) -> float:
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    scale = np.maximum(np.maximum(np.linalg.norm(a), np.linalg.norm(b)), floor)
    return float(np.linalg.norm(a - b) / scale)


def check_gradients(
    fn: Callable[[], Tensor],
    params: Sequence[Tensor],
    step: float = 1e-5,
    coords: Sequence[tuple[int, int]] | None = None,
) -> float:
    """Relative error between tape and finite-difference gradients.

    With ``coords`` only the probed entries are compared.
    """
    analytic = tape_gradients(fn, params)
    numeric = numeric_gradients(fn, params, step=step, coords=coords)
    if coords is None:
        return relative_error(np.concatenate([g.reshape(-1) for g in analytic]),
                              np.concatenate([g.reshape(-1) for g in numeric]))
    a = np.array([analytic[i].reshape(-1)[j] for i, j in coords])
    n = np.array([numeric[i].reshape(-1)[j] for i, j in coords])
    return relative_error(a, n)


def sample_coords(params: Sequence[Tensor], count: int, rng: np.random.Generator) -> list[tuple[int, int]]:
    """Draw ``count`` distinct (param, entry) probes, uniform over all entries."""
    sizes = np.array([p.size for p in params])
    total = int(sizes.sum())
    picks = rng.choice(total, size=min(count, total), replace=False)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    out = []
    for flat in sorted(int(x) for x in picks):
        i = int(np.searchsorted(offsets, flat, side="right") - 1)
        out.append((i, flat - int(offsets[i])))
    return out
