"""Dense float64 tensors and the reverse-mode gradient tape."""
from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

BackwardFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]

_local = threading.local()


def _stack() -> list["Tape"]:
    if not hasattr(_local, "stack"):
        _local.stack = []
    return _local.stack


def active_tape() -> "Tape | None":
    stack = _stack()
    return stack[-1] if stack else None


class Tensor:
    """An n-dimensional float64 array that can take part in a gradient tape.

    ``tape_id`` is the index of the record that produced this tensor on its
    tape, or ``None`` for leaves and for values computed with no tape active.
    """

    __slots__ = ("data", "requires_grad", "grad", "tape_id", "name", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data, dtype=np.float64)
        if not arr.flags.c_contiguous:
            arr = np.ascontiguousarray(arr)
        self.data: np.ndarray = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.tape_id: int | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def dump(self) -> str:
        return format_tensor(self)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # operator sugar; the implementations live in ops
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from . import ops
        return ops.add(other, self)

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from . import ops
        return ops.mul(other, self)

    def __neg__(self):
        from . import ops
        return ops.mul(self, -1.0)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __getitem__(self, index):
        from . import ops
        return ops.take(self, index)


@dataclass
class Record:
    op: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    backward: BackwardFn


@dataclass
class Tape:
    """Ordered log of primitive applications.

    Use as a context manager; every primitive evaluated while the tape is
    active and touching a ``requires_grad`` tensor is appended in execution
    order.  Gradients accumulate into leaf tensors across ``backward`` calls
    until they are cleared with :func:`zero_grad`.
    """

    records: list[Record] = field(default_factory=list)

    def __enter__(self) -> "Tape":
        _stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        stack = _stack()
        if not stack or stack[-1] is not self:
            raise RuntimeError("tape stack corrupted")
        stack.pop()

    def __len__(self) -> int:
        return len(self.records)

    def backward(self, loss: Tensor, retain_grad: bool = False) -> None:
        if loss.size != 1:
            raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
        if not loss.requires_grad:
            raise ValueError("loss does not depend on any requires_grad tensor")
        if loss.tape_id is None:
            _accumulate_leaf(loss, np.ones_like(loss.data))
            return
        if loss.tape_id >= len(self.records) or self.records[loss.tape_id].output is not loss:
            raise ValueError("loss was not recorded on this tape")

        pending: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        for rec in reversed(self.records[: loss.tape_id + 1]):
            g = pending.pop(id(rec.output), None)
            if g is None:
                continue
            if retain_grad:
                rec.output.grad = g
            grads = rec.backward(g)
            for t, gi in zip(rec.inputs, grads):
                if gi is None or not t.requires_grad:
                    continue
                if t.tape_id is None:
                    _accumulate_leaf(t, gi)
                else:
                    key = id(t)
                    prev = pending.get(key)
                    pending[key] = gi if prev is None else prev + gi


def _accumulate_leaf(t: Tensor, g: np.ndarray) -> None:
    if g.shape != t.shape:
        raise RuntimeError(f"gradient shape {g.shape} does not match tensor {t.shape}")
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64, copy=True)
    else:
        t.grad += g


def record(op: str, data: np.ndarray, inputs: Sequence[Tensor], backward: BackwardFn) -> Tensor:
    """Wrap ``data`` as the output of primitive ``op`` and log it on the active tape.

    ``backward`` receives the output gradient and returns one gradient (or
    ``None``) per input.  Nothing is logged when no tape is active or no input
    requires a gradient.
    """
    tape = active_tape()
    if tape is None or not any(t.requires_grad for t in inputs):
        return Tensor(data)
    out = Tensor(data, requires_grad=True)
    out.tape_id = len(tape.records)
    tape.records.append(Record(op, tuple(inputs), out, backward))
    return out


def backward(loss: Tensor, retain_grad: bool = False) -> None:
    """Run reverse accumulation from ``loss`` on the currently active tape."""
    tape = active_tape()
    if tape is None:
        if loss.tape_id is not None:
            raise RuntimeError("backward called outside the tape that recorded the loss")
        tape = Tape()
    tape.backward(loss, retain_grad=retain_grad)


def zero_grad(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None


def parameter(data, name: str | None = None) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64, copy=True), requires_grad=True, name=name)


def format_tensor(t: Tensor | np.ndarray) -> str:
    """Row-major text dump, one row per line, values as ``%.17g``."""
    arr = t.data if isinstance(t, Tensor) else np.asarray(t, dtype=np.float64)
    if arr.ndim == 0:
        rows = arr.reshape(1, 1)
    elif arr.ndim == 1:
        rows = arr.reshape(1, -1)
    else:
        rows = arr.reshape(-1, arr.shape[-1])
    header = "# shape " + " ".join(str(s) for s in arr.shape)
    lines = [header] + [" ".join("%.17g" % v for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def parse_tensor(text: str) -> np.ndarray:
    lines = [ln for ln in text.strip().splitlines()]
    if not lines or not lines[0].startswith("# shape"):
        raise ValueError("missing shape header")
    shape = tuple(int(s) for s in lines[0].split()[2:])
    values = [float(v) for ln in lines[1:] for v in ln.split()]
    return np.array(values, dtype=np.float64).reshape(shape)
