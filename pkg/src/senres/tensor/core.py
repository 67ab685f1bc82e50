"""Dense tensors and the reverse-mode tape.

Operations are recorded only while a :class:`Tape` is active (used as a
context manager) and at least one input requires a gradient.  Outside a
tape every primitive is a plain numpy computation, which is how frozen
encoders and inference run.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from senres.errors import TapeError

_TAPES: list["Tape"] = []

BackwardFn = Callable[[Sequence[np.ndarray]], Sequence["np.ndarray | None"]]


def _as_array(data, dtype=None) -> np.ndarray:
    # asarray, not ascontiguousarray: the latter promotes 0-d scalars to shape (1,)
    if dtype is not None:
        return np.asarray(data, dtype=dtype, order="C")
    if isinstance(data, np.ndarray) and data.dtype == np.float32:
        return np.asarray(data, order="C")
    return np.asarray(data, dtype=np.float64, order="C")


class Tensor:
    """A numpy array with an optional gradient buffer.

    ``data`` is float64 unless a float32 array is passed in (the optional
    fast training mode).  ``grad`` is ``None`` until a tape populates it.
    """

    __slots__ = ("data", "grad", "requires_grad", "is_leaf", "name")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: str | None = None):
        self.data = _as_array(data, dtype)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.is_leaf = True
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    # Operator sugar; the real work lives in senres.tensor.ops.
    def __add__(self, other):
        from senres.tensor import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from senres.tensor import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from senres.tensor import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from senres.tensor import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from senres.tensor import ops
        if isinstance(other, Tensor):
            raise TypeError("division by a Tensor is not supported")
        return ops.scale(self, 1.0 / float(other))

    def __neg__(self):
        from senres.tensor import ops
        return ops.scale(self, -1.0)

    def __matmul__(self, other):
        from senres.tensor import ops
        return ops.matmul(self, other)

    def __getitem__(self, key):
        from senres.tensor import ops
        return ops.index(self, key)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class _Node:
    __slots__ = ("outputs", "inputs", "backward")

    def __init__(self, outputs, inputs, backward):
        self.outputs = outputs
        self.inputs = inputs
        self.backward = backward


class Tape:
    """Ordered record of executed primitives.

    Use as a context manager; ``backward`` may be called exactly once.

        with Tape() as tape:
            loss = f(x)
        tape.backward(loss)
    """

    def __init__(self):
        self._nodes: list[_Node] = []
        self._consumed = False

    def __enter__(self) -> "Tape":
        _TAPES.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _TAPES.remove(self)

    def __len__(self) -> int:
        return len(self._nodes)

    def record(self, outputs: Sequence[Tensor], inputs: Sequence[Tensor], backward: BackwardFn) -> None:
        if self._consumed:
            raise TapeError("cannot record on a tape that has already been traversed")
        self._nodes.append(_Node(tuple(outputs), tuple(inputs), backward))

    def backward(self, loss: Tensor, grad: np.ndarray | None = None) -> None:
        """Propagate d(loss) back through the recorded operations.

        Leaf tensors with ``requires_grad`` that took part in the recording
        receive their gradient in ``.grad`` (added to any existing buffer).
        """
        if self._consumed:
            raise TapeError("tape has already been traversed; record a new one")
        self._consumed = True
        if grad is None:
            if loss.data.size != 1:
                raise TapeError("backward without an explicit seed needs a scalar loss")
            grad = np.ones_like(loss.data)
        grads: dict[int, np.ndarray] = {id(loss): np.asarray(grad, dtype=loss.dtype)}
        leaves: dict[int, Tensor] = {}
        if loss.is_leaf and loss.requires_grad:
            leaves[id(loss)] = loss

        for node in reversed(self._nodes):
            out_grads = [grads.pop(id(o), None) for o in node.outputs]
            if all(g is None for g in out_grads):
                for t in node.inputs:
                    if t.is_leaf and t.requires_grad:
                        leaves.setdefault(id(t), t)
                continue
            out_grads = [np.zeros_like(o.data) if g is None else g
                         for o, g in zip(node.outputs, out_grads)]
            in_grads = node.backward(out_grads)
            for t, g in zip(node.inputs, in_grads):
                if not t.requires_grad:
                    continue
                if t.is_leaf:
                    leaves.setdefault(id(t), t)
                if g is None:
                    continue
                key = id(t)
                if key in grads:
                    grads[key] = grads[key] + g
                else:
                    grads[key] = g

        for key, t in leaves.items():
            g = grads.get(key)
            if g is None:
                g = np.zeros_like(t.data)
            t.grad = g.copy() if t.grad is None else t.grad + g
        self._nodes.clear()


def active_tape() -> Tape | None:
    return _TAPES[-1] if _TAPES else None


def make_output(data: np.ndarray, inputs: Sequence[Tensor], backward: BackwardFn) -> Tensor:
    """Wrap a primitive's result and record it when a tape wants it."""
    out = Tensor(data)
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out.is_leaf = False
        tape.record((out,), inputs, lambda gs: backward(gs[0]))
    return out


def make_outputs(datas: Sequence[np.ndarray], inputs: Sequence[Tensor], backward: BackwardFn) -> tuple[Tensor, ...]:
    """Multi-output variant of :func:`make_output`; backward gets all output grads."""
    outs = tuple(Tensor(d) for d in datas)
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        for o in outs:
            o.requires_grad = True
            o.is_leaf = False
        tape.record(outs, inputs, backward)
    return outs
