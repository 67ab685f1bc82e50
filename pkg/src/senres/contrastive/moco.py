"""Negative-key queue and momentum encoder update."""

from __future__ import annotations

from typing import Mapping

import numpy as np

from senres.errors import InvalidParamsError, ShapeError
from senres.tensor import Tensor


class Queue:
    """FIFO ring of ``capacity`` key vectors of width ``dim``.

    Writes start at slot 0 and wrap around, so while the ring is filling the
    stored keys are exactly the prefix ``buffer[:count]``.
    """

    def __init__(self, capacity: int, dim: int, dtype=np.float64):
        if capacity < 1 or dim < 1:
            raise InvalidParamsError(f"queue needs positive capacity and width, got ({capacity}, {dim})")
        self.buffer = np.zeros((capacity, dim), dtype=dtype)
        self.cursor = 0
        self.count = 0

    @property
    def capacity(self) -> int:
        return self.buffer.shape[0]

    @property
    def dim(self) -> int:
        return self.buffer.shape[1]

    def __len__(self) -> int:
        return self.count

    @property
    def full(self) -> bool:
        return self.count == self.capacity

    def push(self, keys) -> None:
        keys = keys.data if isinstance(keys, Tensor) else np.asarray(keys)
        if keys.ndim == 1:
            keys = keys[:, None] if self.dim == 1 else keys[None, :]
        b = keys.shape[0]
        if keys.ndim != 2 or keys.shape[1] != self.dim:
            raise ShapeError(f"queue holds width-{self.dim} keys, got {keys.shape}")
        if b > self.capacity:
            raise InvalidParamsError(f"cannot push {b} keys into a queue of capacity {self.capacity}")
        slots = (self.cursor + np.arange(b)) % self.capacity
        self.buffer[slots] = keys
        self.cursor = int((self.cursor + b) % self.capacity)
        self.count = min(self.capacity, self.count + b)

    def contents(self) -> np.ndarray:
        """Stored keys in slot order (the filled prefix during warm-up)."""
        return self.buffer[:self.count]


def queue_push(queue: Queue, keys) -> Queue:
    queue.push(keys)
    return queue


def momentum_update(theta: Mapping[str, Tensor], xi: Mapping[str, Tensor], m: float):
    """In place: ``xi <- m * xi + (1 - m) * theta`` for every named tensor."""
    if not 0.0 <= m < 1.0:
        raise InvalidParamsError(f"momentum must be in [0, 1), got {m}")
    if set(theta) != set(xi):
        raise ShapeError(f"parameter names differ: {sorted(set(theta) ^ set(xi))}")
    for name, t in theta.items():
        target = xi[name]
        if target.shape != t.shape:
            raise ShapeError(f"{name}: shape {target.shape} != {t.shape}")
        target.data = m * target.data + (1.0 - m) * t.data
    return xi
