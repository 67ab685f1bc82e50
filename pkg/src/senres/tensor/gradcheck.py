"""Finite-difference verification of tape gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from senres.tensor.core import Tape, Tensor


def numerical_grad(f: Callable[..., Tensor], inputs: Sequence[Tensor], h: float = 1e-5) -> list[np.ndarray]:
    """Central differences of scalar ``f(*inputs)`` w.r.t. every input element."""
    grads = []
    for t in inputs:
        g = np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        gflat = g.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + h
            up = float(f(*inputs).data)
            flat[k] = orig - h
            down = float(f(*inputs).data)
            flat[k] = orig
            gflat[k] = (up - down) / (2.0 * h)
        grads.append(g)
    return grads


def tape_grad(f: Callable[..., Tensor], inputs: Sequence[Tensor]) -> list[np.ndarray]:
    for t in inputs:
        t.requires_grad = True
        t.grad = None
    with Tape() as tape:
        out = f(*inputs)
    tape.backward(out)
    return [t.grad for t in inputs]


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-8) -> float:
    """max |a-b| / max(|a|, |b|, floor), elementwise."""
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0


def grad_check(f: Callable[..., Tensor], *point, h: float = 1e-5, floor: float = 1e-6) -> float:
    """Largest relative error between tape and finite-difference gradients.

    ``point`` holds the arrays at which ``f`` is evaluated; they are copied
    to float64 tensors.  ``floor`` keeps the relative error meaningful where
    both gradients are essentially zero.
    """
    inputs = [Tensor(np.array(p, dtype=np.float64)) for p in point]
    analytic = tape_grad(f, inputs)
    for t in inputs:
        t.requires_grad = False
    numeric = numerical_grad(f, inputs, h=h)
    return max((relative_error(a, n, floor) for a, n in zip(analytic, numeric)), default=0.0)
