"""Adam with bias correction."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from senres.errors import ShapeError
from senres.tensor.core import Tensor


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_step(params: Sequence[Tensor], grads: Sequence[np.ndarray | None], state: AdamState) -> None:
    """Update ``params`` in place and advance ``state`` by one step.

    A ``None`` gradient is treated as zero so that unused parameters keep
    their moment estimates decaying consistently.
    """
    if len(params) != len(grads):
        raise ShapeError(f"{len(params)} parameters but {len(grads)} gradients")
    if not state.m:
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
    if len(state.m) != len(params):
        raise ShapeError("optimizer state was built for a different parameter list")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1 ** state.step
    corr2 = 1.0 - b2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g is None:
            g = np.zeros_like(p.data)
        if g.shape != p.shape or m.shape != p.shape:
            raise ShapeError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p.data -= state.lr * (m / corr1) / (np.sqrt(v / corr2) + state.eps)


class Adam:
    """Convenience wrapper that reads ``.grad`` from the tensors it owns."""

    def __init__(self, params: Mapping[str, Tensor] | Sequence[Tensor], lr: float = 1e-3,
                 betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params.values()) if isinstance(params, Mapping) else list(params)
        self.state = AdamState(lr=lr, beta1=betas[0], beta2=betas[1], eps=eps)

    def step(self) -> None:
        adam_step(self.params, [p.grad for p in self.params], self.state)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None
