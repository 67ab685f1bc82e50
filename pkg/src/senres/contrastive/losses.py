"""NT-Xent and InfoNCE contrastive losses."""

from __future__ import annotations

import numpy as np

from senres.errors import InvalidStateError, ShapeError
from senres.tensor import Tensor, as_tensor, ops


def nt_xent(z, tau: float) -> Tensor:
    """Normalised temperature-scaled cross-entropy over in-batch pairs.

    Rows ``2k`` and ``2k+1`` (0-based) are the two views of sample ``k``.
    For anchor ``i`` the denominator sums ``exp(sim(i, j) / tau)`` over every
    ``j != i``, the positive included.  The result is the mean over all 2N
    anchors.
    """
    z = as_tensor(z)
    if z.ndim != 2 or z.shape[0] < 2 or z.shape[0] % 2:
        raise ShapeError(f"nt_xent needs an even number (>= 2) of rows, got shape {z.shape}")
    if tau <= 0:
        raise ValueError("temperature must be positive")
    two_n = z.shape[0]
    zn = ops.l2_normalize(z)
    logits = ops.scale(ops.matmul(zn, ops.transpose(zn)), 1.0 / tau)
    not_self = ~np.eye(two_n, dtype=bool)
    partner = np.arange(two_n) ^ 1
    return ops.mean(ops.sub(ops.logsumexp(logits, not_self), ops.pick(logits, partner)))


def _negatives(queue) -> Tensor:
    from senres.contrastive.moco import Queue
    if isinstance(queue, Queue):
        return Tensor(queue.contents())
    return as_tensor(queue)


def info_nce(q, k_pos, queue, tau: float) -> Tensor:
    """Cross-entropy of each query against its key (class 0) and the queue.

    Keys and queue entries pass through ``stop_gradient``, so only the query
    path is differentiated.  ``queue`` may be a :class:`Queue` (its filled
    prefix is used) or a (K, P) array or tensor.
    """
    q = as_tensor(q)
    k = ops.stop_gradient(as_tensor(k_pos))
    neg = ops.stop_gradient(_negatives(queue))
    if neg.shape[0] == 0:
        raise InvalidStateError("info_nce needs at least one queued negative")
    if q.ndim != 2 or k.shape != q.shape or neg.ndim != 2 or neg.shape[1] != q.shape[1]:
        raise ShapeError(f"info_nce: q {q.shape}, k {k.shape}, queue {neg.shape}")
    if tau <= 0:
        raise ValueError("temperature must be positive")
    pos = ops.sum(ops.mul(q, k), axis=1, keepdims=True)
    negl = ops.matmul(q, ops.transpose(neg))
    logits = ops.scale(ops.concat([pos, negl], axis=1), 1.0 / tau)
    return ops.cross_entropy(logits, np.zeros(q.shape[0], dtype=np.intp))
