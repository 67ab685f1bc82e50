"""Differentiable primitives.

Every function here takes Tensors (or array-likes, treated as constants),
computes the forward value with numpy and, when a tape is recording,
registers a backward rule.  The LSTM parameter layout packs gates as
``(input, forget, candidate, output)`` along the last axis of ``w_x``,
``w_h`` and ``b``; checkpoints depend on that order.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from senres.errors import ShapeError
from senres.tensor.core import Tensor, as_tensor, make_output, make_outputs


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


# -- elementwise arithmetic ---------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data + b.data
    except ValueError as exc:
        raise ShapeError(f"cannot add shapes {a.shape} and {b.shape}") from exc
    return make_output(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data - b.data
    except ValueError as exc:
        raise ShapeError(f"cannot subtract shapes {a.shape} and {b.shape}") from exc
    return make_output(out, (a, b), lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data * b.data
    except ValueError as exc:
        raise ShapeError(f"cannot multiply shapes {a.shape} and {b.shape}") from exc
    return make_output(out, (a, b), lambda g: (_unbroadcast(g * b.data, a.shape),
                                                _unbroadcast(g * a.data, b.shape)))


def scale(a, factor: float) -> Tensor:
    a = as_tensor(a)
    return make_output(a.data * factor, (a,), lambda g: (g * factor,))


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return make_output(a.data * mask, (a,), lambda g: (g * mask,))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    s = _sigmoid(a.data)
    return make_output(s, (a,), lambda g: (g * s * (1.0 - s),))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    t = np.tanh(a.data)
    return make_output(t, (a,), lambda g: (g * (1.0 - t * t),))


def exp(a) -> Tensor:
    a = as_tensor(a)
    e = np.exp(a.data)
    return make_output(e, (a,), lambda g: (g * e,))


def log(a) -> Tensor:
    a = as_tensor(a)
    return make_output(np.log(a.data), (a,), lambda g: (g / a.data,))


def stop_gradient(a) -> Tensor:
    """Identity in the forward pass; the input receives an exactly-zero gradient."""
    a = as_tensor(a)
    return make_output(a.data.copy(), (a,), lambda g: (np.zeros_like(a.data),))


# -- shape manipulation -------------------------------------------------------

def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    try:
        out = a.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"cannot reshape {a.shape} to {shape}") from exc
    return make_output(out, (a,), lambda g: (g.reshape(a.shape),))


def transpose(a) -> Tensor:
    a = as_tensor(a)
    if a.ndim != 2:
        raise ShapeError("transpose expects a matrix")
    return make_output(a.data.T, (a,), lambda g: (g.T,))


def index(a, key) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        full = np.zeros_like(a.data)
        np.add.at(full, key, g)
        return (full,)

    return make_output(a.data[key], (a,), backward)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeError(str(exc)) from exc
    cuts = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return make_output(out, tensors, lambda g: tuple(np.split(g, cuts, axis=axis)))


# -- reductions ---------------------------------------------------------------

def sum(a, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001 - mirrors numpy
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return make_output(out, (a,), backward)


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    n = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return scale(sum(a, axis=axis, keepdims=keepdims), 1.0 / float(n))


def logsumexp(a, mask=None) -> Tensor:
    """Log-sum-exp over the last axis, optionally restricted to ``mask`` entries."""
    a = as_tensor(a)
    x = a.data
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != x.shape:
            raise ShapeError(f"mask shape {mask.shape} != input shape {x.shape}")
        x = np.where(mask, x, -np.inf)
    m = x.max(axis=-1, keepdims=True)
    w = np.exp(x - m)
    s = w.sum(axis=-1, keepdims=True)
    out = (m + np.log(s))[..., 0]
    soft = w / s
    return make_output(out, (a,), lambda g: (g[..., None] * soft,))


def pick(a, idx) -> Tensor:
    """Select ``a[r, idx[r]]`` for every row ``r`` of a matrix."""
    a = as_tensor(a)
    idx = np.asarray(idx, dtype=np.intp)
    if a.ndim != 2 or idx.shape != (a.shape[0],):
        raise ShapeError(f"pick needs a matrix and one index per row, got {a.shape} / {idx.shape}")
    rows = np.arange(a.shape[0])

    def backward(g):
        full = np.zeros_like(a.data)
        full[rows, idx] = g
        return (full,)

    return make_output(a.data[rows, idx], (a,), backward)


def cross_entropy(logits, labels) -> Tensor:
    """Mean softmax cross-entropy of integer ``labels`` under ``logits`` (B x K)."""
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.intp)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeError(f"cross_entropy: logits {logits.shape} vs labels {labels.shape}")
    x = logits.data
    m = x.max(axis=1, keepdims=True)
    z = x - m
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - lse
    b = x.shape[0]
    rows = np.arange(b)
    out = -logp[rows, labels].mean()

    def backward(g):
        p = np.exp(logp)
        p[rows, labels] -= 1.0
        return (p * (g / b),)

    return make_output(np.asarray(out, dtype=x.dtype), (logits,), backward)


# -- linear algebra -------------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    return make_output(a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


def l2_normalize(v) -> Tensor:
    """Scale each trailing-axis vector to unit length; zero vectors stay zero."""
    v = as_tensor(v)
    # rescale by the largest magnitude first so tiny vectors do not underflow when squared
    peak = np.abs(v.data).max(axis=-1, keepdims=True)
    nonzero = peak > 0
    unit = v.data / np.where(nonzero, peak, 1.0)
    rel = np.sqrt((unit * unit).sum(axis=-1, keepdims=True))
    safe = np.where(nonzero, peak * rel, 1.0)
    out = np.where(nonzero, unit / np.where(nonzero, rel, 1.0), 0.0)

    def backward(g):
        proj = (out * g).sum(axis=-1, keepdims=True)
        return (np.where(nonzero, (g - out * proj) / safe, 0.0),)

    return make_output(out, (v,), backward)


# -- network layers -------------------------------------------------------------

def conv1d(x, kernels, bias) -> Tensor:
    """Valid cross-correlation along time.

    x: (B, T, Cin); kernels: (k, Cin, Cout); bias: (Cout,) -> (B, T-k+1, Cout)
    """
    x, kernels, bias = as_tensor(x), as_tensor(kernels), as_tensor(bias)
    if x.ndim != 3 or kernels.ndim != 3 or bias.ndim != 1:
        raise ShapeError(f"conv1d: bad ranks {x.shape}, {kernels.shape}, {bias.shape}")
    b, t, cin = x.shape
    k, kcin, cout = kernels.shape
    if kcin != cin or bias.shape[0] != cout:
        raise ShapeError(f"conv1d: channel mismatch {x.shape}, {kernels.shape}, {bias.shape}")
    if t < k:
        raise ShapeError(f"conv1d: sequence length {t} shorter than kernel {k}")
    t_out = t - k + 1
    # (B, T_out, Cin, k) -> (B*T_out, k*Cin) with k varying slowest
    cols = sliding_window_view(x.data, k, axis=1).transpose(0, 1, 3, 2).reshape(b * t_out, k * cin)
    wmat = kernels.data.reshape(k * cin, cout)
    out = (cols @ wmat + bias.data).reshape(b, t_out, cout)

    def backward(g):
        g2 = g.reshape(b * t_out, cout)
        dw = (cols.T @ g2).reshape(k, cin, cout)
        dx = None
        if x.requires_grad:
            # full correlation of the output gradient with the flipped kernel
            gp = np.pad(g, ((0, 0), (k - 1, k - 1), (0, 0)))
            gcols = sliding_window_view(gp, k, axis=1).transpose(0, 1, 3, 2).reshape(b * t, k * cout)
            wflip = kernels.data[::-1].transpose(0, 2, 1).reshape(k * cout, cin)
            dx = (gcols @ wflip).reshape(b, t, cin)
        return dx, dw, g2.sum(axis=0)

    return make_output(out, (x, kernels, bias), backward)


def avg_pool1d(x, size: int) -> Tensor:
    """Non-overlapping mean pooling along time; a trailing remainder is dropped."""
    x = as_tensor(x)
    b, t, c = x.shape
    t_out = t // size
    if t_out < 1:
        raise ShapeError(f"avg_pool1d: length {t} shorter than pool {size}")
    out = x.data[:, :t_out * size].reshape(b, t_out, size, c).mean(axis=2)

    def backward(g):
        dx = np.zeros_like(x.data)
        dx[:, :t_out * size] = np.repeat(g / size, size, axis=1)
        return (dx,)

    return make_output(out, (x,), backward)


def _check_lstm(d: int, w_x, w_h, b) -> int:
    if w_h.ndim != 2 or w_h.shape[1] != 4 * w_h.shape[0]:
        raise ShapeError(f"lstm: w_h must be (H, 4H), got {w_h.shape}")
    hidden = w_h.shape[0]
    if w_x.shape != (d, 4 * hidden) or b.shape != (4 * hidden,):
        raise ShapeError(f"lstm: w_x {w_x.shape} / bias {b.shape} inconsistent with D={d}, H={hidden}")
    return hidden


def lstm_step(x, h_prev, c_prev, w_x, w_h, b) -> tuple[Tensor, Tensor]:
    """One LSTM cell update.  x: (B, D); h_prev, c_prev: (B, H)."""
    x, h_prev, c_prev = as_tensor(x), as_tensor(h_prev), as_tensor(c_prev)
    w_x, w_h, b = as_tensor(w_x), as_tensor(w_h), as_tensor(b)
    if x.ndim != 2:
        raise ShapeError(f"lstm_step: x must be (B, D), got {x.shape}")
    hd = _check_lstm(x.shape[1], w_x, w_h, b)
    if h_prev.shape != (x.shape[0], hd) or c_prev.shape != h_prev.shape:
        raise ShapeError(f"lstm_step: state shapes {h_prev.shape}, {c_prev.shape} != {(x.shape[0], hd)}")
    a = x.data @ w_x.data + h_prev.data @ w_h.data + b.data
    i = _sigmoid(a[:, :hd])
    f = _sigmoid(a[:, hd:2 * hd])
    cand = np.tanh(a[:, 2 * hd:3 * hd])
    o = _sigmoid(a[:, 3 * hd:])
    c = f * c_prev.data + i * cand
    tc = np.tanh(c)
    h = o * tc

    def backward(gs):
        dh, dc_out = gs
        dc = dc_out + dh * o * (1.0 - tc * tc)
        da = np.concatenate([
            dc * cand * i * (1.0 - i),
            dc * c_prev.data * f * (1.0 - f),
            dc * i * (1.0 - cand * cand),
            dh * tc * o * (1.0 - o),
        ], axis=1)
        return (da @ w_x.data.T, da @ w_h.data.T, dc * f,
                x.data.T @ da, h_prev.data.T @ da, da.sum(axis=0))

    return make_outputs((h, c), (x, h_prev, c_prev, w_x, w_h, b), backward)


def lstm(x, w_x, w_h, b) -> Tensor:
    """Run an LSTM over a whole sequence from a zero state.

    Numerically identical to chaining :func:`lstm_step`, but recorded as a
    single tape entry with a fused backpropagation-through-time rule.

    x: (B, T, D) -> hidden states (B, T, H)
    """
    x, w_x, w_h, b = as_tensor(x), as_tensor(w_x), as_tensor(w_h), as_tensor(b)
    if x.ndim != 3:
        raise ShapeError(f"lstm: x must be (B, T, D), got {x.shape}")
    bsz, steps, d = x.shape
    hd = _check_lstm(d, w_x, w_h, b)
    dtype = np.result_type(x.data, w_x.data)
    gx = (x.data.reshape(bsz * steps, d) @ w_x.data + b.data).reshape(bsz, steps, 4 * hd)
    wh = w_h.data
    hs = np.empty((bsz, steps, hd), dtype=dtype)
    cs = np.empty((bsz, steps, hd), dtype=dtype)
    gates = np.empty((bsz, steps, 4 * hd), dtype=dtype)
    h = np.zeros((bsz, hd), dtype=dtype)
    c = np.zeros((bsz, hd), dtype=dtype)
    for t in range(steps):
        a = gx[:, t] + h @ wh
        act = gates[:, t]
        act[:, :2 * hd] = _sigmoid(a[:, :2 * hd])
        act[:, 2 * hd:3 * hd] = np.tanh(a[:, 2 * hd:3 * hd])
        act[:, 3 * hd:] = _sigmoid(a[:, 3 * hd:])
        c = act[:, hd:2 * hd] * c + act[:, :hd] * act[:, 2 * hd:3 * hd]
        h = act[:, 3 * hd:] * np.tanh(c)
        cs[:, t] = c
        hs[:, t] = h

    def backward(g):
        dgx = np.empty_like(gates)
        dh_next = np.zeros((bsz, hd), dtype=dtype)
        dc_next = np.zeros((bsz, hd), dtype=dtype)
        for t in range(steps - 1, -1, -1):
            act = gates[:, t]
            i, f = act[:, :hd], act[:, hd:2 * hd]
            cand, o = act[:, 2 * hd:3 * hd], act[:, 3 * hd:]
            tc = np.tanh(cs[:, t])
            c_prev = cs[:, t - 1] if t > 0 else np.zeros_like(dc_next)
            dh = g[:, t] + dh_next
            dc = dc_next + dh * o * (1.0 - tc * tc)
            da = dgx[:, t]
            da[:, :hd] = dc * cand * i * (1.0 - i)
            da[:, hd:2 * hd] = dc * c_prev * f * (1.0 - f)
            da[:, 2 * hd:3 * hd] = dc * i * (1.0 - cand * cand)
            da[:, 3 * hd:] = dh * tc * o * (1.0 - o)
            dh_next = da @ wh.T
            dc_next = dc * f
        flat = dgx.reshape(bsz * steps, 4 * hd)
        h_prev = np.concatenate([np.zeros((bsz, 1, hd), dtype=dtype), hs[:, :-1]], axis=1)
        dx = (flat @ w_x.data.T).reshape(bsz, steps, d)
        dwx = x.data.reshape(bsz * steps, d).T @ flat
        dwh = h_prev.reshape(bsz * steps, hd).T @ flat
        return dx, dwx, dwh, flat.sum(axis=0)

    return make_output(hs, (x, w_x, w_h, b), backward)


def dropout(x, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout with an explicit generator."""
    x = as_tensor(x)
    if rate <= 0.0:
        return x
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / (1.0 - rate)
    return mul(x, Tensor(keep, dtype=x.dtype))
