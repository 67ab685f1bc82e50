"""Resampling augmentation: interpolate up, then take a strided subsequence back down.

Indices in this module are 0-based.  Upsampling with ``M`` inserted nodes
per gap produces ``L = (M+1)(I-1)+1`` samples with the originals at
multiples of ``M+1``.  Downsampling takes ``I`` samples with stride
``N+1`` from a random start in ``[0, L - (I-1)(N+1) - 1]``, so the net
effect is a time-scale change by ``(N+1)/(M+1)``.

All functions accept a 1-D sequence or a (T, C) array and work along axis 0.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from senres.augment.window import Window
from senres.errors import InputTooShortError, InvalidParamsError

INTERPOLATIONS = ("linear", "lagrange", "cubic_spline")
MODES = ("A", "B")
DRAW_POLICIES = ("fixed", "random")

# Block length and the (0-based) gaps that receive one inserted point each.
_BLOCKS = {"A": (4, (1,)), "B": (8, (1, 3, 5))}
# 4-point stencil start for each gap in mode B; each stencil is centred on its gap.
_STENCIL_START = {1: 0, 3: 2, 5: 4}


@dataclass(frozen=True)
class ResampleParams:
    M: int = 1
    N: int = 0
    interpolation: str = "linear"
    mode: str = "A"
    draw_policy: str = "fixed"

    def __post_init__(self):
        if self.interpolation not in INTERPOLATIONS:
            raise InvalidParamsError(f"unknown interpolation {self.interpolation!r}")
        if self.mode not in MODES:
            raise InvalidParamsError(f"unknown mode {self.mode!r}")
        if self.draw_policy not in DRAW_POLICIES:
            raise InvalidParamsError(f"unknown draw policy {self.draw_policy!r}")
        if self.draw_policy == "fixed" and not (self.M >= 1 and 0 <= self.N <= self.M - 1):
            raise InvalidParamsError(f"need 1 <= M and 0 <= N <= M-1, got M={self.M}, N={self.N}")

    def to_dict(self) -> dict:
        return asdict(self)


def upsample_linear(seq, M: int) -> np.ndarray:
    x = np.asarray(seq, dtype=np.float64)
    if M < 1:
        raise InvalidParamsError(f"M must be >= 1, got {M}")
    n = x.shape[0]
    if n < 2:
        raise InputTooShortError(f"need at least 2 samples to interpolate, got {n}")
    step = M + 1
    j = np.arange((n - 1) * step + 1)
    lo = j // step
    hi = np.minimum(lo + 1, n - 1)
    frac = (j % step) / step
    if x.ndim > 1:
        frac = frac.reshape((-1,) + (1,) * (x.ndim - 1))
    return x[lo] + (x[hi] - x[lo]) * frac


def lagrange_eval(nodes, values, t: float) -> np.ndarray:
    """Evaluate the interpolating polynomial through (nodes, values) at t."""
    nodes = np.asarray(nodes, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    out = np.zeros(values.shape[1:])
    for i, xi in enumerate(nodes):
        basis = 1.0
        for j, xj in enumerate(nodes):
            if j != i:
                basis *= (t - xj) / (xi - xj)
        out = out + basis * values[i]
    return out


def natural_spline_second_derivatives(y) -> np.ndarray:
    """Second derivatives of the natural cubic spline through y on a unit grid.

    Solves M[i-1] + 4 M[i] + M[i+1] = 6 (y[i+1] - 2 y[i] + y[i-1]) with
    M[0] = M[-1] = 0 by the Thomas algorithm.  ``y`` may carry trailing
    channel axes.
    """
    y = np.asarray(y, dtype=np.float64)
    n = y.shape[0]
    m = np.zeros_like(y)
    if n < 3:
        return m
    rhs = 6.0 * (y[2:] - 2.0 * y[1:-1] + y[:-2])
    k = n - 2
    c = np.zeros(k)
    d = np.zeros_like(rhs)
    c[0] = 1.0 / 4.0
    d[0] = rhs[0] / 4.0
    for i in range(1, k):
        denom = 4.0 - c[i - 1]
        c[i] = 1.0 / denom
        d[i] = (rhs[i] - d[i - 1]) / denom
    m[k] = d[k - 1]
    for i in range(k - 2, -1, -1):
        m[i + 1] = d[i] - c[i] * m[i + 2]
    return m


def natural_spline_eval(y, t: float) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    m = natural_spline_second_derivatives(y)
    i = min(int(np.floor(t)), y.shape[0] - 2)
    u = t - i
    v = 1.0 - u
    return v * y[i] + u * y[i + 1] + ((v ** 3 - v) * m[i] + (u ** 3 - u) * m[i + 1]) / 6.0


def _block_inserts(block: np.ndarray, kernel: str, mode: str) -> list[np.ndarray]:
    _, gaps = _BLOCKS[mode]
    if kernel == "cubic_spline":
        return [natural_spline_eval(block, g + 0.5) for g in gaps]
    if kernel == "lagrange":
        out = []
        for g in gaps:
            s = _STENCIL_START[g] if mode == "B" else 0
            out.append(lagrange_eval(np.arange(4.0), block[s:s + 4], g - s + 0.5))
        return out
    raise InvalidParamsError(f"unknown nonlinear kernel {kernel!r}")


def upsample_nonlinear(seq, kernel: str, mode: str) -> np.ndarray:
    """Insert midpoints inside consecutive non-overlapping blocks.

    Mode A: 4-sample blocks, one point between the 2nd and 3rd sample.
    Mode B: 8-sample blocks, points between samples 2-3, 4-5 and 6-7.
    A trailing partial block is copied through unchanged.  Lagrange uses
    the cubic through the 4-sample stencil centred on each gap; the spline
    kernel fits one natural cubic spline over the whole block.
    """
    if mode not in _BLOCKS:
        raise InvalidParamsError(f"unknown mode {mode!r}")
    x = np.asarray(seq, dtype=np.float64)
    size, gaps = _BLOCKS[mode]
    n = x.shape[0]
    if n < size:
        raise InputTooShortError(f"mode {mode} needs at least {size} samples, got {n}")
    positions, values = [], []
    for start in range(0, n - size + 1, size):
        block = x[start:start + size]
        for g, v in zip(gaps, _block_inserts(block, kernel, mode)):
            positions.append(start + g + 1)
            values.append(v)
    return np.insert(x, positions, np.asarray(values), axis=0)


def max_start(length: int, out_len: int, stride: int) -> int:
    """Number of valid start offsets for a strided take of ``out_len`` samples."""
    return length - (out_len - 1) * stride


def downsample(seq, I: int, N: int, rng: np.random.Generator | None = None, start: int | None = None) -> np.ndarray:
    """Take ``I`` samples with stride ``N+1``; ``start`` is drawn from ``rng`` if not given."""
    x = np.asarray(seq, dtype=np.float64)
    stride = N + 1
    if N < 0 or I < 1:
        raise InvalidParamsError(f"invalid downsample request I={I}, N={N}")
    s_count = max_start(x.shape[0], I, stride)
    if s_count < 1:
        raise InvalidParamsError(f"stride {stride} x {I} samples does not fit in length {x.shape[0]}")
    if start is None:
        if rng is None:
            raise InvalidParamsError("downsample needs an rng or an explicit start")
        start = int(rng.integers(0, s_count))
    elif not 0 <= start < s_count:
        raise InvalidParamsError(f"start {start} outside [0, {s_count - 1}]")
    return x[start:start + (I - 1) * stride + 1:stride]


def draw_params(p: ResampleParams, rng: np.random.Generator) -> tuple[int, int]:
    if p.draw_policy == "fixed":
        return p.M, p.N
    m = int(rng.integers(1, 4))
    return m, int(rng.integers(0, m))


def resample_array(x: np.ndarray, p: ResampleParams, rng: np.random.Generator) -> np.ndarray:
    """Resample a (T, C) array; one (M, N, start) draw is shared by every channel."""
    t = x.shape[0]
    if p.interpolation == "linear":
        m, n = draw_params(p, rng)
        return downsample(upsample_linear(x, m), t, n, rng)
    up = upsample_nonlinear(x, p.interpolation, p.mode)
    return downsample(up, t, 0, rng)


def resample(w: Window, p: ResampleParams, rng: np.random.Generator) -> Window:
    return w.with_data(resample_array(w.data, p, rng))


def resample_linear_batch(x: np.ndarray, draws: np.ndarray) -> np.ndarray:
    """Vectorised linear resampling of a (B, T, C) batch.

    ``draws`` holds one ``(M, N, start)`` row per window.  The arithmetic is
    the same as :func:`upsample_linear` followed by :func:`downsample`, so the
    result matches the per-window path bit for bit.
    """
    x = np.asarray(x, dtype=np.float64)
    b, t = x.shape[:2]
    draws = np.asarray(draws, dtype=np.int64).reshape(b, 3)
    step = draws[:, 0:1] + 1
    j = draws[:, 2:3] + np.arange(t)[None, :] * (draws[:, 1:2] + 1)
    if np.any(j[:, -1] > (t - 1) * step[:, 0]):
        raise InvalidParamsError("resample draw runs past the end of the upsampled window")
    lo = j // step
    hi = np.minimum(lo + 1, t - 1)
    frac = ((j % step) / step)[..., None]
    rows = np.arange(b)[:, None]
    xlo = x[rows, lo]
    return xlo + (x[rows, hi] - xlo) * frac


def draw_linear(p: ResampleParams, length: int, rng: np.random.Generator) -> tuple[int, int, int]:
    """The (M, N, start) triple that :func:`resample_array` would draw."""
    m, n = draw_params(p, rng)
    count = max_start((length - 1) * (m + 1) + 1, length, n + 1)
    return m, n, int(rng.integers(0, count))
