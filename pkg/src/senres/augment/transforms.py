"""The comparison augmentations: noise, rotation, scaling, magnify, invert, reverse."""

from __future__ import annotations

import numpy as np

from senres.augment.window import Window
from senres.errors import InvalidChannelsError

NOISE_BOUND = 0.1
SCALE_RANGE = (0.7, 0.9)
MAGNIFY_RANGE = (1.1, 1.3)


def noise(w: Window, rng: np.random.Generator, bound: float = NOISE_BOUND) -> Window:
    """Additive i.i.d. uniform(-bound, bound) noise."""
    return w.with_data(w.data + rng.uniform(-bound, bound, size=w.data.shape))


def random_axis(rng: np.random.Generator) -> np.ndarray:
    """Uniform direction on the unit sphere."""
    while True:
        v = rng.standard_normal(3)
        n = np.linalg.norm(v)
        if n > 1e-12:
            return v / n


def rotation_matrix(axis, angle: float) -> np.ndarray:
    """Rodrigues' formula for a rotation by ``angle`` about unit ``axis``."""
    ax = np.asarray(axis, dtype=np.float64)
    ax = ax / np.linalg.norm(ax)
    k = np.array([[0.0, -ax[2], ax[1]],
                  [ax[2], 0.0, -ax[0]],
                  [-ax[1], ax[0], 0.0]])
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


def rotate(w: Window, rng: np.random.Generator | None = None, axis=None, angle: float | None = None) -> Window:
    """Rotate every xyz triad by one shared random rotation.

    Accelerometer and gyroscope triads see the same matrix, as a physically
    rotated device would.  ``axis``/``angle`` override the random draw.
    """
    c = w.channels
    if c % 3:
        raise InvalidChannelsError(f"rotation needs channels in triads, got C={c}")
    if axis is None:
        axis = random_axis(rng)
    if angle is None:
        angle = rng.uniform(0.0, 2.0 * np.pi)
    r = rotation_matrix(axis, angle)
    t = w.length
    return w.with_data((w.data.reshape(t, c // 3, 3) @ r.T).reshape(t, c))


def _per_channel_gain(w: Window, rng: np.random.Generator, low: float, high: float) -> Window:
    return w.with_data(w.data * rng.uniform(low, high, size=(1, w.channels)))


def scale(w: Window, rng: np.random.Generator) -> Window:
    return _per_channel_gain(w, rng, *SCALE_RANGE)


def magnify(w: Window, rng: np.random.Generator) -> Window:
    return _per_channel_gain(w, rng, *MAGNIFY_RANGE)


def invert(w: Window, rng: np.random.Generator | None = None) -> Window:
    return w.with_data(-w.data)


def reverse(w: Window, rng: np.random.Generator | None = None) -> Window:
    return w.with_data(w.data[::-1].copy())
