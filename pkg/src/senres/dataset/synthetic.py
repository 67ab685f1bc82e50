"""Synthetic toy data: noisy multichannel sinusoids, one frequency band per class."""

from __future__ import annotations

import numpy as np

from senres.dataset.windows import WindowSet


def synthetic_sinusoids(per_class: int = 600, num_classes: int = 3, length: int = 128, channels: int = 6,
                        seed: int = 0, base_cycles: float = 1.5, ratio: float = 5.0,
                        freq_jitter: float = 0.1, noise: float = 1.0, amplitude_jitter: float = 0.0,
                        independent_phases: bool = False) -> WindowSet:
    """Class ``c`` oscillates at about ``base_cycles * ratio**c`` cycles per window.

    Each window draws a random phase and a frequency jittered by up to
    ``freq_jitter`` (relative); i.i.d. uniform noise in [-noise, noise] is
    added.  Channel ``j`` has a fixed amplitude and phase offset so the
    channels are not identical copies.  ``amplitude_jitter`` and
    ``independent_phases`` add per-window channel gains and phases.

    With the default ratio the frequency bands stay disjoint under any
    time-scale factor in [1/4, 1], the range the resampling augmentation
    produces.
    """
    rng = np.random.default_rng(seed)
    n = per_class * num_classes
    labels = np.repeat(np.arange(num_classes), per_class)
    cycles = base_cycles * ratio ** labels * (1.0 + rng.uniform(-freq_jitter, freq_jitter, n))
    offsets = 2.0 * np.pi * np.arange(channels) / channels
    phase = rng.uniform(0.0, 2.0 * np.pi, (n, 1, 1 if not independent_phases else channels)) + offsets
    gains = 1.0 - 0.5 * np.arange(channels) / max(channels - 1, 1)
    amp = gains * rng.uniform(1.0 - amplitude_jitter, 1.0 + amplitude_jitter, (n, 1, channels))
    t = np.arange(length, dtype=np.float64)[None, :, None] / length
    data = amp * np.sin(2.0 * np.pi * cycles[:, None, None] * t + phase)
    data += rng.uniform(-noise, noise, data.shape)
    names = tuple(f"band{c}" for c in range(num_classes))
    prov = {"dataset": "synthetic", "seed": seed, "per_class": per_class, "window_len": length,
            "base_cycles": base_cycles, "ratio": ratio, "noise": noise}
    return WindowSet(data, labels, names, prov, np.zeros(n, dtype=np.int64))
