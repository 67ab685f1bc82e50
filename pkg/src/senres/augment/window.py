from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from senres.errors import InvalidParamsError


@dataclass(frozen=True, eq=False)
class Window:
    """A T x C block of sensor samples (channels 0-2 accelerometer, 3-5 gyroscope)."""

    data: np.ndarray
    label: int | None = None
    sample_rate_hz: float | None = None

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim == 1:
            data = data[:, None]
        if data.ndim != 2 or data.shape[0] < 2 or data.shape[1] < 1:
            raise InvalidParamsError(f"window must be T x C with T > 1, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise InvalidParamsError("window contains non-finite values")
        object.__setattr__(self, "data", data)

    @property
    def length(self) -> int:
        return self.data.shape[0]

    @property
    def channels(self) -> int:
        return self.data.shape[1]

    def with_data(self, data: np.ndarray) -> "Window":
        return replace(self, data=data)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Window):
            return NotImplemented
        return (self.label == other.label and self.sample_rate_hz == other.sample_rate_hz
                and self.data.shape == other.data.shape and np.array_equal(self.data, other.data))


def window_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Independent PCG64 stream for (seed, stream), e.g. stream = window index."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy=seed, spawn_key=(stream,))))
