"""DeepConvLSTM encoder, projection heads and the linear classifier.

Parameters live in a flat ``dict[str, Tensor]`` keyed by dotted names:

    enc.conv{i}.weight (k, Cin, Cout)    enc.conv{i}.bias (Cout,)
    enc.lstm{j}.w_x    (D, 4H)           enc.lstm{j}.w_h  (H, 4H)   enc.lstm{j}.bias (4H,)
    proj.{i}.weight    (in, out)         proj.{i}.bias    (out,)
    cls.weight         (R, classes)      cls.bias         (classes,)

LSTM gates are packed (input, forget, candidate, output).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from senres.errors import ShapeError
from senres.tensor import Tensor, ops

ModelParams = dict  # dict[str, Tensor]

ENCODER_PREFIX = "enc."
PROJECTION_PREFIX = "proj."
CLASSIFIER_PREFIX = "cls."


@dataclass
class EncoderConfig:
    conv_layers: int = 4
    filters: int = 64
    kernel_size: int = 5
    lstm_layers: int = 2
    hidden: int = 128
    dropout: float = 0.5
    # Mean-pool factor between the conv stack and the LSTM; 1 disables it.
    pool: int = 1

    def __post_init__(self):
        for name in ("conv_layers", "filters", "kernel_size", "lstm_layers", "hidden", "pool"):
            if getattr(self, name) < (0 if name == "conv_layers" else 1):
                raise ValueError(f"EncoderConfig.{name} must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("EncoderConfig.dropout must be in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "EncoderConfig":
        return cls(**d)

    def output_length(self, window_len: int) -> int:
        t = window_len - self.conv_layers * (self.kernel_size - 1)
        return t // self.pool if t > 0 else 0


@dataclass
class ProjectionConfig:
    dims: list[int] = field(default_factory=lambda: [256, 128, 50])

    def __post_init__(self):
        if not self.dims or any(d <= 0 for d in self.dims):
            raise ValueError("ProjectionConfig.dims needs at least one positive width")

    @property
    def out_dim(self) -> int:
        return self.dims[-1]

    def to_dict(self) -> dict:
        return asdict(self)


SIMCLR_PROJECTION = (256, 128, 50)
MOCO_PROJECTION = (256, 128)


def _glorot(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_encoder(config: EncoderConfig, in_channels: int, rng: np.random.Generator) -> ModelParams:
    params: ModelParams = {}
    cin = in_channels
    k = config.kernel_size
    for i in range(config.conv_layers):
        params[f"enc.conv{i}.weight"] = Tensor(_glorot(rng, (k, cin, config.filters), k * cin, k * config.filters))
        params[f"enc.conv{i}.bias"] = Tensor(np.zeros(config.filters))
        cin = config.filters
    d, hd = cin, config.hidden
    for j in range(config.lstm_layers):
        bias = np.zeros(4 * hd)
        bias[hd:2 * hd] = 1.0  # forget gate starts open
        params[f"enc.lstm{j}.w_x"] = Tensor(_glorot(rng, (d, 4 * hd), d, 4 * hd))
        params[f"enc.lstm{j}.w_h"] = Tensor(_glorot(rng, (hd, 4 * hd), hd, 4 * hd))
        params[f"enc.lstm{j}.bias"] = Tensor(bias)
        d = hd
    return params


def init_projection(config: ProjectionConfig, in_dim: int, rng: np.random.Generator) -> ModelParams:
    params: ModelParams = {}
    d = in_dim
    for i, width in enumerate(config.dims):
        params[f"proj.{i}.weight"] = Tensor(_glorot(rng, (d, width), d, width))
        params[f"proj.{i}.bias"] = Tensor(np.zeros(width))
        d = width
    return params


def init_classifier(in_dim: int, num_classes: int, rng: np.random.Generator) -> ModelParams:
    return {
        "cls.weight": Tensor(_glorot(rng, (in_dim, num_classes), in_dim, num_classes)),
        "cls.bias": Tensor(np.zeros(num_classes)),
    }


def select(params: ModelParams, prefix: str) -> ModelParams:
    return {k: v for k, v in params.items() if k.startswith(prefix)}


def clone(params: ModelParams, dtype=None) -> ModelParams:
    return {k: Tensor(v.data.copy() if dtype is None else v.data.astype(dtype)) for k, v in params.items()}


def cast(params: ModelParams, dtype) -> ModelParams:
    """Convert parameters in place (e.g. to float32 for faster training)."""
    for t in params.values():
        t.data = np.asarray(t.data, dtype=dtype, order="C")
        t.grad = None
    return params


def parameter_count(params: ModelParams) -> int:
    return int(np.sum([t.data.size for t in params.values()]))


def encode(batch, params: ModelParams, config: EncoderConfig, training: bool = False,
           rng: np.random.Generator | None = None) -> Tensor:
    """(B, T, C) windows -> (B, hidden) final LSTM hidden state."""
    x = batch if isinstance(batch, Tensor) else Tensor(batch, dtype=params["enc.lstm0.w_x"].dtype)
    if x.ndim != 3:
        raise ShapeError(f"encode expects (B, T, C), got {x.shape}")
    if config.output_length(x.shape[1]) < 1:
        raise ShapeError(f"window length {x.shape[1]} too short for the encoder configuration")
    for i in range(config.conv_layers):
        x = ops.relu(ops.conv1d(x, params[f"enc.conv{i}.weight"], params[f"enc.conv{i}.bias"]))
    if config.pool > 1:
        x = ops.avg_pool1d(x, config.pool)
    for j in range(config.lstm_layers):
        if j > 0 and training and config.dropout > 0:
            if rng is None:
                raise ValueError("training-mode dropout needs an rng")
            x = ops.dropout(x, config.dropout, rng)
        x = ops.lstm(x, params[f"enc.lstm{j}.w_x"], params[f"enc.lstm{j}.w_h"], params[f"enc.lstm{j}.bias"])
    return ops.index(x, (slice(None), -1, slice(None)))


def project(h, params: ModelParams, config: ProjectionConfig) -> Tensor:
    """MLP head: ReLU between layers, linear output."""
    n = len(config.dims)
    for i in range(n):
        w = params[f"proj.{i}.weight"]
        if h.shape[-1] != w.shape[0]:
            raise ShapeError(f"projection layer {i}: input width {h.shape[-1]} != {w.shape[0]}")
        h = ops.add(ops.matmul(h, w), params[f"proj.{i}.bias"])
        if i < n - 1:
            h = ops.relu(h)
    return h


def classify(h, params: ModelParams) -> Tensor:
    w = params["cls.weight"]
    if h.shape[-1] != w.shape[0]:
        raise ShapeError(f"classifier input width {h.shape[-1]} != {w.shape[0]}")
    return ops.add(ops.matmul(h, w), params["cls.bias"])
