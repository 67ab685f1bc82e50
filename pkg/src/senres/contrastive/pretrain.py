"""SimCLR- and MoCo-style pretraining loops."""

from __future__ import annotations

import math
import os
import time
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from senres import encoder as enc
from senres.augment import AugmentSpec, apply_batch
from senres.contrastive.losses import info_nce, nt_xent
from senres.contrastive.moco import Queue, momentum_update
from senres.dataset import WindowSet, dumps_swnd
from senres.encoder import EncoderConfig, ProjectionConfig
from senres.errors import ConfigError, DivergenceError, InvalidParamsError
from senres.manifest import RunManifest, sha256_bytes
from senres.tensor import Adam, Tape, Tensor, ops, save_params

FRAMEWORKS = ("simclr", "moco")
DEFAULT_TEMPERATURE = {"simclr": 0.1, "moco": 0.07}
DEFAULT_BATCH = {"simclr": 2048, "moco": 1024}
DEFAULT_PROJECTION = {"simclr": list(enc.SIMCLR_PROJECTION), "moco": list(enc.MOCO_PROJECTION)}
DEFAULT_AUGMENTATION = {"kind": "resample", "params": {"draw_policy": "random"}}

# Laptop-sized settings: a narrower encoder, smaller batches and queue, fewer epochs.
DESK_ENCODER = EncoderConfig(conv_layers=2, filters=16, kernel_size=5, lstm_layers=1, hidden=32,
                             dropout=0.0, pool=4)
DESK = {
    "simclr": {"batch_size": 128, "epochs": 50, "lr": 5e-3},
    "moco": {"batch_size": 64, "epochs": 50, "K": 512, "momentum": 0.99, "lr": 3e-3},
}


def _spec(x) -> AugmentSpec | None:
    if x is None or isinstance(x, AugmentSpec):
        return x
    return AugmentSpec.from_dict(x)


@dataclass
class PretrainConfig:
    framework: str = "simclr"
    aug1: Any = None
    aug2: Any = field(default_factory=lambda: dict(DEFAULT_AUGMENTATION))
    temperature: float | None = None
    batch_size: int | None = None
    epochs: int = 200
    lr: float = 1e-3
    K: int = 8192
    momentum: float = 0.999
    seed: int = 0
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    projection: list[int] | None = None
    dtype: str = "float64"
    checkpoint_every: int = 0
    checkpoint_dir: str | None = None

    def __post_init__(self):
        if self.framework not in FRAMEWORKS:
            raise ConfigError(f"framework must be one of {FRAMEWORKS}, got {self.framework!r}")
        if isinstance(self.encoder, dict):
            self.encoder = EncoderConfig.from_dict(self.encoder)
        try:
            self.aug1 = _spec(self.aug1)
            self.aug2 = _spec(self.aug2)
        except InvalidParamsError as e:
            raise ConfigError(f"invalid augmentation: {e}") from None
        if self.temperature is None:
            self.temperature = DEFAULT_TEMPERATURE[self.framework]
        if self.batch_size is None:
            self.batch_size = DEFAULT_BATCH[self.framework]
        if self.projection is None:
            self.projection = list(DEFAULT_PROJECTION[self.framework])
        self.validate()

    def validate(self) -> None:
        if not self.temperature > 0:
            raise ConfigError(f"temperature must be positive, got {self.temperature}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.framework == "simclr" and self.batch_size < 2:
            raise ConfigError("simclr needs a batch of at least 2")
        if self.batch_size < 1 or self.epochs < 0 or self.K < 1 or not self.lr > 0:
            raise ConfigError("batch size, K and lr must be positive and epochs non-negative")
        if self.framework == "moco" and self.batch_size > self.K:
            raise ConfigError(f"moco batch {self.batch_size} exceeds queue size K={self.K}")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"dtype must be float32 or float64, got {self.dtype!r}")

    @classmethod
    def for_profile(cls, framework: str, profile: str = "paper", **overrides) -> "PretrainConfig":
        if profile == "paper":
            base: dict[str, Any] = {}
        elif profile == "desk":
            base = dict(DESK[framework], encoder=DESK_ENCODER, dtype="float32")
        else:
            raise ConfigError(f"unknown profile {profile!r}")
        base.update({k: v for k, v in overrides.items() if v is not None})
        return cls(framework=framework, **base)

    def to_dict(self) -> dict:
        return {
            "framework": self.framework,
            "aug1": None if self.aug1 is None else self.aug1.to_dict(),
            "aug2": None if self.aug2 is None else self.aug2.to_dict(),
            "temperature": self.temperature, "batch_size": self.batch_size, "epochs": self.epochs,
            "lr": self.lr, "K": self.K, "momentum": self.momentum, "seed": self.seed,
            "encoder": self.encoder.to_dict(), "projection": list(self.projection), "dtype": self.dtype,
            "checkpoint_every": self.checkpoint_every, "checkpoint_dir": self.checkpoint_dir,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PretrainConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown pretraining fields {sorted(unknown)}")
        return cls(**d)


def _stack_pairs(v1: np.ndarray, v2: np.ndarray) -> np.ndarray:
    """Interleave two view batches so rows (2k, 2k+1) are the views of sample k."""
    b = v1.shape[0]
    return np.stack([v1, v2], axis=1).reshape((2 * b,) + v1.shape[1:])


def simclr_loss(params, enc_cfg: EncoderConfig, proj_cfg: ProjectionConfig, v1, v2, tau: float,
                training: bool = False, rng=None) -> Tensor:
    """Both views go through the encoder as one 2N batch."""
    h = enc.encode(_stack_pairs(v1, v2), params, enc_cfg, training, rng)
    return nt_xent(enc.project(h, params, proj_cfg), tau)


def embed(params, enc_cfg: EncoderConfig, proj_cfg: ProjectionConfig, x, training: bool = False, rng=None) -> Tensor:
    return ops.l2_normalize(enc.project(enc.encode(x, params, enc_cfg, training, rng), params, proj_cfg))


def moco_loss(theta, xi, enc_cfg: EncoderConfig, proj_cfg: ProjectionConfig, v1, v2, queue, tau: float,
              training: bool = False, rng=None) -> tuple[Tensor, np.ndarray]:
    """Returns the InfoNCE loss and the keys to enqueue afterwards.

    The key encoder always runs in inference mode (no dropout).
    """
    keys = embed(xi, enc_cfg, proj_cfg, v2).data
    q = embed(theta, enc_cfg, proj_cfg, v1, training, rng)
    return info_nce(q, keys, queue, tau), keys


class _Trainer:
    def __init__(self, data: WindowSet, cfg: PretrainConfig):
        self.data = data
        self.cfg = cfg
        self.dtype = np.dtype(cfg.dtype)
        self.proj_cfg = ProjectionConfig(list(cfg.projection))
        rng = np.random.default_rng(cfg.seed)
        params = enc.init_encoder(cfg.encoder, data.channels, rng)
        params.update(enc.init_projection(self.proj_cfg, cfg.encoder.hidden, rng))
        enc.cast(params, self.dtype)
        for t in params.values():
            t.requires_grad = True
        self.params = params
        self.init_encoder = enc.clone(enc.select(params, enc.ENCODER_PREFIX))
        self.opt = Adam(params, lr=cfg.lr)
        self.notes: list[str] = []
        self.steps = 0
        if cfg.framework == "moco":
            self.xi = enc.clone(params)
            self.queue = Queue(cfg.K, self.proj_cfg.out_dim, dtype=self.dtype)

    def views(self, idx: np.ndarray, epoch: int) -> tuple[np.ndarray, np.ndarray]:
        x = self.data.data[idx]
        n = len(self.data)
        out = []
        for branch, spec in enumerate((self.cfg.aug1, self.cfg.aug2)):
            streams = (epoch * 2 + branch) * n + idx
            out.append(np.asarray(apply_batch(spec, x, self.cfg.seed, streams), dtype=self.dtype))
        return out[0], out[1]

    def batches(self, epoch: int) -> list[np.ndarray]:
        n = len(self.data)
        order = np.random.default_rng([self.cfg.seed, epoch]).permutation(n)
        b = self.cfg.batch_size
        if self.cfg.framework == "simclr":
            b = min(b, n)
            return [order[i:i + b] for i in range(0, n - b + 1, b)]
        return [order[i:i + b] for i in range(0, n, b)]

    def step(self, idx: np.ndarray, epoch: int, rng: np.random.Generator) -> float | None:
        cfg = self.cfg
        v1, v2 = self.views(idx, epoch)
        training = cfg.encoder.dropout > 0
        if cfg.framework == "moco" and len(self.queue) == 0:
            # nothing to contrast against yet: only seed the queue
            self.queue.push(embed(self.xi, cfg.encoder, self.proj_cfg, v2).data)
            self.notes.append(f"epoch {epoch}: first batch only filled the queue")
            return None
        self.opt.zero_grad()
        with Tape() as tape:
            if cfg.framework == "simclr":
                loss = simclr_loss(self.params, cfg.encoder, self.proj_cfg, v1, v2, cfg.temperature, training, rng)
            else:
                loss, keys = moco_loss(self.params, self.xi, cfg.encoder, self.proj_cfg, v1, v2, self.queue,
                                       cfg.temperature, training, rng)
        value = float(loss.data)
        if not math.isfinite(value):
            raise DivergenceError(epoch)
        tape.backward(loss)
        self.opt.step()
        if cfg.framework == "moco":
            momentum_update(self.params, self.xi, cfg.momentum)
            self.queue.push(keys)
        self.steps += 1
        return value


def pretrain(data: WindowSet, cfg: PretrainConfig,
             on_epoch: Callable[[int, float], None] | None = None):
    """Contrastive pretraining; returns (encoder params, RunManifest).

    Projection heads are dropped from the result.  Non-finite losses raise
    :class:`DivergenceError` carrying the epoch number.
    """
    if len(data) == 0:
        raise ConfigError("pretraining needs a non-empty window set")
    if cfg.framework == "simclr" and len(data) < 2:
        raise ConfigError("simclr needs at least two windows")
    t0 = time.perf_counter()
    tr = _Trainer(data, cfg)
    if cfg.framework == "simclr" and cfg.batch_size > len(data):
        tr.notes.append(f"batch size reduced to the {len(data)} available windows")
    losses: list[float] = []
    for epoch in range(cfg.epochs):
        rng = np.random.default_rng([cfg.seed, epoch, 1])
        values = [v for v in (tr.step(idx, epoch, rng) for idx in tr.batches(epoch)) if v is not None]
        losses.append(float(np.mean(values)) if values else float("nan"))
        if on_epoch is not None:
            on_epoch(epoch, losses[-1])
        if cfg.checkpoint_every and cfg.checkpoint_dir and (epoch + 1) % cfg.checkpoint_every == 0:
            os.makedirs(cfg.checkpoint_dir, exist_ok=True)
            save_params(enc.select(tr.params, enc.ENCODER_PREFIX),
                        os.path.join(cfg.checkpoint_dir, f"epoch{epoch + 1:04d}.sprm"))
    encoder_params = enc.clone(enc.select(tr.params, enc.ENCODER_PREFIX))
    manifest = RunManifest(
        kind="pretrain",
        method=cfg.framework,
        config=cfg.to_dict(),
        seed=cfg.seed,
        epoch_losses=losses,
        wall_clock_s=time.perf_counter() - t0,
        artifacts={"data": sha256_bytes(dumps_swnd(data))},
        notes=tr.notes[:5],
        extra={"steps": tr.steps, "windows": len(data)},
    )
    return encoder_params, manifest
