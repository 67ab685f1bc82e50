"""Supervised baseline, linear evaluation and fine-tuning, with the repetition protocol."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from functools import partial
from typing import Any

import numpy as np

from senres import encoder as enc
from senres.augment import AugmentSpec, apply_batch
from senres.dataset import SplitSpec, WindowSet, dumps_swnd, split
from senres.encoder import EncoderConfig
from senres.errors import ConfigError, DivergenceError, FormatError, InvalidParamsError
from senres.eval.metrics import mean_f1
from senres.manifest import RunManifest, sha256_bytes
from senres.parallel import parallel_map
from senres.tensor import Adam, Tape, Tensor, dumps_params, ops

PROTOCOLS = ("supervised", "linear", "finetune")
DEFAULT_LR = {"supervised": 5e-4, "linear": 1e-2, "finetune": 5e-4}


def batch_size_for(fraction: float) -> int:
    """50 / 500 / 1000 for the 1% / 10% / 60% label budgets; nearest band otherwise."""
    if fraction <= 0.05:
        return 50
    if fraction <= 0.3:
        return 500
    return 1000


def derived_seed(*parts: int) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


@dataclass
class EvalConfig:
    protocol: str = "linear"
    label_fraction: float = 0.01
    batch_size: int | None = None
    epochs: int = 200
    lr: float | None = None
    augment_times: int = 0
    aug: Any = None
    repetitions: int = 10
    seed: int = 0
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    dtype: str = "float64"
    stratified: bool = True
    by_subject: bool = False
    normalize: bool = False

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise ConfigError(f"protocol must be one of {PROTOCOLS}, got {self.protocol!r}")
        if isinstance(self.encoder, dict):
            self.encoder = EncoderConfig.from_dict(self.encoder)
        if self.aug is not None and not isinstance(self.aug, AugmentSpec):
            try:
                self.aug = AugmentSpec.from_dict(self.aug)
            except InvalidParamsError as e:
                raise ConfigError(f"invalid augmentation: {e}") from None
        if not 0.0 < self.label_fraction < 1.0:
            raise ConfigError(f"label fraction must be in (0, 1), got {self.label_fraction}")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be at least 1")
        if self.batch_size is None:
            self.batch_size = batch_size_for(self.label_fraction)
        if self.lr is None:
            self.lr = DEFAULT_LR[self.protocol]
        if self.batch_size < 1 or self.epochs < 0 or self.augment_times < 0 or not self.lr > 0:
            raise ConfigError("batch size and lr must be positive; epochs and augment_times non-negative")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"dtype must be float32 or float64, got {self.dtype!r}")

    def to_dict(self) -> dict:
        return {
            "protocol": self.protocol, "label_fraction": self.label_fraction, "batch_size": self.batch_size,
            "epochs": self.epochs, "lr": self.lr, "augment_times": self.augment_times,
            "aug": None if self.aug is None else self.aug.to_dict(), "repetitions": self.repetitions,
            "seed": self.seed, "encoder": self.encoder.to_dict(), "dtype": self.dtype,
            "stratified": self.stratified, "by_subject": self.by_subject, "normalize": self.normalize,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown evaluation fields {sorted(unknown)}")
        return cls(**d)


def check_encoder(params, config: EncoderConfig, in_channels: int) -> None:
    """Raise FormatError unless ``params`` has exactly the expected encoder tensors."""
    expected = enc.init_encoder(config, in_channels, np.random.default_rng(0))
    got = enc.select(params, enc.ENCODER_PREFIX)
    if set(got) != set(expected):
        raise FormatError(f"encoder tensors do not match the configuration: {sorted(set(got) ^ set(expected))}")
    for name, t in expected.items():
        if got[name].shape != t.shape:
            raise FormatError(f"{name}: checkpoint shape {got[name].shape} != expected {t.shape}")


def encode_in_batches(params, config: EncoderConfig, x: np.ndarray, batch: int = 512) -> np.ndarray:
    """Inference-mode features, computed without a tape."""
    dtype = params["enc.lstm0.w_x"].dtype
    if len(x) == 0:
        return np.zeros((0, config.hidden), dtype=dtype)
    return np.concatenate([enc.encode(np.asarray(x[i:i + batch], dtype=dtype), params, config).data
                           for i in range(0, len(x), batch)])


def predict(params, config: EncoderConfig, x: np.ndarray, batch: int = 512) -> np.ndarray:
    h = encode_in_batches(params, config, x, batch)
    return np.argmax(enc.classify(Tensor(h), params).data, axis=1)


def expand_with_augmentation(ws: WindowSet, aug: AugmentSpec | None, times: int, seed: int) -> WindowSet:
    """Original windows followed by ``times`` augmented copies of each."""
    if aug is None or times == 0:
        return ws
    n = len(ws)
    parts = [ws.data]
    for k in range(times):
        parts.append(apply_batch(aug, ws.data, seed, np.arange(n) + (k + 1) * n))
    return ws.with_data(np.concatenate(parts), np.tile(ws.labels, times + 1), augment_times=times)


def _normalizer(train: np.ndarray):
    mu = train.mean(axis=(0, 1), keepdims=True)
    sd = train.std(axis=(0, 1), keepdims=True)
    sd = np.where(sd > 0, sd, 1.0)
    return lambda x: (x - mu) / sd


def _fit(params, trainable: list[str], loss_fn, n: int, cfg: EvalConfig, seed: int) -> list[float]:
    """Mini-batch Adam over ``trainable``; ``loss_fn(idx, rng)`` builds the loss."""
    for name, t in params.items():
        t.requires_grad = name in trainable
    opt = Adam([params[k] for k in trainable], lr=cfg.lr)
    losses = []
    b = min(cfg.batch_size, n)
    for epoch in range(cfg.epochs):
        rng = np.random.default_rng([seed, epoch])
        order = rng.permutation(n)
        total = 0.0
        for i in range(0, n, b):
            idx = order[i:i + b]
            opt.zero_grad()
            with Tape() as tape:
                loss = loss_fn(idx, rng)
            value = float(loss.data)
            if not math.isfinite(value):
                raise DivergenceError(epoch)
            tape.backward(loss)
            opt.step()
            total += value * len(idx)
        losses.append(total / n)
    for t in params.values():
        t.requires_grad = False
        t.grad = None
    return losses


def _head(in_dim: int, num_classes: int, seed: int, dtype) -> dict:
    return enc.cast(enc.init_classifier(in_dim, num_classes, np.random.default_rng([seed, 1])), dtype)


def _train_full(params, train: WindowSet, cfg: EvalConfig, seed: int) -> list[float]:
    """Encoder and head trained together (supervised and fine-tuning)."""
    dtype = np.dtype(cfg.dtype)
    x = np.asarray(train.data, dtype=dtype)
    y = train.labels
    training = cfg.encoder.dropout > 0

    def loss_fn(idx, rng):
        h = enc.encode(x[idx], params, cfg.encoder, training, rng)
        return ops.cross_entropy(enc.classify(h, params), y[idx])

    return _fit(params, list(params), loss_fn, len(train), cfg, seed)


def train_supervised(train: WindowSet, cfg: EvalConfig, aug: AugmentSpec | None = None, seed: int | None = None):
    """Fresh encoder + linear head trained end to end with cross-entropy.

    With ``aug`` (or ``cfg.aug``) and ``cfg.augment_times = k`` the training
    set becomes the originals plus k augmented copies.
    """
    if len(train) == 0:
        raise ConfigError("supervised training needs a non-empty training set")
    counts = train.class_counts()
    if np.any(counts == 0):
        empty = [train.class_names[i] for i in np.flatnonzero(counts == 0)]
        raise ConfigError(f"classes without training windows: {empty}")
    seed = cfg.seed if seed is None else seed
    t0 = time.perf_counter()
    aug = aug if aug is not None else cfg.aug
    expanded = expand_with_augmentation(train, aug, cfg.augment_times, seed)
    dtype = np.dtype(cfg.dtype)
    rng = np.random.default_rng(seed)
    params = enc.cast(enc.init_encoder(cfg.encoder, train.channels, rng), dtype)
    params.update(_head(cfg.encoder.hidden, train.num_classes, seed, dtype))
    losses = _train_full(params, expanded, cfg, seed)
    manifest = RunManifest(kind="train", method="supervised", config=cfg.to_dict(), seed=seed,
                           epoch_losses=losses, wall_clock_s=time.perf_counter() - t0,
                           extra={"train_windows": len(expanded)})
    return params, manifest


def _prepare(encoder_params, cfg: EvalConfig, channels: int):
    check_encoder(encoder_params, cfg.encoder, channels)
    return enc.cast(enc.clone(enc.select(encoder_params, enc.ENCODER_PREFIX)), np.dtype(cfg.dtype))


def _linear_once(encoder_params, train: WindowSet, test: WindowSet, cfg: EvalConfig, seed: int):
    """Frozen encoder: features are computed once and only the head trains."""
    dtype = np.dtype(cfg.dtype)
    feats = encode_in_batches(encoder_params, cfg.encoder, np.asarray(train.data, dtype=dtype))
    head = _head(cfg.encoder.hidden, train.num_classes, seed, dtype)
    y = train.labels

    def loss_fn(idx, rng):
        return ops.cross_entropy(enc.classify(Tensor(feats[idx]), head), y[idx])

    losses = _fit(head, list(head), loss_fn, len(train), cfg, seed)
    test_feats = encode_in_batches(encoder_params, cfg.encoder, np.asarray(test.data, dtype=dtype))
    preds = np.argmax(enc.classify(Tensor(test_feats), head).data, axis=1)
    return mean_f1(preds, test.labels), losses


def _finetune_once(encoder_params, train: WindowSet, test: WindowSet, cfg: EvalConfig, seed: int):
    params = enc.clone(encoder_params)
    params.update(_head(cfg.encoder.hidden, train.num_classes, seed, np.dtype(cfg.dtype)))
    losses = _train_full(params, train, cfg, seed)
    return mean_f1(predict(params, cfg.encoder, np.asarray(test.data, dtype=params["cls.weight"].dtype)),
                   test.labels), losses


def _supervised_once(train: WindowSet, test: WindowSet, cfg: EvalConfig, seed: int):
    params, m = train_supervised(train, cfg, seed=seed)
    return mean_f1(predict(params, cfg.encoder, np.asarray(test.data, dtype=params["cls.weight"].dtype)),
                   test.labels), m.epoch_losses


def _repetition(data: WindowSet, cfg: EvalConfig, encoder_params, r: int):
    seed = derived_seed(cfg.seed, r)
    train, test = split(data, SplitSpec(cfg.label_fraction, seed, cfg.stratified, cfg.by_subject))
    notes = list(train.provenance.get("split", {}).get("warnings", []))
    if cfg.normalize:
        norm = _normalizer(np.asarray(train.data, dtype=np.float64))
        train = train.with_data(norm(train.data))
        test = test.with_data(norm(test.data))
    if cfg.protocol == "linear":
        score, losses = _linear_once(encoder_params, train, test, cfg, seed)
    elif cfg.protocol == "finetune":
        score, losses = _finetune_once(encoder_params, train, test, cfg, seed)
    else:
        score, losses = _supervised_once(train, test, cfg, seed)
    return score, losses, notes


def evaluate(data: WindowSet, cfg: EvalConfig, encoder_params=None, method: str | None = None,
             artifacts: dict | None = None, workers: int | None = 1) -> RunManifest:
    """Repetition protocol: every repetition draws a fresh split and scores the held-out part.

    ``label_fraction`` of the windows are labelled for training; the rest are
    the test set.  ``encoder_params`` is required for the linear and
    fine-tuning protocols.  Repetitions fan out over ``workers`` processes
    (``None`` reads ``SENRES_WORKERS``); scores do not depend on the count.
    """
    if cfg.protocol != "supervised":
        if encoder_params is None:
            raise ConfigError(f"the {cfg.protocol} protocol needs encoder parameters")
        encoder_params = _prepare(encoder_params, cfg, data.channels)
    t0 = time.perf_counter()
    results = parallel_map(partial(_repetition, data, cfg, encoder_params), range(cfg.repetitions), workers)
    scores = [r[0] for r in results]
    all_losses = [r[1] for r in results]
    notes = [n for r in results for n in r[2]]
    arts = {"data": sha256_bytes(dumps_swnd(data))}
    if encoder_params is not None:
        arts["encoder"] = sha256_bytes(dumps_params(encoder_params))
    arts.update(artifacts or {})
    manifest = RunManifest(
        kind="eval", method=method or cfg.protocol, config=cfg.to_dict(), seed=cfg.seed,
        epoch_losses=all_losses[0] if all_losses else [], scores=scores,
        wall_clock_s=time.perf_counter() - t0, artifacts=arts, notes=sorted(set(notes)),
        extra={"repetition_losses": all_losses},
    )
    manifest.validate()
    return manifest


def linear_evaluate(encoder_params, labeled: WindowSet, cfg: EvalConfig):
    """Mean test macro-F1 of a linear head on the frozen encoder, plus the manifest."""
    cfg = _with_protocol(cfg, "linear")
    m = evaluate(labeled, cfg, encoder_params)
    return float(np.mean(m.scores)), m


def fine_tune(encoder_params, labeled: WindowSet, cfg: EvalConfig):
    cfg = _with_protocol(cfg, "finetune")
    m = evaluate(labeled, cfg, encoder_params)
    return float(np.mean(m.scores)), m


def _with_protocol(cfg: EvalConfig, protocol: str) -> EvalConfig:
    if cfg.protocol == protocol:
        return cfg
    d = cfg.to_dict()
    d["protocol"] = protocol
    if cfg.lr == DEFAULT_LR[cfg.protocol]:
        d["lr"] = None
    return EvalConfig.from_dict(d)
