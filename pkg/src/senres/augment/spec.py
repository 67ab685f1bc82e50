"""Declarative augmentation specs and their application."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from senres.augment import transforms
from senres.augment.resample import ResampleParams, draw_linear, resample, resample_linear_batch
from senres.augment.window import Window, window_rng
from senres.errors import InvalidParamsError

KINDS = ("noise", "rotate", "scale", "magnify", "invert", "reverse", "resample", "compose")
MAX_DEPTH = 4

_RESAMPLE_KEYS = {"M", "N", "interpolation", "mode", "draw_policy"}


@dataclass
class AugmentSpec:
    kind: str
    params: dict[str, Any] = field(default_factory=dict)
    children: list["AugmentSpec"] = field(default_factory=list)

    def __post_init__(self):
        self.validate()

    def validate(self, depth: int = 1) -> None:
        if self.kind not in KINDS:
            raise InvalidParamsError(f"unknown augmentation kind {self.kind!r}")
        if self.kind == "compose":
            if depth > MAX_DEPTH:
                raise InvalidParamsError(f"compose nested deeper than {MAX_DEPTH}")
            if len(self.children) < 2:
                raise InvalidParamsError("compose needs at least two children")
            for child in self.children:
                child.validate(depth + 1)
        elif self.children:
            raise InvalidParamsError(f"{self.kind} takes no children")
        if self.kind == "resample":
            unknown = set(self.params) - _RESAMPLE_KEYS
            if unknown:
                raise InvalidParamsError(f"unknown resample parameters {sorted(unknown)}")
            ResampleParams(**self.params)
        elif self.kind == "noise":
            if set(self.params) - {"bound"}:
                raise InvalidParamsError(f"unknown noise parameters {sorted(self.params)}")
        elif self.kind != "compose" and self.params:
            raise InvalidParamsError(f"{self.kind} takes no parameters")

    @property
    def name(self) -> str:
        if self.kind == "compose":
            return "+".join(c.name for c in self.children)
        return self.kind

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"kind": self.kind, "params": dict(self.params)}
        if self.children:
            d["children"] = [c.to_dict() for c in self.children]
        return d

    @classmethod
    def from_dict(cls, d: dict | str | None) -> "AugmentSpec | None":
        if d is None:
            return None
        if isinstance(d, str):
            return parse(d)
        if "kind" not in d:
            raise InvalidParamsError("augmentation entry needs a 'kind'")
        children = [cls.from_dict(c) for c in d.get("children", [])]
        return cls(d["kind"], dict(d.get("params") or {}), children)


def parse(text: str) -> AugmentSpec | None:
    """Short form: ``"resample"``, ``"resample+rotate"``, ``"identity"``."""
    parts = [p.strip() for p in text.split("+") if p.strip()]
    if parts == ["identity"] or parts == ["none"]:
        return None
    specs = [AugmentSpec(p) for p in parts]
    if len(specs) == 1:
        return specs[0]
    return AugmentSpec("compose", children=specs)


def apply(spec: AugmentSpec | None, w: Window, rng: np.random.Generator) -> Window:
    """Apply ``spec`` to one window; ``None`` is the identity."""
    if spec is None:
        return w
    kind = spec.kind
    if kind == "compose":
        for child in spec.children:
            w = apply(child, w, rng)
        return w
    if kind == "resample":
        return resample(w, ResampleParams(**spec.params), rng)
    if kind == "noise":
        return transforms.noise(w, rng, **spec.params)
    return getattr(transforms, kind)(w, rng)


def apply_batch(spec: AugmentSpec | None, batch: np.ndarray, seed: int, streams) -> np.ndarray:
    """Augment a (B, T, C) array; window ``b`` uses the stream ``streams[b]``."""
    if spec is None:
        return batch
    if spec.kind == "resample":
        p = ResampleParams(**spec.params)
        if p.interpolation == "linear":
            t = batch.shape[1]
            draws = [draw_linear(p, t, window_rng(seed, int(s))) for s in streams]
            return resample_linear_batch(batch, draws)
    out = np.empty(batch.shape, dtype=np.float64)
    for b, stream in enumerate(streams):
        out[b] = apply(spec, Window(batch[b]), window_rng(seed, int(stream))).data
    return out
