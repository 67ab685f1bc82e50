"""Run manifests: the JSON record of a training or evaluation run."""

from __future__ import annotations

import hashlib
import json
import os
import platform
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np

from senres.errors import FormatError

SCHEMA_VERSION = 1


def sha256_bytes(blob: bytes) -> str:
    return hashlib.sha256(blob).hexdigest()


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _plain(x):
    """Make numpy scalars and arrays JSON-friendly."""
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.generic):
        return x.item()
    return x


@dataclass
class RunManifest:
    """Everything needed to audit or re-run one command.

    ``scores`` holds one test macro-F1 per repetition; pretraining runs
    leave it empty.  ``artifacts`` maps a role ("data", "checkpoint", ...)
    to a sha256 digest.
    """

    kind: str
    config: dict[str, Any]
    seed: int
    epoch_losses: list[float] = field(default_factory=list)
    scores: list[float] = field(default_factory=list)
    wall_clock_s: float = 0.0
    artifacts: dict[str, str] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)
    extra: dict[str, Any] = field(default_factory=dict)
    method: str | None = None

    def validate(self) -> None:
        reps = self.config.get("repetitions")
        if self.kind.startswith("eval") and reps is not None and len(self.scores) != reps:
            raise FormatError(f"manifest lists {len(self.scores)} scores but the config asks for {reps} repetitions")

    def to_dict(self) -> dict:
        d = _plain(asdict(self))
        d["schema_version"] = SCHEMA_VERSION
        d["python"] = platform.python_version()
        d["numpy"] = np.__version__
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "RunManifest":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise FormatError(f"unsupported manifest schema {d.get('schema_version')!r}")
        known = {f for f in cls.__dataclass_fields__}
        try:
            m = cls(**{k: v for k, v in d.items() if k in known})
        except TypeError as e:
            raise FormatError(f"malformed manifest: {e}") from None
        m.validate()
        return m

    def save(self, path) -> None:
        self.validate()
        tmp = f"{path}.tmp"
        with open(tmp, "w") as f:
            f.write(self.to_json() + "\n")
        os.replace(tmp, path)

    @classmethod
    def load(cls, path) -> "RunManifest":
        try:
            with open(path) as f:
                d = json.load(f)
        except json.JSONDecodeError as e:
            raise FormatError(f"{path}:{e.lineno}: {e.msg}") from None
        return cls.from_dict(d)
