"""CSV recordings described by a JSON schema (MotionSense-style exports).

Example schema::

    {
      "channels": {"userAcceleration.x": "acc_x", "userAcceleration.y": "acc_y",
                   "userAcceleration.z": "acc_z", "rotationRate.x": "gyro_x",
                   "rotationRate.y": "gyro_y", "rotationRate.z": "gyro_z"},
      "path_pattern": "(?P<activity>[a-z]+)_\\\\d+/sub_(?P<subject>\\\\d+)\\\\.csv",
      "classes": ["dws", "ups", "wlk", "jog", "sit", "std"],
      "sample_rate_hz": 50
    }

``subject_column`` / ``activity_column`` may replace the path pattern; the
column value must then be constant within a file.
"""

from __future__ import annotations

import csv
import json
import os
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from senres.dataset.windows import CANONICAL_CHANNELS, Recording
from senres.errors import ParseError, SchemaError


@dataclass
class CsvSchema:
    channels: dict[str, str]
    subject_column: str | None = None
    activity_column: str | None = None
    path_pattern: str | None = None
    classes: list[str] | None = None
    sample_rate_hz: float | None = None
    delimiter: str = ","
    glob: str = "**/*.csv"
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict) -> "CsvSchema":
        known = {"channels", "subject_column", "activity_column", "path_pattern", "classes",
                 "sample_rate_hz", "delimiter", "glob"}
        if "channels" not in d:
            raise SchemaError("schema needs a 'channels' mapping")
        schema = cls(**{k: v for k, v in d.items() if k in known},
                     extra={k: v for k, v in d.items() if k not in known})
        schema.validate()
        return schema

    @classmethod
    def load(cls, path) -> "CsvSchema":
        try:
            with open(path) as f:
                return cls.from_dict(json.load(f))
        except json.JSONDecodeError as e:
            raise ParseError(e.msg, os.fspath(path), e.lineno) from None

    def validate(self) -> None:
        targets = sorted(self.channels.values())
        if targets != sorted(CANONICAL_CHANNELS):
            raise SchemaError(f"channels must map onto exactly {list(CANONICAL_CHANNELS)}, got {targets}")
        if self.activity_column is None and (self.path_pattern is None or "(?P<activity>" not in self.path_pattern):
            raise SchemaError("schema needs an activity column or a path pattern with an 'activity' group")
        if self.path_pattern is not None:
            try:
                re.compile(self.path_pattern)
            except re.error as e:
                raise SchemaError(f"bad path pattern: {e}") from None

    def columns_in_order(self) -> list[str]:
        by_target = {v: k for k, v in self.channels.items()}
        return [by_target[c] for c in CANONICAL_CHANNELS]


def _meta_from_path(schema: CsvSchema, rel: str) -> dict[str, str]:
    if schema.path_pattern is None:
        return {}
    m = re.search(schema.path_pattern, rel)
    if m is None:
        raise SchemaError(f"path {rel!r} does not match the schema path pattern")
    return {k: v for k, v in m.groupdict().items() if v is not None}


def _read_one(path: Path, rel: str, schema: CsvSchema) -> tuple[np.ndarray, dict[str, str]]:
    meta = _meta_from_path(schema, rel)
    cols = schema.columns_in_order()
    with open(path, newline="") as f:
        reader = csv.reader(f, delimiter=schema.delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file", os.fspath(path), 1) from None
        header = [h.strip() for h in header]
        wanted = list(cols)
        for key in ("subject_column", "activity_column"):
            name = getattr(schema, key)
            if name is not None:
                wanted.append(name)
        missing = [c for c in wanted if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing columns {missing}")
        idx = [header.index(c) for c in cols]
        meta_idx = {key: header.index(getattr(schema, f"{key}_column"))
                    for key in ("subject", "activity") if getattr(schema, f"{key}_column") is not None}
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not x.strip() for x in row):
                continue
            if len(row) < len(header):
                raise ParseError(f"expected {len(header)} fields, found {len(row)}", os.fspath(path), lineno)
            values = []
            for j in idx:
                try:
                    v = float(row[j])
                except ValueError:
                    raise ParseError(f"non-numeric value {row[j]!r} in column {header[j]!r}",
                                     os.fspath(path), lineno) from None
                if not np.isfinite(v):
                    raise ParseError(f"non-finite value in column {header[j]!r}", os.fspath(path), lineno)
                values.append(v)
            for key, j in meta_idx.items():
                value = row[j].strip()
                if key in meta and meta[key] != value:
                    raise ParseError(f"{key} changes within a file ({meta[key]!r} -> {value!r})",
                                     os.fspath(path), lineno)
                meta[key] = value
            rows.append(values)
    return np.array(rows, dtype=np.float64).reshape(-1, len(cols)), meta


def load_csv_recordings(root, schema) -> list[Recording]:
    """One :class:`Recording` per CSV file under ``root``, in sorted path order."""
    if not isinstance(schema, CsvSchema):
        schema = CsvSchema.load(schema) if isinstance(schema, (str, os.PathLike)) else CsvSchema.from_dict(schema)
    root = Path(root)
    if not root.is_dir():
        raise ParseError("dataset directory not found", os.fspath(root))
    files = sorted(p for p in root.glob(schema.glob) if p.is_file())
    if not files:
        raise ParseError("no CSV files found", os.fspath(root))
    raw = []
    for p in files:
        rel = p.relative_to(root).as_posix()
        data, meta = _read_one(p, rel, schema)
        if "activity" not in meta:
            raise SchemaError(f"{rel}: could not determine the activity")
        raw.append((rel, data, meta))
    classes = schema.classes or sorted({m["activity"] for _, _, m in raw})
    recs = []
    for rel, data, meta in raw:
        act = meta["activity"]
        if act not in classes:
            raise SchemaError(f"{rel}: activity {act!r} not in the class table {classes}")
        try:
            subject = int(meta.get("subject", -1))
        except ValueError:
            raise SchemaError(f"{rel}: subject id {meta['subject']!r} is not an integer") from None
        recs.append(Recording(subject, classes.index(act), data, schema.sample_rate_hz, act, rel))
    return recs


def class_table(recs: list[Recording], schema) -> list[str]:
    if not isinstance(schema, CsvSchema):
        schema = CsvSchema.load(schema) if isinstance(schema, (str, os.PathLike)) else CsvSchema.from_dict(schema)
    return list(schema.classes or sorted({r.activity for r in recs}))
