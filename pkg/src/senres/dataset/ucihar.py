"""Reader for the UCI-HAR "Inertial Signals" text files."""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from senres.dataset.windows import WindowSet, concat
from senres.errors import ParseError

CLASS_NAMES = ("WALKING", "WALKING_UPSTAIRS", "WALKING_DOWNSTAIRS", "SITTING", "STANDING", "LAYING")
# total acceleration is the raw accelerometer signal; body_acc has gravity filtered out
SIGNALS = ("total_acc_x", "total_acc_y", "total_acc_z", "body_gyro_x", "body_gyro_y", "body_gyro_z")
WINDOW_LEN = 128
SAMPLE_RATE_HZ = 50.0


def _parse_rows(path: Path, width: int | None, as_int: bool = False) -> np.ndarray:
    """Parse whitespace-separated numbers, one row per line, with located errors."""
    if not path.exists():
        raise ParseError("file not found", os.fspath(path))
    text = path.read_text()
    lines = text.splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines:
        return np.zeros((0, width or 1), dtype=np.int64 if as_int else np.float64)
    try:
        flat = np.loadtxt(lines, dtype=np.float64, ndmin=2)
    except ValueError:
        flat = None
    if flat is None or (width is not None and flat.shape[1] != width):
        # slow path only to locate the first offending line
        expected = width
        for lineno, ln in enumerate(lines, start=1):
            fields = ln.split()
            if expected is None:
                expected = len(fields)
            if len(fields) != expected:
                raise ParseError(f"expected {expected} values, found {len(fields)}", os.fspath(path), lineno)
            for f in fields:
                try:
                    float(f)
                except ValueError:
                    raise ParseError(f"not a number: {f!r}", os.fspath(path), lineno) from None
        raise ParseError("unparseable file", os.fspath(path))
    if not np.all(np.isfinite(flat)):
        bad = int(np.flatnonzero(~np.all(np.isfinite(flat), axis=1))[0]) + 1
        raise ParseError("non-finite value", os.fspath(path), bad)
    if as_int:
        if not np.all(flat == np.round(flat)):
            bad = int(np.flatnonzero(np.any(flat != np.round(flat), axis=1))[0]) + 1
            raise ParseError("expected an integer", os.fspath(path), bad)
        return flat.astype(np.int64)
    return flat


def load_partition(root, part: str) -> WindowSet:
    root = Path(root)
    base = root / part
    signals = []
    for name in SIGNALS:
        signals.append(_parse_rows(base / "Inertial Signals" / f"{name}_{part}.txt", WINDOW_LEN))
    labels_path = base / f"y_{part}.txt"
    labels = _parse_rows(labels_path, 1, as_int=True)[:, 0]
    subjects_path = base / f"subject_{part}.txt"
    subjects = _parse_rows(subjects_path, 1, as_int=True)[:, 0] if subjects_path.exists() else None
    n = len(labels)
    for name, sig in zip(SIGNALS, signals):
        if len(sig) != n:
            path = base / "Inertial Signals" / f"{name}_{part}.txt"
            raise ParseError(f"{len(sig)} windows but {n} labels", os.fspath(path), min(len(sig), n) + 1)
    if subjects is not None and len(subjects) != n:
        raise ParseError(f"{len(subjects)} subject ids but {n} labels", os.fspath(subjects_path),
                         min(len(subjects), n) + 1)
    bad = np.flatnonzero((labels < 1) | (labels > len(CLASS_NAMES)))
    if bad.size:
        raise ParseError(f"label {labels[bad[0]]} outside 1..{len(CLASS_NAMES)}", os.fspath(labels_path),
                         int(bad[0]) + 1)
    data = np.stack(signals, axis=2)
    prov = {"dataset": "ucihar", "partition": part, "window_len": WINDOW_LEN, "overlap": 0.5,
            "sample_rate_hz": SAMPLE_RATE_HZ, "channels": list(SIGNALS)}
    return WindowSet(data, labels - 1, CLASS_NAMES, prov, subjects)


def load_ucihar(root, partitions=("train", "test")) -> WindowSet:
    """Load the pre-segmented 128-sample windows of the listed partitions.

    ``root`` is the extracted dataset directory containing ``train/`` and
    ``test/``.  Channels are total acceleration xyz then gyroscope xyz.
    """
    root = Path(root)
    if not root.is_dir():
        raise ParseError("dataset directory not found", os.fspath(root))
    present = [p for p in partitions if (root / p).is_dir()]
    if not present:
        raise ParseError(f"no partition directory among {list(partitions)}", os.fspath(root))
    sets = [load_partition(root, p) for p in present]
    return concat(sets, partition="+".join(present))
