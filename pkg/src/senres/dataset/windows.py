"""Recordings, window sets, sliding-window segmentation and train/test splits."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from senres.augment.window import Window
from senres.errors import InvalidParamsError, ShapeError

CANONICAL_CHANNELS = ("acc_x", "acc_y", "acc_z", "gyro_x", "gyro_y", "gyro_z")


def round_half_up(x: float) -> int:
    # the small epsilon absorbs binary error in products such as 200 * 0.875
    return int(math.floor(x + 0.5 + 1e-9))


@dataclass(frozen=True, eq=False)
class Recording:
    """One continuous multichannel stream with a single activity label."""

    subject: int
    label: int
    data: np.ndarray  # (L, C)
    sample_rate_hz: float | None = None
    activity: str | None = None
    source: str | None = None

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim == 1:
            data = data[:, None]
        if data.ndim != 2:
            raise ShapeError(f"recording data must be (L, C), got {data.shape}")
        object.__setattr__(self, "data", data)

    @property
    def length(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True, eq=False)
class WindowSet:
    """An immutable stack of equally shaped windows.

    ``data`` is stored as float32 (N, T, C), which is also the on-disk
    precision, so a set survives a write/read cycle bit for bit.  Labels
    are 0-based indices into ``class_names``.
    """

    data: np.ndarray
    labels: np.ndarray
    class_names: tuple[str, ...]
    provenance: dict[str, Any] = field(default_factory=dict)
    subjects: np.ndarray | None = None

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float32)
        if data.ndim != 3:
            raise ShapeError(f"window set data must be (N, T, C), got {data.shape}")
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if labels.shape[0] != data.shape[0]:
            raise ShapeError(f"{labels.shape[0]} labels for {data.shape[0]} windows")
        names = tuple(str(c) for c in self.class_names)
        if labels.size and (labels.min() < 0 or labels.max() >= len(names)):
            raise InvalidParamsError("label outside the class table")
        if not np.all(np.isfinite(data)):
            raise InvalidParamsError("window set contains non-finite values")
        subjects = self.subjects
        if subjects is not None:
            subjects = np.asarray(subjects, dtype=np.int64).reshape(-1)
            if subjects.shape[0] != data.shape[0]:
                raise ShapeError(f"{subjects.shape[0]} subject ids for {data.shape[0]} windows")
        data.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "class_names", names)
        object.__setattr__(self, "provenance", dict(self.provenance))
        object.__setattr__(self, "subjects", subjects)

    def __len__(self) -> int:
        return self.data.shape[0]

    @property
    def window_length(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def window(self, i: int) -> Window:
        rate = self.provenance.get("sample_rate_hz")
        return Window(self.data[i], label=int(self.labels[i]), sample_rate_hz=rate)

    def windows(self) -> list[Window]:
        return [self.window(i) for i in range(len(self))]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)

    def subset(self, idx, **provenance) -> "WindowSet":
        idx = np.asarray(idx, dtype=np.int64)
        subjects = None if self.subjects is None else self.subjects[idx]
        return WindowSet(self.data[idx], self.labels[idx], self.class_names,
                         {**self.provenance, **provenance}, subjects)

    def with_data(self, data, labels=None, **provenance) -> "WindowSet":
        labels = self.labels if labels is None else labels
        subjects = self.subjects if labels is self.labels else None
        return WindowSet(data, labels, self.class_names, {**self.provenance, **provenance}, subjects)

    def __eq__(self, other) -> bool:
        if not isinstance(other, WindowSet):
            return NotImplemented
        same_subjects = (self.subjects is None and other.subjects is None) or (
            self.subjects is not None and other.subjects is not None
            and np.array_equal(self.subjects, other.subjects))
        return (self.class_names == other.class_names and self.data.shape == other.data.shape
                and np.array_equal(self.labels, other.labels)
                and self.data.tobytes() == other.data.tobytes() and same_subjects)


def concat(sets: Sequence[WindowSet], **provenance) -> WindowSet:
    if not sets:
        raise InvalidParamsError("nothing to concatenate")
    first = sets[0]
    for s in sets[1:]:
        if s.class_names != first.class_names or s.data.shape[1:] != first.data.shape[1:]:
            raise ShapeError("window sets differ in class table or window shape")
    subjects = None
    if all(s.subjects is not None for s in sets):
        subjects = np.concatenate([s.subjects for s in sets])
    return WindowSet(np.concatenate([s.data for s in sets]), np.concatenate([s.labels for s in sets]),
                     first.class_names, {**first.provenance, **provenance}, subjects)


def window_starts(length: int, window_len: int, overlap_fraction: float) -> list[int]:
    if not 0.0 <= overlap_fraction < 1.0:
        raise InvalidParamsError(f"overlap must be in [0, 1), got {overlap_fraction}")
    if window_len < 2:
        raise InvalidParamsError(f"window length must be at least 2, got {window_len}")
    step = round_half_up(window_len * (1.0 - overlap_fraction))
    if step < 1:
        raise InvalidParamsError(f"overlap {overlap_fraction} leaves a zero step")
    return list(range(0, length - window_len + 1, step))


def segment(rec: Recording, window_len: int, overlap_fraction: float,
            class_names: Sequence[str] | None = None, dataset: str = "recording") -> WindowSet:
    """Cut ``rec`` into windows of ``window_len`` samples.

    The step is ``round(window_len * (1 - overlap_fraction))`` rounded half
    up.  A stream shorter than one window yields an empty set.
    """
    starts = window_starts(rec.length, window_len, overlap_fraction)
    if class_names is None:
        class_names = [str(i) for i in range(rec.label + 1)]
    c = rec.data.shape[1]
    data = np.stack([rec.data[s:s + window_len] for s in starts]) if starts else np.zeros((0, window_len, c))
    return WindowSet(
        data,
        np.full(len(starts), rec.label),
        tuple(class_names),
        {"dataset": dataset, "window_len": window_len, "overlap": overlap_fraction,
         "sample_rate_hz": rec.sample_rate_hz},
        np.full(len(starts), rec.subject),
    )


def segment_all(recs: Sequence[Recording], window_len: int, overlap_fraction: float,
                class_names: Sequence[str], dataset: str = "recordings") -> WindowSet:
    if not recs:
        raise InvalidParamsError("no recordings to segment")
    parts = [segment(r, window_len, overlap_fraction, class_names, dataset) for r in recs]
    return concat(parts)


@dataclass(frozen=True)
class SplitSpec:
    fraction: float
    seed: int = 0
    stratified: bool = True
    by_subject: bool = False

    def __post_init__(self):
        if not 0.0 < self.fraction < 1.0:
            raise InvalidParamsError(f"train fraction must be in (0, 1), got {self.fraction}")


def _largest_remainder(counts: np.ndarray, fraction: float) -> np.ndarray:
    total = round_half_up(fraction * counts.sum())
    exact = fraction * counts
    base = np.floor(exact + 1e-9).astype(np.int64)
    rest = total - base.sum()
    order = np.argsort(-(exact - base), kind="stable")
    base[order[:rest]] += 1
    return base


def split(ws: WindowSet, spec: SplitSpec) -> tuple[WindowSet, WindowSet]:
    """Seeded partition of ``ws`` into (train, test).

    Stratified splits allot ``fraction * N`` training windows across classes
    by largest remainder.  If some class would end up with no train or no
    test window the split falls back to an unstratified one and records a
    warning in the provenance.
    """
    n = len(ws)
    if n < 2:
        raise InvalidParamsError("need at least two windows to split")
    rng = np.random.default_rng(spec.seed)
    notes: list[str] = []
    if spec.by_subject:
        if ws.subjects is None:
            raise InvalidParamsError("subject split requested but the set has no subject ids")
        subjects = np.unique(ws.subjects)
        if len(subjects) < 2:
            raise InvalidParamsError("subject split needs at least two subjects")
        k = min(max(round_half_up(spec.fraction * len(subjects)), 1), len(subjects) - 1)
        chosen = rng.permutation(subjects)[:k]
        mask = np.isin(ws.subjects, chosen)
        train_idx = np.flatnonzero(mask)
    else:
        train_idx = None
        if spec.stratified:
            counts = ws.class_counts()
            present = counts > 0
            take = _largest_remainder(counts, spec.fraction)
            if np.all(take[present] >= 1) and np.all(counts[present] - take[present] >= 1):
                perm = rng.permutation(n)
                chosen = []
                for c in np.flatnonzero(present):
                    members = perm[ws.labels[perm] == c]
                    chosen.append(members[:take[c]])
                train_idx = np.sort(np.concatenate(chosen))
            else:
                msg = "stratified split impossible (class too small); fell back to unstratified"
                warnings.warn(msg, stacklevel=2)
                notes.append(msg)
        if train_idx is None:
            k = min(max(round_half_up(spec.fraction * n), 1), n - 1)
            train_idx = np.sort(rng.permutation(n)[:k])
    test_mask = np.ones(n, dtype=bool)
    test_mask[train_idx] = False
    info = {"fraction": spec.fraction, "seed": spec.seed, "stratified": spec.stratified,
            "by_subject": spec.by_subject, "warnings": notes}
    return ws.subset(train_idx, split=dict(info, part="train")), ws.subset(np.flatnonzero(test_mask), split=dict(info, part="test"))
