"""Ingestion, windowing, splitting and the SWND container."""

from senres.dataset.csvio import CsvSchema, class_table, load_csv_recordings
from senres.dataset.swnd import dumps_swnd, loads_swnd, read_swnd, write_swnd
from senres.dataset.synthetic import synthetic_sinusoids
from senres.dataset.ucihar import load_ucihar
from senres.dataset.windows import (
    CANONICAL_CHANNELS,
    Recording,
    SplitSpec,
    WindowSet,
    concat,
    round_half_up,
    segment,
    segment_all,
    split,
    window_starts,
)

# (window length, overlap) per dataset
WINDOWING = {
    "ucihar": (128, 0.5),
    "motionsense": (200, 0.125),
    "uschad": (200, 0.25),
}

__all__ = [
    "CANONICAL_CHANNELS", "CsvSchema", "Recording", "SplitSpec", "WINDOWING", "WindowSet", "class_table",
    "concat", "dumps_swnd", "load_csv_recordings", "load_ucihar", "loads_swnd", "read_swnd",
    "round_half_up", "segment", "segment_all", "split", "synthetic_sinusoids", "window_starts",
    "write_swnd",
]
