"""SWND window containers.

Layout (little-endian):

    b"SWND"  version:u16  flags:u16  count:u32  T:u32  C:u32  classes:u16
    classes x ( name_len:u16  name:utf8 )
    count x ( label:u16  values:f32*(T*C), time-major )
    [flags bit 0]  count x subject:i32
    crc32:u32   over every preceding byte

Provenance is not stored; a read set carries only the source path.
"""

from __future__ import annotations

import os
import struct
import zlib

import numpy as np

from senres.dataset.windows import WindowSet
from senres.errors import FormatError

MAGIC = b"SWND"
VERSION = 1
FLAG_SUBJECTS = 1
_HEADER = struct.Struct("<4sHHIIIH")


def dumps_swnd(ws: WindowSet) -> bytes:
    n, t, c = ws.data.shape
    flags = FLAG_SUBJECTS if ws.subjects is not None else 0
    parts = [_HEADER.pack(MAGIC, VERSION, flags, n, t, c, len(ws.class_names))]
    for name in ws.class_names:
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw)
    rec = np.empty(n, dtype=[("label", "<u2"), ("x", "<f4", (t, c))])
    rec["label"] = ws.labels
    rec["x"] = ws.data
    parts.append(rec.tobytes())
    if ws.subjects is not None:
        parts.append(np.asarray(ws.subjects, dtype="<i4").tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def loads_swnd(blob: bytes, source: str | None = None) -> WindowSet:
    if len(blob) < _HEADER.size + 4:
        raise FormatError("SWND: file too short")
    body, (crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
    magic, version, flags, n, t, c, k = _HEADER.unpack_from(body, 0)
    if magic != MAGIC:
        raise FormatError(f"SWND: bad magic {magic!r}")
    if zlib.crc32(body) != crc:
        raise FormatError("SWND: checksum mismatch (corrupted or truncated)")
    if version != VERSION:
        raise FormatError(f"SWND: unsupported version {version}")
    if flags & ~FLAG_SUBJECTS:
        raise FormatError(f"SWND: unknown flags {flags:#x}")
    pos = _HEADER.size
    names = []
    for _ in range(k):
        if pos + 2 > len(body):
            raise FormatError("SWND: truncated class table")
        (ln,) = struct.unpack_from("<H", body, pos)
        pos += 2
        if pos + ln > len(body):
            raise FormatError("SWND: truncated class table")
        try:
            names.append(body[pos:pos + ln].decode("utf-8"))
        except UnicodeDecodeError as e:
            raise FormatError(f"SWND: class name is not UTF-8: {e}") from None
        pos += ln
    dt = np.dtype([("label", "<u2"), ("x", "<f4", (t, c))])
    need = n * dt.itemsize + (4 * n if flags & FLAG_SUBJECTS else 0)
    if len(body) - pos != need:
        raise FormatError(f"SWND: expected {need} payload bytes, found {len(body) - pos}")
    rec = np.frombuffer(body, dtype=dt, count=n, offset=pos)
    pos += n * dt.itemsize
    subjects = None
    if flags & FLAG_SUBJECTS:
        subjects = np.frombuffer(body, dtype="<i4", count=n, offset=pos).astype(np.int64)
    labels = rec["label"].astype(np.int64)
    data = np.array(rec["x"], dtype=np.float32)
    if not np.all(np.isfinite(data)):
        raise FormatError("SWND: non-finite sample values")
    if n and labels.max() >= k:
        raise FormatError("SWND: label outside the class table")
    if t < 2 or c < 1:
        raise FormatError(f"SWND: degenerate window shape {t}x{c}")
    prov = {"source": source} if source else {}
    return WindowSet(data, labels, tuple(names), prov, subjects)


def write_swnd(ws: WindowSet, path) -> None:
    blob = dumps_swnd(ws)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as f:
        f.write(blob)
    os.replace(tmp, path)


def read_swnd(path) -> WindowSet:
    with open(path, "rb") as f:
        return loads_swnd(f.read(), source=os.fspath(path))
