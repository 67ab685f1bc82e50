"""SPRM parameter checkpoints.

Layout (little-endian):

    b"SPRM"  version:u16  count:u32
    count x ( name_len:u16  name:utf8  rank:u8  dims:u32*rank  values:f64*prod(dims) )
    crc32:u32   over every preceding byte

Values are always written as float64, so float32 parameters round-trip
exactly as well.
"""

from __future__ import annotations

import io
import os
import struct
import zlib
from typing import Mapping

import numpy as np

from senres.errors import FormatError
from senres.tensor.core import Tensor

MAGIC = b"SPRM"
VERSION = 1


def dumps_params(params: Mapping[str, Tensor]) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<HI", VERSION, len(params)))
    for name, t in params.items():
        raw = name.encode("utf-8")
        data = t.data if isinstance(t, Tensor) else np.asarray(t)
        buf.write(struct.pack("<H", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<B", data.ndim))
        buf.write(struct.pack(f"<{data.ndim}I", *data.shape))
        buf.write(np.ascontiguousarray(data, dtype="<f8").tobytes())
    body = buf.getvalue()
    return body + struct.pack("<I", zlib.crc32(body))


def loads_params(blob: bytes) -> dict[str, Tensor]:
    if len(blob) < 14:
        raise FormatError("SPRM: file too short")
    body, (crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
    if body[:4] != MAGIC:
        raise FormatError(f"SPRM: bad magic {body[:4]!r}")
    if zlib.crc32(body) != crc:
        raise FormatError("SPRM: checksum mismatch (corrupted or truncated)")
    version, count = struct.unpack_from("<HI", body, 4)
    if version != VERSION:
        raise FormatError(f"SPRM: unsupported version {version}")
    pos = 10
    out: dict[str, Tensor] = {}
    try:
        for _ in range(count):
            (n,) = struct.unpack_from("<H", body, pos)
            pos += 2
            name = body[pos:pos + n].decode("utf-8")
            if len(name.encode("utf-8")) != n:
                raise FormatError("SPRM: truncated name")
            pos += n
            (rank,) = struct.unpack_from("<B", body, pos)
            pos += 1
            dims = struct.unpack_from(f"<{rank}I", body, pos)
            pos += 4 * rank
            size = int(np.prod(dims, dtype=np.int64))
            nbytes = 8 * size
            if pos + nbytes > len(body):
                raise FormatError("SPRM: truncated values")
            values = np.frombuffer(body, dtype="<f8", count=size, offset=pos).astype(np.float64)
            pos += nbytes
            if not np.all(np.isfinite(values)):
                raise FormatError(f"SPRM: non-finite values in {name!r}")
            if name in out:
                raise FormatError(f"SPRM: duplicate parameter {name!r}")
            out[name] = Tensor(values.reshape(dims))
    except (struct.error, UnicodeDecodeError) as exc:
        raise FormatError(f"SPRM: malformed record ({exc})") from exc
    if pos != len(body):
        raise FormatError("SPRM: trailing bytes after last parameter")
    return out


def save_params(params: Mapping[str, Tensor], path: str | os.PathLike) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps_params(params))


def load_params(path: str | os.PathLike) -> dict[str, Tensor]:
    with open(path, "rb") as fh:
        return loads_params(fh.read())
