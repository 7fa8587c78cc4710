"""Binary container for named float32 arrays.

Layout, all little-endian::

    b"MCAF" | version u32 | count u32 |
    count x (name_len u16 | utf-8 name | rank u8 | rank x dim u32 | float32 payload)
"""
from __future__ import annotations

import os
import struct
import tempfile
from typing import Mapping

import numpy as np

from .errors import FormatError

MAGIC = b"MCAF"
VERSION = 1


def encode(arrays: Mapping[str, np.ndarray]) -> bytes:
    out = [MAGIC, struct.pack("<II", VERSION, len(arrays))]
    for name, arr in arrays.items():
        raw = name.encode("utf-8")
        a = np.asarray(arr, dtype="<f4")
        if len(raw) > 0xFFFF or a.ndim > 0xFF:
            raise FormatError(f"tensor {name!r} cannot be encoded")
        out.append(struct.pack("<H", len(raw)) + raw + struct.pack("<B", a.ndim))
        out.append(struct.pack(f"<{a.ndim}I", *a.shape))
        out.append(np.ascontiguousarray(a).tobytes())
    return b"".join(out)


def decode(buf: bytes) -> dict[str, np.ndarray]:
    mv = memoryview(buf)
    if bytes(mv[:4]) != MAGIC:
        raise FormatError("bad magic, not a tensor container")
    try:
        version, count = struct.unpack_from("<II", mv, 4)
        if version != VERSION:
            raise FormatError(f"unsupported container version {version}")
        pos = 12
        out = {}
        for _ in range(count):
            (n,) = struct.unpack_from("<H", mv, pos)
            pos += 2
            name = bytes(mv[pos:pos + n]).decode("utf-8")
            pos += n
            (rank,) = struct.unpack_from("<B", mv, pos)
            pos += 1
            dims = struct.unpack_from(f"<{rank}I", mv, pos)
            pos += 4 * rank
            size = int(np.prod(dims, dtype=np.int64))
            if pos + 4 * size > len(mv):
                raise FormatError(f"truncated payload for {name!r}")
            out[name] = np.frombuffer(mv, dtype="<f4", count=size, offset=pos).reshape(dims).astype(np.float32)
            pos += 4 * size
    except struct.error as e:
        raise FormatError(f"truncated container: {e}") from e
    if pos != len(mv):
        raise FormatError(f"{len(mv) - pos} trailing bytes after last tensor")
    return out


def atomic_write(path, data: bytes):
    """Write to a sibling temp file, then rename over the target."""
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(str(path)))
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save(path, arrays: Mapping[str, np.ndarray]):
    atomic_write(path, encode(arrays))


def load(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as f:
        return decode(f.read())
