"""Binary weight files.

Layout (little-endian): magic ``LHDR``, u32 format version, u32 tensor count,
then per tensor: u32 name length, UTF-8 name, u8 rank, u32 dims[rank],
float64 payload in C order.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"LHDR"
VERSION = 1


def dumps(tensors: dict) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name in sorted(tensors):
        arr = np.asarray(tensors[name], dtype="<f8", order="C")
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    return b"".join(parts)


def loads(buf: bytes) -> dict:
    if buf[:4] != MAGIC:
        raise ValueError("not a weight file (bad magic)")
    try:
        version, count = struct.unpack_from("<II", buf, 4)
        if version != VERSION:
            raise ValueError(f"unsupported weight file version {version}")
        pos = 12
        out = {}
        for _ in range(count):
            (n,) = struct.unpack_from("<I", buf, pos)
            pos += 4
            name = buf[pos:pos + n].decode("utf-8")
            pos += n
            (rank,) = struct.unpack_from("<B", buf, pos)
            pos += 1
            dims = struct.unpack_from(f"<{rank}I", buf, pos)
            pos += 4 * rank
            size = int(np.prod(dims, dtype=np.int64))
            if pos + 8 * size > len(buf):
                raise ValueError("truncated weight file")
            out[name] = np.frombuffer(buf, dtype="<f8", count=size, offset=pos).reshape(dims).astype(np.float64)
            pos += 8 * size
    except struct.error as exc:
        raise ValueError("truncated weight file") from exc
    return out


def save(path, tensors: dict) -> None:
    Path(path).write_bytes(dumps(tensors))


def load(path) -> dict:
    return loads(Path(path).read_bytes())
