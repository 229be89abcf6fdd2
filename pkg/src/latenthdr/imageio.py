"""Image containers and bit-exact PFM / binary PPM codecs."""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class FormatError(ValueError):
    """Raised for malformed or unsupported image files."""


@dataclass(eq=False)
class RadianceMap:
    """Linear RGB radiance, shape (height, width, 3), rows top-to-bottom."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 3 or data.shape[2] != 3:
            raise ValueError(f"radiance map must be HxWx3, got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("radiance map contains non-finite samples")
        if np.any(data < 0):
            raise ValueError("radiance map contains negative samples")
        self.data = data

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def __eq__(self, other):
        if not isinstance(other, RadianceMap):
            return NotImplemented
        return self.data.shape == other.data.shape and np.array_equal(self.data, other.data)


@dataclass(eq=False)
class LdrImage:
    """8-bit gamma-encoded RGB, shape (height, width, 3)."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3 or data.shape[2] != 3:
            raise ValueError(f"LDR image must be HxWx3, got {data.shape}")
        if data.dtype != np.uint8:
            if np.any(data < 0) or np.any(data > 255) or np.any(data != np.floor(data)):
                raise ValueError("LDR samples must be integers in [0, 255]")
            data = data.astype(np.uint8)
        self.data = data

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def __eq__(self, other):
        if not isinstance(other, LdrImage):
            return NotImplemented
        return self.data.shape == other.data.shape and np.array_equal(self.data, other.data)


_TOKEN = re.compile(rb"\S+")


def _header_tokens(buf: bytes, count: int, allow_comments: bool):
    """Return `count` whitespace-separated header tokens and the payload offset.

    The payload begins after exactly one whitespace byte following the last token.
    """
    tokens = []
    pos = 0
    n = len(buf)
    while len(tokens) < count:
        while pos < n and buf[pos:pos + 1].isspace():
            pos += 1
        if pos >= n:
            raise FormatError("truncated header")
        if allow_comments and buf[pos:pos + 1] == b"#":
            end = buf.find(b"\n", pos)
            if end < 0:
                raise FormatError("truncated header")
            pos = end + 1
            continue
        m = _TOKEN.match(buf, pos)
        tok = m.group(0)
        if allow_comments and b"#" in tok:
            tok = tok[:tok.index(b"#")]
            tokens.append(tok)
            end = buf.find(b"\n", pos)
            if end < 0:
                raise FormatError("truncated header")
            pos = end
        else:
            tokens.append(tok)
            pos = m.end()
    if pos >= n or not buf[pos:pos + 1].isspace():
        raise FormatError("missing whitespace after header")
    return tokens, pos + 1


def _parse_dims(w_tok: bytes, h_tok: bytes):
    try:
        width, height = int(w_tok), int(h_tok)
    except ValueError as exc:
        raise FormatError(f"malformed header: bad dimensions {w_tok!r} {h_tok!r}") from exc
    if width <= 0 or height <= 0:
        raise FormatError(f"malformed header: non-positive dimensions {width}x{height}")
    return width, height


def read_pfm(buf: bytes) -> RadianceMap:
    """Decode a 3-channel PFM stream.

    Negative scale means little-endian samples, positive big-endian. Rows are
    stored bottom-to-top in the file and returned top-to-bottom.
    """
    if not buf.startswith(b"PF"):
        raise FormatError("malformed header: expected 'PF' magic")
    try:
        tokens, offset = _header_tokens(buf, 4, allow_comments=False)
    except FormatError as exc:
        raise FormatError(f"malformed header: {exc}") from exc
    if tokens[0] != b"PF":
        raise FormatError("malformed header: expected 'PF' magic")
    width, height = _parse_dims(tokens[1], tokens[2])
    try:
        scale = float(tokens[3])
    except ValueError as exc:
        raise FormatError(f"malformed header: bad scale {tokens[3]!r}") from exc
    if scale == 0 or not np.isfinite(scale):
        raise FormatError("malformed header: scale must be finite and nonzero")

    dtype = np.dtype("<f4") if scale < 0 else np.dtype(">f4")
    count = width * height * 3
    payload = buf[offset:]
    if len(payload) < count * 4:
        raise FormatError(f"truncated payload: need {count * 4} bytes, got {len(payload)}")
    samples = np.frombuffer(payload, dtype=dtype, count=count)
    data = samples.reshape(height, width, 3)[::-1].astype(np.float64)
    if not np.all(np.isfinite(data)):
        raise FormatError("non-finite sample in PFM payload")
    if np.any(data < 0):
        raise FormatError("negative sample in PFM payload")
    return RadianceMap(data)


def write_pfm(img: RadianceMap) -> bytes:
    """Encode in canonical form: little-endian float32, scale -1.0."""
    if img.width == 0 or img.height == 0:
        raise ValueError("cannot write a zero-sized image")
    header = f"PF\n{img.width} {img.height}\n-1.0\n".encode("ascii")
    payload = np.ascontiguousarray(img.data[::-1], dtype="<f4").tobytes()
    return header + payload


def read_ppm(buf: bytes) -> LdrImage:
    """Decode a binary P6 stream with maxval 255. Header comments are skipped."""
    if not buf.startswith(b"P6"):
        raise FormatError("malformed header: expected 'P6' magic")
    tokens, offset = _header_tokens(buf, 4, allow_comments=True)
    if tokens[0] != b"P6":
        raise FormatError("malformed header: expected 'P6' magic")
    width, height = _parse_dims(tokens[1], tokens[2])
    try:
        maxval = int(tokens[3])
    except ValueError as exc:
        raise FormatError(f"malformed header: bad maxval {tokens[3]!r}") from exc
    if maxval != 255:
        raise FormatError(f"unsupported maxval {maxval} (only 255)")
    count = width * height * 3
    payload = buf[offset:]
    if len(payload) < count:
        raise FormatError(f"truncated payload: need {count} bytes, got {len(payload)}")
    data = np.frombuffer(payload, dtype=np.uint8, count=count).reshape(height, width, 3).copy()
    return LdrImage(data)


def write_ppm(img: LdrImage) -> bytes:
    if img.width == 0 or img.height == 0:
        raise ValueError("cannot write a zero-sized image")
    header = f"P6\n{img.width} {img.height}\n255\n".encode("ascii")
    return header + np.ascontiguousarray(img.data, dtype=np.uint8).tobytes()


def load_pfm(path) -> RadianceMap:
    return read_pfm(Path(path).read_bytes())


def save_pfm(path, img: RadianceMap) -> None:
    Path(path).write_bytes(write_pfm(img))


def load_ppm(path) -> LdrImage:
    return read_ppm(Path(path).read_bytes())


def save_ppm(path, img: LdrImage) -> None:
    Path(path).write_bytes(write_ppm(img))
