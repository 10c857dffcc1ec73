"""Pixel images, binary PGM/PPM I/O and error measures."""

from __future__ import annotations

import os
import re
from dataclasses import dataclass

import numpy as np


class ImageFormatError(ValueError):
    """Base class for netpbm parse failures."""


class UnsupportedFormatError(ImageFormatError):
    pass


class MalformedHeaderError(ImageFormatError):
    pass


class TruncatedDataError(ImageFormatError):
    pass


class UnsupportedMaxvalError(ImageFormatError):
    pass


@dataclass(frozen=True)
class Image:
    """Row-major, channel-interleaved float64 intensities, nominally in [0, 255]."""

    width: int
    height: int
    channels: int
    data: np.ndarray

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image dimensions must be positive")
        if self.channels not in (1, 3):
            raise ValueError("channels must be 1 or 3")
        data = np.array(self.data, dtype=np.float64).reshape(-1)
        if data.size != self.width * self.height * self.channels:
            raise ValueError("data length does not match dimensions")
        if not np.all(np.isfinite(data)):
            raise ValueError("image data must be finite")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @classmethod
    def from_array(cls, arr) -> Image:
        """Build from an (H, W) or (H, W, 3) array."""
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim == 2:
            return cls(arr.shape[1], arr.shape[0], 1, arr)
        if arr.ndim == 3 and arr.shape[2] in (1, 3):
            return cls(arr.shape[1], arr.shape[0], arr.shape[2], arr)
        raise ValueError(f"unsupported array shape {arr.shape}")

    @property
    def n_pixels(self) -> int:
        return self.width * self.height

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.height, self.width, self.channels)

    def pixels(self) -> np.ndarray:
        """View as (n_pixels, channels)."""
        return self.data.reshape(-1, self.channels)

    def to_array(self) -> np.ndarray:
        arr = self.data.reshape(self.height, self.width, self.channels)
        return arr[:, :, 0] if self.channels == 1 else arr

    def quantised(self) -> np.ndarray:
        """uint8 samples: clamp to [0, 255], round half away from zero."""
        q = np.clip(self.data, 0.0, 255.0)
        return np.floor(q + 0.5).astype(np.uint8)


@dataclass(frozen=True)
class ErrorMap:
    width: int
    height: int
    values: np.ndarray


def _check_same(a: Image, b: Image) -> None:
    if (a.width, a.height, a.channels) != (b.width, b.height, b.channels):
        raise ValueError(
            f"dimension mismatch: {a.width}x{a.height}x{a.channels} "
            f"vs {b.width}x{b.height}x{b.channels}"
        )


def mse(a: Image, b: Image) -> float:
    """Mean squared difference over all samples (all channels)."""
    _check_same(a, b)
    d = a.data - b.data
    return float(np.dot(d, d) / d.size)


def error_map(f: Image, u: Image) -> ErrorMap:
    """Per-pixel squared error, summed over channels."""
    _check_same(f, u)
    d = (u.data - f.data).reshape(-1, f.channels)
    return ErrorMap(f.width, f.height, np.einsum("ij,ij->i", d, d))


_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def _parse_header(buf: bytes) -> tuple[bytes, int, int, int, int]:
    if len(buf) < 2:
        raise MalformedHeaderError("file too short for a netpbm header")
    magic = buf[:2]
    if magic not in (b"P5", b"P6"):
        raise UnsupportedFormatError(f"unsupported netpbm magic {magic!r}")
    pos = 2
    fields = []
    for _ in range(3):
        m = _TOKEN.match(buf, pos)
        if m is None or not m.group(1).isdigit():
            raise MalformedHeaderError("bad or missing header field")
        fields.append(int(m.group(1)))
        pos = m.end()
    if pos >= len(buf) or buf[pos : pos + 1] not in b" \t\r\n":
        raise MalformedHeaderError("header must end with a single whitespace byte")
    width, height, maxval = fields
    if width <= 0 or height <= 0:
        raise MalformedHeaderError("non-positive image dimensions")
    if maxval != 255:
        raise UnsupportedMaxvalError(f"maxval {maxval} is not supported (need 255)")
    return magic, width, height, maxval, pos + 1


def load_image(path) -> Image:
    with open(path, "rb") as fh:
        buf = fh.read()
    magic, width, height, _, start = _parse_header(buf)
    channels = 1 if magic == b"P5" else 3
    n = width * height * channels
    raw = np.frombuffer(buf, dtype=np.uint8, count=min(n, len(buf) - start), offset=start)
    if raw.size < n:
        raise TruncatedDataError(f"expected {n} samples, found {raw.size}")
    return Image(width, height, channels, raw.astype(np.float64))


def save_image(img: Image, path) -> None:
    magic = b"P5" if img.channels == 1 else b"P6"
    header = magic + b"\n%d %d\n255\n" % (img.width, img.height)
    with open(os.fspath(path), "wb") as fh:
        fh.write(header)
        fh.write(img.quantised().tobytes())
