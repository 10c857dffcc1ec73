"""Binary payload: mask positions, unknown-vertex positions and 8-bit mask values.

Layout (little-endian)::

    magic "FEMI" | version u16 | channels u16 | width u32 | height u32 | m u32 | p u32
    m x u32 mask pixel indices (ascending)
    p x u32 unknown-vertex pixel indices (ascending)
    m*channels x u8 values (pixel-interleaved, in mask order)
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .mesh import TriMesh
from .spatial import MaskSet, canonical_mesh

MAGIC = b"FEMI"
VERSION = 1
HEADER = struct.Struct("<4sHHIIII")


class PayloadError(ValueError):
    pass


class BadMagicError(PayloadError):
    pass


class TruncatedPayloadError(PayloadError):
    pass


class DuplicatePositionError(PayloadError):
    pass


@dataclass(frozen=True)
class Payload:
    width: int
    height: int
    mask: MaskSet
    unknowns: np.ndarray

    @property
    def channels(self) -> int:
        return self.mask.channels

    def mesh(self) -> TriMesh:
        return canonical_mesh(self.mask.positions, self.unknowns, self.width)


def quantise(values) -> np.ndarray:
    return np.floor(np.clip(values, 0.0, 255.0) + 0.5).astype(np.uint8)


def payload_size(m: int, p: int, channels: int) -> int:
    return HEADER.size + 4 * (m + p) + m * channels


def encode(mask: MaskSet, unknowns, width: int, height: int) -> bytes:
    npix = width * height
    unknowns = np.asarray(unknowns, dtype=np.int64).reshape(-1)
    m, p = len(mask), unknowns.shape[0]
    if m + p > npix:
        raise PayloadError("more points than pixels")
    pos = mask.positions
    both = np.concatenate([pos, unknowns])
    if both.size and (both.min() < 0 or both.max() >= npix):
        raise PayloadError("position outside the image")
    if len(np.unique(both)) != both.size:
        raise DuplicatePositionError("mask and unknown positions must be distinct")
    order = np.argsort(pos, kind="stable")
    head = HEADER.pack(MAGIC, VERSION, mask.channels, width, height, m, p)
    return b"".join([
        head,
        pos[order].astype("<u4").tobytes(),
        np.sort(unknowns).astype("<u4").tobytes(),
        quantise(mask.values[order]).tobytes(),
    ])


def decode(buf: bytes) -> Payload:
    if len(buf) < HEADER.size:
        raise TruncatedPayloadError("payload shorter than its header")
    magic, version, channels, width, height, m, p = HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}")
    if version != VERSION:
        raise PayloadError(f"unsupported payload version {version}")
    if channels not in (1, 3) or width == 0 or height == 0:
        raise PayloadError("invalid header fields")
    need = payload_size(m, p, channels)
    if len(buf) < need:
        raise TruncatedPayloadError(f"payload has {len(buf)} bytes, needs {need}")
    if len(buf) > need:
        raise PayloadError("trailing bytes after payload")
    off = HEADER.size
    pos = np.frombuffer(buf, "<u4", m, off).astype(np.int64)
    off += 4 * m
    unk = np.frombuffer(buf, "<u4", p, off).astype(np.int64)
    off += 4 * p
    vals = np.frombuffer(buf, np.uint8, m * channels, off).astype(np.float64)
    both = np.concatenate([pos, unk])
    if len(np.unique(both)) != both.size:
        raise DuplicatePositionError("duplicate positions in payload")
    if both.size and both.max() >= width * height:
        raise PayloadError("position outside the image")
    return Payload(width, height, MaskSet(pos, vals.reshape(m, channels)), unk)


def write_payload(path, mask: MaskSet, unknowns, width: int, height: int) -> int:
    data = encode(mask, unknowns, width, height)
    with open(path, "wb") as fh:
        fh.write(data)
    return len(data)


def read_payload(path) -> Payload:
    with open(path, "rb") as fh:
        return decode(fh.read())
