"""Binary PGM (P5) reading and writing.

Images are 8-bit (maxval 255). Label masks are 16-bit (maxval 65535,
big-endian sample order per the PGM format), with 0 meaning background.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np


class PgmError(ValueError):
    """Malformed PGM file; the message names the byte offset of the problem."""


@dataclass
class GrayImage:
    """8-bit grayscale raster, row-major."""

    width: int
    height: int
    pixels: np.ndarray  # uint8, shape (height, width)

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.uint8)
        if self.pixels.shape != (self.height, self.width):
            raise ValueError(
                f"pixel buffer {self.pixels.shape} does not match "
                f"{self.height}x{self.width}")


@dataclass
class LabelMask:
    """Region labels, 0 = background, regions numbered contiguously from 1."""

    width: int
    height: int
    labels: np.ndarray  # int32, shape (height, width)

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int32)
        if self.labels.shape != (self.height, self.width):
            raise ValueError(
                f"label buffer {self.labels.shape} does not match "
                f"{self.height}x{self.width}")

    @property
    def n_regions(self) -> int:
        return int(self.labels.max())

    def region_ids(self) -> list[int]:
        ids = np.unique(self.labels)
        return [int(i) for i in ids if i > 0]


def _read_header(data: bytes, path: str):
    """Parse 'P5 <width> <height> <maxval>' allowing comments; returns
    (width, height, maxval, offset of first raster byte)."""
    if len(data) < 2:
        raise PgmError(f"{path}: truncated header at offset 0")
    magic = data[:2]
    if magic != b"P5":
        raise PgmError(
            f"{path}: unsupported magic {magic!r} at offset 0 (only binary P5)")
    fields = []
    pos = 2
    while len(fields) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        token = data[start:pos]
        if not token:
            raise PgmError(f"{path}: truncated header at offset {start}")
        try:
            fields.append(int(token))
        except ValueError:
            raise PgmError(f"{path}: bad header token {token!r} at offset {start}")
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise PgmError(f"{path}: missing whitespace after maxval at offset {pos}")
    pos += 1  # single whitespace byte separates header from raster
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise PgmError(f"{path}: non-positive dimensions at offset 2")
    return width, height, maxval, pos


def load_pgm(path) -> GrayImage:
    """Load an 8-bit P5 image; exact byte-to-pixel mapping, no rescaling."""
    path = Path(path)
    data = path.read_bytes()
    width, height, maxval, offset = _read_header(data, str(path))
    if maxval != 255:
        raise PgmError(
            f"{path}: unsupported depth for images (maxval {maxval}) at offset 2")
    expected = width * height
    raster = data[offset:offset + expected]
    if len(raster) < expected:
        raise PgmError(
            f"{path}: truncated raster at offset {offset + len(raster)} "
            f"(expected {expected} bytes)")
    pixels = np.frombuffer(raster, dtype=np.uint8).reshape(height, width)
    return GrayImage(width=width, height=height, pixels=pixels.copy())


def load_pgm_mask(path) -> LabelMask:
    """Load a 16-bit P5 label mask (big-endian samples, maxval up to 65535)."""
    path = Path(path)
    data = path.read_bytes()
    width, height, maxval, offset = _read_header(data, str(path))
    if not 255 < maxval <= 65535:
        raise PgmError(
            f"{path}: mask requires 16-bit samples (maxval {maxval}) at offset 2")
    expected = width * height * 2
    raster = data[offset:offset + expected]
    if len(raster) < expected:
        raise PgmError(
            f"{path}: truncated raster at offset {offset + len(raster)} "
            f"(expected {expected} bytes)")
    labels = np.frombuffer(raster, dtype=">u2").reshape(height, width)
    return LabelMask(width=width, height=height, labels=labels.astype(np.int32))


def save_pgm(path, image: GrayImage) -> None:
    header = f"P5\n{image.width} {image.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + image.pixels.astype(np.uint8).tobytes())


def save_pgm_mask(path, mask: LabelMask) -> None:
    if mask.labels.min() < 0 or mask.labels.max() > 65535:
        raise ValueError("mask labels must fit in 16 bits")
    header = f"P5\n{mask.width} {mask.height}\n65535\n".encode("ascii")
    Path(path).write_bytes(header + mask.labels.astype(">u2").tobytes())
