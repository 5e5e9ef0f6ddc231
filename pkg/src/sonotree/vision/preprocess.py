"""Image normalization: bilinear resize to a fixed grid plus contrast stretch."""

from __future__ import annotations

import numpy as np

from ..numerics import ContractViolation
from ..pgm import GrayImage

TARGET_SIZE = 256
MIN_DIMENSION = 16  # images entering the pipeline must be at least 16x16


def bilinear_resize(pixels: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Pixel-center-aligned bilinear resampling, float64 output."""
    in_h, in_w = pixels.shape
    src = pixels.astype(np.float64)
    ys = (np.arange(out_h) + 0.5) * (in_h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (in_w / out_w) - 0.5
    ys = np.clip(ys, 0.0, in_h - 1.0)
    xs = np.clip(xs, 0.0, in_w - 1.0)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    top = src[np.ix_(y0, x0)] * (1 - wx) + src[np.ix_(y0, x1)] * wx
    bottom = src[np.ix_(y1, x0)] * (1 - wx) + src[np.ix_(y1, x1)] * wx
    return top * (1 - wy) + bottom * wy


def stretch_contrast(pixels: np.ndarray) -> np.ndarray:
    """Min-max stretch to the full 0..255 range; constant input is left alone."""
    lo, hi = float(pixels.min()), float(pixels.max())
    if hi == lo:
        return pixels.copy()
    return (pixels - lo) * (255.0 / (hi - lo))


def preprocess(image: GrayImage, target: int = TARGET_SIZE) -> GrayImage:
    """Resize to target x target and stretch intensities to cover 0..255."""
    if image.width < MIN_DIMENSION or image.height < MIN_DIMENSION:
        raise ContractViolation(
            f"image {image.width}x{image.height} below minimum {MIN_DIMENSION}")
    resized = bilinear_resize(image.pixels, target, target)
    stretched = stretch_contrast(resized)
    out = np.clip(np.rint(stretched), 0, 255).astype(np.uint8)
    return GrayImage(width=target, height=target, pixels=out)
