import numpy as np
import pytest

from sonotree.pgm import GrayImage


def make_image(pixels) -> GrayImage:
    arr = np.asarray(pixels, dtype=np.uint8)
    return GrayImage(width=arr.shape[1], height=arr.shape[0], pixels=arr)


def striped_image(size: int, period: int, horizontal: bool) -> GrayImage:
    """Alternating dark/bright stripes; horizontal=True means stripes run
    across the image (intensity varies down the rows)."""
    idx = np.arange(size)
    stripe = ((idx // period) % 2) * 200 + 30
    if horizontal:
        pixels = np.tile(stripe[:, None], (1, size))
    else:
        pixels = np.tile(stripe[None, :], (size, 1))
    return make_image(pixels)


def blob_image(size: int, centers, radius: int, bg: int = 20,
               fg: int = 220) -> GrayImage:
    """Bright disks on a dark background."""
    ys, xs = np.mgrid[0:size, 0:size]
    pixels = np.full((size, size), bg, dtype=np.float64)
    for cx, cy in centers:
        inside = (xs - cx) ** 2 + (ys - cy) ** 2 <= radius ** 2
        pixels[inside] = fg
    return make_image(pixels)


@pytest.fixture
def two_blob_image() -> GrayImage:
    return blob_image(64, [(16, 16), (48, 48)], radius=8)
