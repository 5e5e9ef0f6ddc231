"""Region segmentation providers and mid-grain per-region features.

Two mask sources: the builtin provider (Otsu threshold, connected components,
watershed split of oversized components) which keeps the pipeline
self-contained, and a file provider that reads externally exported 16-bit PGM
masks. Regions are ranked by informativeness = area * mean gradient magnitude
and described by the coarse descriptor of their masked crop plus geometry.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage
from skimage.segmentation import watershed

from ..numerics import ContractViolation, l2_normalize, random_projection
from ..pgm import GrayImage, LabelMask, load_pgm_mask
from .coarse import DESCRIPTOR_DIM, FEATURE_DIM, PROJECTION_SEED, descriptor_vector
from .preprocess import bilinear_resize

GEOMETRY_DIM = 8
REGION_RAW_DIM = DESCRIPTOR_DIM + GEOMETRY_DIM
CROP_SIZE = 96  # canonical crop resolution for the per-region descriptor
OVERSIZE_FRACTION = 0.25  # components above this image fraction get split


class SegmentationError(RuntimeError):
    """Segmentation could not produce a usable mask."""


class MissingMaskError(FileNotFoundError):
    """File provider was asked for a mask that does not exist."""


@dataclass
class Region:
    label: int
    bbox: tuple  # (x, y, w, h) in pixels
    centroid: tuple  # (cx, cy) normalized to [0, 1]
    area: int
    mean_intensity: float
    std_intensity: float
    mean_gradient: float

    @property
    def informativeness(self) -> float:
        return self.area * self.mean_gradient


def otsu_threshold(pixels: np.ndarray) -> int:
    """Classic between-class variance maximization over the 256-bin histogram."""
    hist = np.bincount(pixels.ravel(), minlength=256).astype(np.float64)
    total = hist.sum()
    probs = hist / total
    omega = np.cumsum(probs)
    mu = np.cumsum(probs * np.arange(256))
    mu_total = mu[-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        sigma_b = (mu_total * omega - mu) ** 2 / (omega * (1.0 - omega))
    sigma_b[~np.isfinite(sigma_b)] = 0.0
    return int(np.argmax(sigma_b))


def _split_oversized(mask: np.ndarray, component: np.ndarray, next_label: int):
    """Watershed an oversized component using distance-transform peaks as markers."""
    dist = ndimage.distance_transform_edt(component)
    # local maxima of the distance map, suppressed within a neighborhood
    footprint = np.ones((15, 15), dtype=bool)
    peaks = (dist == ndimage.maximum_filter(dist, footprint=footprint)) & (dist > 2)
    markers, n_markers = ndimage.label(peaks)
    if n_markers < 2:
        mask[component] = next_label
        return next_label + 1
    parts = watershed(-dist, markers=markers, mask=component)
    for part_id in range(1, n_markers + 1):
        part = parts == part_id
        if part.any():
            mask[part] = next_label
            next_label += 1
    return next_label


def builtin_segment(image: GrayImage) -> LabelMask:
    """Otsu + connected components; components over 25% of the image are
    watershed-split. Deterministic."""
    px = image.pixels
    thresh = otsu_threshold(px)
    foreground = px > thresh
    if not foreground.any():
        raise SegmentationError("no foreground regions")
    comps, n_comps = ndimage.label(foreground)
    if n_comps == 0:
        raise SegmentationError("no foreground regions")
    out = np.zeros_like(comps, dtype=np.int32)
    next_label = 1
    limit = OVERSIZE_FRACTION * px.size
    sizes = np.bincount(comps.ravel())
    for comp_id in range(1, n_comps + 1):
        component = comps == comp_id
        if sizes[comp_id] > limit:
            next_label = _split_oversized(out, component, next_label)
        else:
            out[component] = next_label
            next_label += 1
    return LabelMask(width=image.width, height=image.height, labels=out)


class BuiltinSegmentationProvider:
    """Deterministic threshold-based provider; ignores the sample id."""

    def __call__(self, image: GrayImage, sample_id: str = "") -> LabelMask:
        return builtin_segment(image)


class FileSegmentationProvider:
    """Reads sibling 16-bit PGM masks named <sample_id>.pgm from a directory."""

    def __init__(self, mask_dir):
        self.mask_dir = Path(mask_dir)

    def __call__(self, image: GrayImage, sample_id: str) -> LabelMask:
        path = self.mask_dir / f"{sample_id}.pgm"
        if not path.exists():
            raise MissingMaskError(f"mask not found: {path}")
        mask = load_pgm_mask(path)
        if (mask.width, mask.height) != (image.width, image.height):
            raise SegmentationError(
                f"mask {mask.width}x{mask.height} does not match image "
                f"{image.width}x{image.height} for {sample_id}")
        return mask


def gradient_magnitude(pixels: np.ndarray) -> np.ndarray:
    px = pixels.astype(np.float64)
    gy, gx = np.gradient(px)
    return np.sqrt(gx ** 2 + gy ** 2)


def region_stats(mask: LabelMask, image: GrayImage) -> list:
    """Per-label geometry and intensity statistics, ordered by label id."""
    labels = mask.labels
    px = image.pixels.astype(np.float64)
    grad = gradient_magnitude(image.pixels)
    regions = []
    for label in mask.region_ids():
        where = labels == label
        ys, xs = np.nonzero(where)
        area = xs.size
        if area == 0:
            continue
        x0, x1 = int(xs.min()), int(xs.max())
        y0, y1 = int(ys.min()), int(ys.max())
        cx = float(xs.mean()) / max(mask.width - 1, 1)
        cy = float(ys.mean()) / max(mask.height - 1, 1)
        regions.append(Region(
            label=label,
            bbox=(x0, y0, x1 - x0 + 1, y1 - y0 + 1),
            centroid=(cx, cy),
            area=int(area),
            mean_intensity=float(px[where].mean()),
            std_intensity=float(px[where].std()),
            mean_gradient=float(grad[where].mean()),
        ))
    return regions


def select_top_s(mask: LabelMask, image: GrayImage, s: int) -> list:
    """Top-s regions by informativeness, ties broken by lower label id."""
    if s < 1:
        raise ContractViolation("select_top_s: s must be >= 1")
    regions = region_stats(mask, image)
    regions.sort(key=lambda r: (-r.informativeness, r.label))
    return regions[:s]


def _eccentricity_proxy(xs: np.ndarray, ys: np.ndarray) -> float:
    """sqrt(1 - minor/major) from the second moments of the pixel coordinates."""
    if xs.size < 2:
        return 0.0
    coords = np.stack([xs.astype(np.float64), ys.astype(np.float64)])
    cov = np.cov(coords)
    eigvals = np.sort(np.linalg.eigvalsh(cov))
    if eigvals[1] <= 1e-12:
        return 0.0
    return float(np.sqrt(max(0.0, 1.0 - eigvals[0] / eigvals[1])))


def extract_region_features(image: GrayImage, mask: LabelMask, s: int):
    """(s, 400) matrix of per-region descriptors (zero rows pad) and the
    mid-level 400-d reduction (column mean over non-padded rows, unit norm)."""
    regions = select_top_s(mask, image, s)
    if not regions:
        raise ContractViolation("extract_region_features: no regions available")
    matrix = np.zeros((s, FEATURE_DIM))
    for i, region in enumerate(regions):
        matrix[i] = masked_region_descriptor(image, mask, region)
    reduced = l2_normalize(matrix[:len(regions)].mean(axis=0))
    return matrix, reduced, len(regions)


def masked_region_descriptor(image: GrayImage, mask: LabelMask,
                             region: Region) -> np.ndarray:
    """Descriptor of the bounding-box crop with non-region pixels zeroed."""
    x, y, w, h = region.bbox
    crop = image.pixels[y:y + h, x:x + w].astype(np.float64)
    inside = mask.labels[y:y + h, x:x + w] == region.label
    crop = crop * inside
    resized = bilinear_resize(crop, CROP_SIZE, CROP_SIZE)
    crop_u8 = np.clip(np.rint(resized), 0, 255).astype(np.uint8)
    texture = descriptor_vector(crop_u8)
    ys, xs = np.nonzero(inside)
    geometry = np.array([
        region.centroid[0],
        region.centroid[1],
        w / image.width,
        h / image.height,
        region.area / (image.width * image.height),
        _eccentricity_proxy(xs, ys),
        region.mean_intensity / 255.0,
        region.std_intensity / 255.0,
    ])
    raw = np.concatenate([texture, geometry])
    proj = random_projection(raw.shape[0], FEATURE_DIM, PROJECTION_SEED)
    return l2_normalize(proj @ raw)


class RegionFeatureExtractor:
    """sklearn-style transformer: images + provider -> (n, 400) mid features."""

    def __init__(self, provider=None, top_s: int = 8):
        self.provider = provider
        self.top_s = top_s

    def get_params(self, deep=True):
        return {"provider": self.provider, "top_s": self.top_s}

    def set_params(self, **params):
        for key, value in params.items():
            setattr(self, key, value)
        return self

    def fit(self, images, y=None):
        return self

    def transform(self, images, sample_ids=None) -> np.ndarray:
        provider = self.provider or BuiltinSegmentationProvider()
        ids = sample_ids or [""] * len(images)
        out = np.zeros((len(images), FEATURE_DIM))
        for i, (img, sid) in enumerate(zip(images, ids)):
            mask = provider(img, sid)
            _, reduced, _ = extract_region_features(img, mask, self.top_s)
            out[i] = reduced
        return out
