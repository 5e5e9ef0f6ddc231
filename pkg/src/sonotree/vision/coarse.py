"""Coarse-grain image description and scan-plane orientation classification.

The global descriptor is deterministic and training-free: a 64-bin intensity
histogram, Gabor energies (4 scales x 6 orientations) pooled over a 4x4 block
grid, and gray-level co-occurrence statistics at 4 offsets, all concatenated
and mapped to a fixed 400-dimensional unit vector by a seeded random
projection.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft

from ..numerics import Rng, l2_normalize, random_projection, softmax
from ..pgm import GrayImage

PROJECTION_SEED = 0xC0A5E
FEATURE_DIM = 400

HIST_BINS = 64
GABOR_WAVELENGTHS = (4.0, 8.0, 16.0, 32.0)
GABOR_ORIENTATIONS = 6
GABOR_GAMMA = 0.5
BLOCK_GRID = 4
GLCM_LEVELS = 32
GLCM_OFFSETS = ((0, 1), (1, 0), (1, 1), (1, -1))

DESCRIPTOR_DIM = (HIST_BINS
                  + len(GABOR_WAVELENGTHS) * GABOR_ORIENTATIONS * BLOCK_GRID ** 2
                  + 4 * len(GLCM_OFFSETS))

ORIENTATIONS = ("transverse", "longitudinal")


# ---------------------------------------------------------------------------
# descriptor pieces
# ---------------------------------------------------------------------------

def intensity_histogram(pixels: np.ndarray, bins: int = HIST_BINS) -> np.ndarray:
    counts = np.bincount(((pixels.astype(np.int64) * bins) // 256).ravel(),
                         minlength=bins)
    return counts.astype(np.float64) / max(pixels.size, 1)


@lru_cache(maxsize=1)
def _gabor_bank() -> np.ndarray:
    """24 zero-mean Gabor kernels embedded in a common canvas."""
    sigma_max = 0.56 * max(GABOR_WAVELENGTHS)
    half = int(np.ceil(2.2 * sigma_max))
    size = 2 * half + 1
    ys, xs = np.mgrid[-half:half + 1, -half:half + 1].astype(np.float64)
    bank = np.zeros((len(GABOR_WAVELENGTHS) * GABOR_ORIENTATIONS, size, size))
    i = 0
    for lam in GABOR_WAVELENGTHS:
        sigma = 0.56 * lam
        for k in range(GABOR_ORIENTATIONS):
            theta = np.pi * k / GABOR_ORIENTATIONS
            xr = xs * np.cos(theta) + ys * np.sin(theta)
            yr = -xs * np.sin(theta) + ys * np.cos(theta)
            envelope = np.exp(-(xr ** 2 + (GABOR_GAMMA * yr) ** 2) / (2 * sigma ** 2))
            kernel = envelope * np.cos(2 * np.pi * xr / lam)
            kernel -= kernel.mean()  # kill the DC response
            bank[i] = kernel
            i += 1
    bank.setflags(write=False)
    return bank


@lru_cache(maxsize=16)
def _bank_ffts(padded_shape: tuple) -> np.ndarray:
    bank = _gabor_bank()
    return scipy.fft.rfft2(bank, s=padded_shape)


def gabor_block_energies(pixels: np.ndarray) -> np.ndarray:
    """Mean squared Gabor response per filter per 4x4 block, log-compressed."""
    img = pixels.astype(np.float64) / 255.0
    h, w = img.shape
    bank = _gabor_bank()
    kh = bank.shape[1]
    padded = (scipy.fft.next_fast_len(h + kh - 1), scipy.fft.next_fast_len(w + kh - 1))
    img_fft = scipy.fft.rfft2(img, s=padded)
    responses = scipy.fft.irfft2(img_fft[None, :, :] * _bank_ffts(padded), s=padded)
    half = kh // 2
    responses = responses[:, half:half + h, half:half + w]
    energy = responses ** 2
    out = np.empty(bank.shape[0] * BLOCK_GRID ** 2)
    i = 0
    for resp in energy:
        for row_block in np.array_split(resp, BLOCK_GRID, axis=0):
            for block in np.array_split(row_block, BLOCK_GRID, axis=1):
                out[i] = np.log1p(block.mean())
                i += 1
    return out


def glcm_stats(pixels: np.ndarray, levels: int = GLCM_LEVELS) -> np.ndarray:
    """contrast, homogeneity, energy, correlation for each co-occurrence offset."""
    q = (pixels.astype(np.int64) * levels) // 256
    idx = np.arange(levels, dtype=np.float64)
    diff = idx[:, None] - idx[None, :]
    stats = []
    for dy, dx in GLCM_OFFSETS:
        a = q[max(0, -dy):q.shape[0] - max(0, dy), max(0, -dx):q.shape[1] - max(0, dx)]
        b = q[max(0, dy):q.shape[0] + min(0, dy), max(0, dx):q.shape[1] + min(0, dx)]
        counts = np.bincount((a * levels + b).ravel(), minlength=levels * levels)
        p = counts.reshape(levels, levels).astype(np.float64)
        total = p.sum()
        if total == 0:
            stats.extend([0.0, 0.0, 0.0, 0.0])
            continue
        p /= total
        contrast = float((p * diff ** 2).sum())
        homogeneity = float((p / (1.0 + np.abs(diff))).sum())
        energy = float((p ** 2).sum())
        pi, pj = p.sum(axis=1), p.sum(axis=0)
        mi, mj = float(pi @ idx), float(pj @ idx)
        si = float(np.sqrt(pi @ (idx - mi) ** 2))
        sj = float(np.sqrt(pj @ (idx - mj) ** 2))
        if si > 1e-12 and sj > 1e-12:
            correlation = float(((p * np.outer(idx - mi, idx - mj)).sum()) / (si * sj))
        else:
            correlation = 0.0
        stats.extend([contrast, homogeneity, energy, correlation])
    return np.array(stats)


def descriptor_vector(pixels: np.ndarray) -> np.ndarray:
    """Raw concatenated descriptor (length DESCRIPTOR_DIM) before projection."""
    return np.concatenate([
        intensity_histogram(pixels),
        gabor_block_energies(pixels),
        glcm_stats(pixels),
    ])


def project_features(raw: np.ndarray, seed: int = PROJECTION_SEED,
                     dim: int = FEATURE_DIM) -> np.ndarray:
    proj = random_projection(raw.shape[0], dim, seed)
    return l2_normalize(proj @ raw)


def extract_global_features(image: GrayImage) -> np.ndarray:
    """400-d unit-norm coarse feature vector for a preprocessed image."""
    return project_features(descriptor_vector(image.pixels))


class GlobalFeatureExtractor:
    """sklearn-style transformer: list of GrayImage -> (n, 400) coarse features."""

    def __init__(self, projection_seed: int = PROJECTION_SEED):
        self.projection_seed = projection_seed

    def get_params(self, deep=True):
        return {"projection_seed": self.projection_seed}

    def set_params(self, **params):
        for key, value in params.items():
            setattr(self, key, value)
        return self

    def fit(self, images, y=None):
        return self

    def transform(self, images) -> np.ndarray:
        return np.stack([
            project_features(descriptor_vector(img.pixels), self.projection_seed)
            for img in images])


# ---------------------------------------------------------------------------
# orientation classifier: 1 hidden dense layer, 10 units
# ---------------------------------------------------------------------------

ORIENT_HIDDEN = 10


def orientation_features(image: GrayImage) -> np.ndarray:
    """64-bin histogram plus normalized row/column gradient energies (66 dims)."""
    px = image.pixels.astype(np.float64) / 255.0
    hist = intensity_histogram(image.pixels)
    row_energy = float(np.mean(np.diff(px, axis=0) ** 2))
    col_energy = float(np.mean(np.diff(px, axis=1) ** 2))
    total = row_energy + col_energy
    if total > 0:
        row_energy, col_energy = row_energy / total, col_energy / total
    return np.concatenate([hist, [row_energy, col_energy]])


@dataclass
class OrientationModel:
    w1: np.ndarray  # hidden x input
    b1: np.ndarray
    w2: np.ndarray  # 2 x hidden
    b2: np.ndarray

    @classmethod
    def zeros(cls, in_dim: int = HIST_BINS + 2) -> "OrientationModel":
        return cls(w1=np.zeros((ORIENT_HIDDEN, in_dim)), b1=np.zeros(ORIENT_HIDDEN),
                   w2=np.zeros((2, ORIENT_HIDDEN)), b2=np.zeros(2))

    @classmethod
    def init(cls, rng: Rng, in_dim: int = HIST_BINS + 2) -> "OrientationModel":
        return cls(w1=rng.normals((ORIENT_HIDDEN, in_dim)) * 0.1,
                   b1=np.zeros(ORIENT_HIDDEN),
                   w2=rng.normals((2, ORIENT_HIDDEN)) * 0.1,
                   b2=np.zeros(2))


def classify_orientation(image: GrayImage, model: OrientationModel):
    """Returns (label, probability); ties resolve to the first class."""
    x = orientation_features(image)
    hidden = np.maximum(model.w1 @ x + model.b1, 0.0)
    probs = softmax(model.w2 @ hidden + model.b2)
    idx = int(np.argmax(probs))  # argmax takes the first index on ties
    return ORIENTATIONS[idx], float(probs[idx])


def train_orientation(images, labels, rng: Rng, epochs: int = 200,
                      lr: float = 0.05) -> OrientationModel:
    """Plain gradient descent on cross-entropy; labels index ORIENTATIONS."""
    feats = np.stack([orientation_features(img) for img in images])
    targets = np.zeros((len(labels), 2))
    targets[np.arange(len(labels)), labels] = 1.0
    model = OrientationModel.init(rng, in_dim=feats.shape[1])
    n = feats.shape[0]
    for _ in range(epochs):
        pre = feats @ model.w1.T + model.b1
        hidden = np.maximum(pre, 0.0)
        logits = hidden @ model.w2.T + model.b2
        shifted = logits - logits.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        probs = e / e.sum(axis=1, keepdims=True)
        dlogits = (probs - targets) / n
        dw2 = dlogits.T @ hidden
        db2 = dlogits.sum(axis=0)
        dhidden = (dlogits @ model.w2) * (pre > 0)
        dw1 = dhidden.T @ feats
        db1 = dhidden.sum(axis=0)
        model.w1 -= lr * dw1
        model.b1 -= lr * db1
        model.w2 -= lr * dw2
        model.b2 -= lr * db2
    return model
