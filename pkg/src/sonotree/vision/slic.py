"""SLIC superpixels: localized k-means over (intensity, x, y).

Grid-initialized centers, 10 assignment/update rounds with the search window
restricted to 2g x 2g around each center, then a connectivity pass that merges
orphaned fragments into their largest adjacent segment. Fully deterministic.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage
from skimage.measure import label as cc_label

from ..numerics import ContractViolation
from ..pgm import GrayImage, LabelMask

SLIC_ITERATIONS = 10
DEFAULT_SEGMENTS = 150
DEFAULT_COMPACTNESS = 10.0


def _grid_centers(width: int, height: int, k: int) -> np.ndarray:
    """Roughly k centers on a regular grid; returns (n, 3) of (intensity, x, y)
    with intensity filled later."""
    g = np.sqrt(width * height / k)
    nx = max(1, int(round(width / g)))
    ny = max(1, int(round(height / g)))
    xs = (np.arange(nx) + 0.5) * (width / nx)
    ys = (np.arange(ny) + 0.5) * (height / ny)
    centers = np.zeros((nx * ny, 3))
    i = 0
    for y in ys:
        for x in xs:
            centers[i, 1] = x
            centers[i, 2] = y
            i += 1
    return centers


def slic_superpixels(image: GrayImage, k: int = DEFAULT_SEGMENTS,
                     compactness: float = DEFAULT_COMPACTNESS,
                     iterations: int = SLIC_ITERATIONS) -> LabelMask:
    """Partition the image into ~k superpixels. Every pixel ends up labeled;
    labels are contiguous from 1."""
    h, w = image.height, image.width
    n = h * w
    if k < 1 or k > n:
        raise ContractViolation(f"slic: k={k} out of range for {w}x{h} image")
    if compactness <= 0:
        raise ContractViolation("slic: compactness must be positive")

    px = image.pixels.astype(np.float64)
    centers = _grid_centers(w, h, k)
    cx = np.clip(np.rint(centers[:, 1]).astype(int), 0, w - 1)
    cy = np.clip(np.rint(centers[:, 2]).astype(int), 0, h - 1)
    centers[:, 0] = px[cy, cx]

    g = np.sqrt(n / k)
    ratio = (compactness / g) ** 2  # weights squared spatial distance
    labels = np.full((h, w), -1, dtype=np.int32)
    ys_grid, xs_grid = np.mgrid[0:h, 0:w].astype(np.float64)

    for _ in range(iterations):
        best = np.full((h, w), np.inf)
        labels.fill(-1)
        for ci in range(centers.shape[0]):
            ci_int, ci_x, ci_y = centers[ci]
            x0 = max(0, int(ci_x - g))
            x1 = min(w, int(ci_x + g) + 1)
            y0 = max(0, int(ci_y - g))
            y1 = min(h, int(ci_y + g) + 1)
            if x0 >= x1 or y0 >= y1:
                continue
            window = px[y0:y1, x0:x1]
            d_c2 = (window - ci_int) ** 2
            d_s2 = (xs_grid[y0:y1, x0:x1] - ci_x) ** 2 + (ys_grid[y0:y1, x0:x1] - ci_y) ** 2
            dist = d_c2 + d_s2 * ratio
            view_best = best[y0:y1, x0:x1]
            improved = dist < view_best
            view_best[improved] = dist[improved]
            labels[y0:y1, x0:x1][improved] = ci
        # pixels no window reached go to the spatially nearest center
        unassigned = labels < 0
        if unassigned.any():
            uy, ux = np.nonzero(unassigned)
            d = (ux[:, None] - centers[None, :, 1]) ** 2 + \
                (uy[:, None] - centers[None, :, 2]) ** 2
            labels[uy, ux] = np.argmin(d, axis=1)
        # update centers as the mean of their pixels
        flat = labels.ravel()
        counts = np.bincount(flat, minlength=centers.shape[0]).astype(np.float64)
        sums_i = np.bincount(flat, weights=px.ravel(), minlength=centers.shape[0])
        sums_x = np.bincount(flat, weights=xs_grid.ravel(), minlength=centers.shape[0])
        sums_y = np.bincount(flat, weights=ys_grid.ravel(), minlength=centers.shape[0])
        nonempty = counts > 0
        centers[nonempty, 0] = sums_i[nonempty] / counts[nonempty]
        centers[nonempty, 1] = sums_x[nonempty] / counts[nonempty]
        centers[nonempty, 2] = sums_y[nonempty] / counts[nonempty]

    labels = _enforce_connectivity(labels)
    return LabelMask(width=w, height=h, labels=labels)


def _neighbor_pairs(a: np.ndarray, b: np.ndarray):
    """All 4-connected (a-value, b-value) pairs between two label images."""
    pairs = [
        np.stack([a[:, :-1].ravel(), b[:, 1:].ravel()], axis=1),
        np.stack([a[:, 1:].ravel(), b[:, :-1].ravel()], axis=1),
        np.stack([a[:-1, :].ravel(), b[1:, :].ravel()], axis=1),
        np.stack([a[1:, :].ravel(), b[:-1, :].ravel()], axis=1),
    ]
    return np.concatenate(pairs, axis=0)


def _enforce_connectivity(labels: np.ndarray) -> np.ndarray:
    """Keep the largest connected fragment of each superpixel; merge the rest
    into the largest adjacent segment. Relabels contiguously from 1."""
    comps = cc_label(labels, connectivity=1)
    n_comps = int(comps.max())
    comp_sizes = np.bincount(comps.ravel())
    # superpixel label of each component (label is constant inside a component)
    comp_label = np.zeros(n_comps + 1, dtype=np.int64)
    order = np.argsort(comps.ravel(), kind="stable")
    boundaries = np.searchsorted(comps.ravel()[order], np.arange(1, n_comps + 1))
    comp_label[1:] = labels.ravel()[order[boundaries]]

    # each superpixel keeps only its largest fragment
    keep = {}
    for comp_id in range(1, n_comps + 1):
        lbl = comp_label[comp_id]
        if lbl not in keep or comp_sizes[comp_id] > comp_sizes[keep[lbl]]:
            keep[lbl] = comp_id
    keep_mask = np.zeros(n_comps + 1, dtype=bool)
    for cid in keep.values():
        keep_mask[cid] = True

    out = np.where(keep_mask[comps], labels, -1).astype(np.int64)
    # primary-segment areas decide merge targets (frozen before any merging)
    seg_area = np.zeros(int(labels.max()) + 1, dtype=np.int64)
    for lbl, cid in keep.items():
        seg_area[lbl] = comp_sizes[cid]

    # iteratively attach orphan components to the largest adjacent segment;
    # ranking key (area, -label) is encoded so the max pair wins vectorially
    max_label = int(labels.max())
    while True:
        orphan = out < 0
        if not orphan.any():
            break
        pairs = _neighbor_pairs(comps, out)
        pairs = pairs[(pairs[:, 0] > 0) & (pairs[:, 1] >= 0)]
        orphan_comp = np.zeros(n_comps + 1, dtype=bool)
        orphan_comp[np.unique(comps[orphan])] = True
        pairs = pairs[orphan_comp[pairs[:, 0]]]
        if pairs.shape[0] == 0:
            # isolated orphans (no assigned neighbor anywhere): keep own label
            out[orphan] = labels[orphan]
            break
        rank = seg_area[pairs[:, 1]] * (max_label + 2) + (max_label - pairs[:, 1])
        order2 = np.lexsort((rank, pairs[:, 0]))
        sorted_pairs = pairs[order2]
        comps_sorted = sorted_pairs[:, 0]
        is_last = np.r_[comps_sorted[1:] != comps_sorted[:-1], True]
        winners = sorted_pairs[is_last]  # highest rank per orphan component
        target = np.full(n_comps + 1, -1, dtype=np.int64)
        target[winners[:, 0]] = winners[:, 1]
        fill = orphan & (target[comps] >= 0)
        out[fill] = target[comps][fill]

    # contiguous relabel from 1, ordered by original label value
    uniques = np.unique(out)
    remap = {int(v): i + 1 for i, v in enumerate(sorted(int(v) for v in uniques))}
    lut = np.zeros(int(out.max()) + 1, dtype=np.int32)
    for v, new in remap.items():
        lut[v] = new
    return lut[out].astype(np.int32)
