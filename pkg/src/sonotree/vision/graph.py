"""Fine-grain features: superpixel spatial graph and its node embeddings.

Nodes are the top-S superpixel regions (same informativeness score as the
mid level); edges join border-sharing regions and 4-nearest centroids.
Node vectors combine local statistics with spectral coordinates from the
symmetric normalized Laplacian, projected to 400 dims.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..numerics import ContractViolation, Rng, l2_normalize, random_projection
from ..pgm import GrayImage, LabelMask
from .coarse import FEATURE_DIM, PROJECTION_SEED
from .regions import Region, select_top_s

KNN_NEIGHBORS = 4
SPECTRAL_DIM = 8
NODE_BASE_DIM = 8 + SPECTRAL_DIM  # stats + spectral coordinates
_EIG_SEED = 0x1A9


@dataclass
class GraphNode:
    region: Region
    attributes: np.ndarray  # the 8 local statistics (degree filled later)


@dataclass
class SpatialGraph:
    nodes: list
    edges: list  # (i, j, weight) with i < j, no duplicates

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def degree(self, i: int) -> int:
        return sum(1 for a, b, _ in self.edges if a == i or b == i)

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n_nodes, self.n_nodes))
        for i, j, _ in self.edges:
            a[i, j] = a[j, i] = 1.0
        return a


def _border_pairs(labels: np.ndarray) -> set:
    """Unordered label pairs that share a 4-connected pixel border."""
    pairs = set()
    for a, b in ((labels[:, :-1], labels[:, 1:]), (labels[:-1, :], labels[1:, :])):
        diff = a != b
        stacked = np.stack([a[diff], b[diff]], axis=1)
        if stacked.size:
            lo = stacked.min(axis=1)
            hi = stacked.max(axis=1)
            pairs.update(zip(lo.tolist(), hi.tolist()))
    return pairs


def build_spatial_graph(mask: LabelMask, image: GrayImage, s: int) -> SpatialGraph:
    """Graph over the top-s superpixels; edge weights are centroid distances
    normalized by the image diagonal, so weights lie in (0, 1]."""
    if s < 1:
        raise ContractViolation("build_spatial_graph: s must be >= 1")
    regions = select_top_s(mask, image, s)
    if not regions:
        raise ContractViolation("build_spatial_graph: mask has no regions")
    index_of = {r.label: i for i, r in enumerate(regions)}
    n = len(regions)

    centroids_px = np.array([
        [r.centroid[0] * (mask.width - 1), r.centroid[1] * (mask.height - 1)]
        for r in regions])
    edge_set = set()

    # (a) border adjacency restricted to selected regions
    for lo, hi in _border_pairs(mask.labels):
        if lo in index_of and hi in index_of and lo != hi:
            i, j = index_of[lo], index_of[hi]
            edge_set.add((min(i, j), max(i, j)))

    # (b) 4-nearest-centroid neighbors
    if n > 1:
        d2 = ((centroids_px[:, None, :] - centroids_px[None, :, :]) ** 2).sum(axis=2)
        np.fill_diagonal(d2, np.inf)
        k = min(KNN_NEIGHBORS, n - 1)
        for i in range(n):
            # stable order: distance, then index
            order = np.lexsort((np.arange(n), d2[i]))
            for j in order[:k]:
                edge_set.add((min(i, int(j)), max(i, int(j))))

    diag = float(np.hypot(mask.width, mask.height))
    edges = []
    for i, j in sorted(edge_set):
        dist = float(np.linalg.norm(centroids_px[i] - centroids_px[j]))
        edges.append((i, j, max(dist, 1e-12) / diag))

    nodes = []
    total = mask.width * mask.height
    for r in regions:
        nodes.append(GraphNode(region=r, attributes=np.array([
            r.centroid[0],
            r.centroid[1],
            r.bbox[2] / mask.width,
            r.bbox[3] / mask.height,
            r.area / total,
            r.mean_intensity / 255.0,
            r.std_intensity / 255.0,
            0.0,  # degree slot, filled by node_embeddings
        ])))
    return SpatialGraph(nodes=nodes, edges=edges)


def laplacian_coordinates(graph: SpatialGraph, dim: int = SPECTRAL_DIM) -> np.ndarray:
    """First `dim` eigenvectors (ascending eigenvalue) of the symmetric
    normalized Laplacian via power iteration with deflation on 2I - L.
    Graphs without edges give all-zero coordinates."""
    n = graph.n_nodes
    coords = np.zeros((n, dim))
    if n < 2 or not graph.edges:
        return coords
    a = graph.adjacency()
    deg = a.sum(axis=1)
    inv_sqrt = np.where(deg > 0, 1.0 / np.sqrt(np.maximum(deg, 1e-300)), 0.0)
    lap = np.eye(n) - (inv_sqrt[:, None] * a * inv_sqrt[None, :])
    # eigenvalues of lap lie in [0, 2]; shift so the smallest become dominant
    m = 2.0 * np.eye(n) - lap
    found = np.zeros((0, n))
    n_vecs = min(dim, n)
    for idx in range(n_vecs):
        rng = Rng(_EIG_SEED + idx)
        v = rng.normals(n)
        if len(found):
            v = v - found.T @ (found @ v)
        norm = np.linalg.norm(v)
        v = v / norm if norm > 0 else np.eye(n)[idx]
        for _ in range(100):
            w = m @ v
            if len(found):
                w = w - found.T @ (found @ w)
            norm = np.linalg.norm(w)
            if norm < 1e-300:
                break
            w = w / norm
            if np.linalg.norm(w - v) < 1e-9 or np.linalg.norm(w + v) < 1e-9:
                v = w
                break
            v = w
        peak = int(np.argmax(np.abs(v)))
        if v[peak] < 0:
            v = -v
        found = np.vstack([found, v])
        coords[:, idx] = v
    return coords


def node_embeddings(graph: SpatialGraph) -> np.ndarray:
    """(s, 400) matrix: 16 base dims (stats + degree + spectral coords)
    through the fixed seeded projection, rows L2-normalized."""
    n = graph.n_nodes
    spectral = laplacian_coordinates(graph)
    base = np.zeros((n, NODE_BASE_DIM))
    for i, node in enumerate(graph.nodes):
        attrs = node.attributes.copy()
        attrs[7] = float(graph.degree(i))
        base[i, :8] = attrs
        base[i, 8:] = spectral[i]
    proj = random_projection(NODE_BASE_DIM, FEATURE_DIM, PROJECTION_SEED)
    return l2_normalize(base @ proj.T, axis=1)


def graph_to_fixed_vector(embeddings: np.ndarray) -> np.ndarray:
    """Reduce (s, 400) node embeddings to one unit 400-vector: column mean plus
    the leading principal direction scaled by its singular value."""
    if embeddings.ndim != 2 or embeddings.shape[0] < 1:
        raise ContractViolation("graph_to_fixed_vector: need at least one row")
    if embeddings.shape[0] == 1:
        return l2_normalize(embeddings[0])
    mean = embeddings.mean(axis=0)
    centered = embeddings - mean
    from ..numerics import top_singular_direction
    direction, sigma = top_singular_direction(centered)
    return l2_normalize(mean + sigma * direction)


class GraphFeatureExtractor:
    """sklearn-style transformer: GrayImage list -> (n, 400) fine features."""

    def __init__(self, segments: int = 150, compactness: float = 10.0,
                 top_s: int = 8):
        self.segments = segments
        self.compactness = compactness
        self.top_s = top_s

    def get_params(self, deep=True):
        return {"segments": self.segments, "compactness": self.compactness,
                "top_s": self.top_s}

    def set_params(self, **params):
        for key, value in params.items():
            setattr(self, key, value)
        return self

    def fit(self, images, y=None):
        return self

    def transform(self, images) -> np.ndarray:
        from .slic import slic_superpixels
        out = np.zeros((len(images), FEATURE_DIM))
        for i, img in enumerate(images):
            mask = slic_superpixels(img, k=self.segments,
                                    compactness=self.compactness)
            graph = build_spatial_graph(mask, img, self.top_s)
            out[i] = graph_to_fixed_vector(node_embeddings(graph))
        return out
