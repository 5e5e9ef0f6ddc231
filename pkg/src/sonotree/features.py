"""Per-sample feature extraction driver and the JSONL interchange format.

One record per sample per level:
    {"id": str, "level": "coarse"|"mid"|"fine", "shape": [ints], "data": [floats]}
Floats are serialized with 9 significant digits.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .pgm import load_pgm
from .vision.coarse import extract_global_features
from .vision.graph import build_spatial_graph, graph_to_fixed_vector, node_embeddings
from .vision.preprocess import preprocess
from .vision.regions import BuiltinSegmentationProvider, extract_region_features
from .vision.slic import slic_superpixels

LEVELS = ("coarse", "mid", "fine")


@dataclass
class FeatureRecord:
    sample_id: str
    level: str
    shape: list
    data: np.ndarray  # flattened row-major

    def to_json(self) -> str:
        values = ", ".join(f"{x:.9g}" for x in self.data.ravel())
        return (f'{{"id": {json.dumps(self.sample_id)}, "level": "{self.level}", '
                f'"shape": {json.dumps(list(self.shape))}, "data": [{values}]}}')

    @classmethod
    def from_json(cls, line: str) -> "FeatureRecord":
        obj = json.loads(line)
        return cls(sample_id=obj["id"], level=obj["level"], shape=obj["shape"],
                   data=np.asarray(obj["data"], dtype=np.float64))


def extract_sample(image_path, sample_id: str, provider=None, top_s: int = 8,
                   slic_k: int = 150, slic_m: float = 10.0) -> dict:
    """All three level vectors for one image file. Returns {level: 400-vector}."""
    provider = provider or BuiltinSegmentationProvider()
    img = preprocess(load_pgm(image_path))
    coarse = extract_global_features(img)
    mask = provider(img, sample_id)
    _, mid, _ = extract_region_features(img, mask, top_s)
    sp = slic_superpixels(img, k=slic_k, compactness=slic_m)
    graph = build_spatial_graph(sp, img, top_s)
    fine = graph_to_fixed_vector(node_embeddings(graph))
    return {"coarse": coarse, "mid": mid, "fine": fine}


def _worker_init():
    # one BLAS thread per worker; parallelism comes from the pool itself
    import os
    os.environ.setdefault("OMP_NUM_THREADS", "1")
    os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")


def _extract_one(args):
    path, sample_id, provider, top_s, slic_k, slic_m = args
    levels = extract_sample(path, sample_id, provider, top_s, slic_k, slic_m)
    return sample_id, levels


def extract_dataset(image_paths: dict, provider=None, top_s: int = 8,
                    slic_k: int = 150, slic_m: float = 10.0,
                    jobs: int = 1) -> dict:
    """Extract features for {sample_id: path}. Per-image work is pure, so
    worker count never changes the result; output is ordered by sample id."""
    provider = provider or BuiltinSegmentationProvider()
    items = sorted(image_paths.items())
    tasks = [(path, sid, provider, top_s, slic_k, slic_m) for sid, path in items]
    results = {}
    if jobs <= 1:
        for task in tasks:
            sid, levels = _extract_one(task)
            results[sid] = levels
    else:
        with ProcessPoolExecutor(max_workers=jobs, initializer=_worker_init) as pool:
            for sid, levels in pool.map(_extract_one, tasks, chunksize=8):
                results[sid] = levels
    return {sid: results[sid] for sid, _ in items}


def write_features_jsonl(path, features: dict) -> None:
    """features: {sample_id: {level: vector}} -> one JSONL record per level."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for sample_id in sorted(features):
            for level in LEVELS:
                vec = np.asarray(features[sample_id][level])
                rec = FeatureRecord(sample_id=sample_id, level=level,
                                    shape=list(vec.shape), data=vec)
                fh.write(rec.to_json() + "\n")


def read_features_jsonl(path) -> dict:
    features: dict = {}
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = FeatureRecord.from_json(line)
            features.setdefault(rec.sample_id, {})[rec.level] = \
                rec.data.reshape(rec.shape)
    return features
