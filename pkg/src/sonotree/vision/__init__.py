"""Three-level hierarchical visual feature extraction."""

from .coarse import (
    GlobalFeatureExtractor,
    OrientationModel,
    classify_orientation,
    extract_global_features,
    train_orientation,
)
from .graph import (
    GraphFeatureExtractor,
    SpatialGraph,
    build_spatial_graph,
    graph_to_fixed_vector,
    node_embeddings,
)
from .preprocess import preprocess
from .regions import (
    BuiltinSegmentationProvider,
    FileSegmentationProvider,
    MissingMaskError,
    Region,
    RegionFeatureExtractor,
    SegmentationError,
    extract_region_features,
    select_top_s,
)
from .slic import slic_superpixels

__all__ = [
    "BuiltinSegmentationProvider",
    "FileSegmentationProvider",
    "GlobalFeatureExtractor",
    "GraphFeatureExtractor",
    "MissingMaskError",
    "OrientationModel",
    "Region",
    "RegionFeatureExtractor",
    "SegmentationError",
    "SpatialGraph",
    "build_spatial_graph",
    "classify_orientation",
    "extract_global_features",
    "extract_region_features",
    "graph_to_fixed_vector",
    "node_embeddings",
    "preprocess",
    "select_top_s",
    "slic_superpixels",
    "train_orientation",
]
