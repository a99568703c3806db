"""Graph-convolution re-ranking for retrieval features.

Features are improved by propagating them over global and cross-camera k-NN
similarity graphs; retrieval afterwards is plain Euclidean distance.
Multi-image tracklets can first be collapsed to profile vectors through a
closed-form per-camera ridge system. Includes a deterministic synthetic data
generator and CMC/mAP evaluation.
"""

from gcr.errors import (
    GcrError,
    MalformedHeaderError,
    MetaMismatchError,
    NonFiniteError,
    NumericError,
    PayloadSizeError,
    PropagationError,
    ValidationError,
    ZeroRowError,
)
from gcr.evaluation import EvalReport, RankedList, dump_ranked_csv, evaluate, rank
from gcr.features import (
    FeatureSet,
    RowMeta,
    l2_normalize,
    load_features,
    save_features,
)
from gcr.graphs import (
    LocalGraph,
    SimilarityGraph,
    build_similarity,
    knn_cross_camera,
    knn_global,
    local_graphs,
    pairwise_sq_dist,
    symmetrize,
)
from gcr.profiles import (
    ProfileSet,
    PvgConfig,
    load_profiles,
    margin_labels,
    mean_profile,
    pvg,
    ridge_profile,
    save_profiles,
)
from gcr.projection import pca_coords, write_projection_csv
from gcr.propagation import GcrConfig, fused_step, gcr, gcr_local, gcr_sym, propagate_once
from gcr.synth import SplitMix64, SynthConfig, generate

__version__ = "0.1.0"

__all__ = [
    "EvalReport",
    "FeatureSet",
    "GcrConfig",
    "GcrError",
    "LocalGraph",
    "MalformedHeaderError",
    "MetaMismatchError",
    "NonFiniteError",
    "NumericError",
    "PayloadSizeError",
    "ProfileSet",
    "PropagationError",
    "PvgConfig",
    "RankedList",
    "RowMeta",
    "SimilarityGraph",
    "SplitMix64",
    "SynthConfig",
    "ValidationError",
    "ZeroRowError",
    "build_similarity",
    "dump_ranked_csv",
    "evaluate",
    "fused_step",
    "gcr",
    "gcr_local",
    "gcr_sym",
    "generate",
    "knn_cross_camera",
    "knn_global",
    "l2_normalize",
    "load_features",
    "load_profiles",
    "local_graphs",
    "margin_labels",
    "mean_profile",
    "pairwise_sq_dist",
    "pca_coords",
    "propagate_once",
    "pvg",
    "rank",
    "ridge_profile",
    "save_features",
    "save_profiles",
    "symmetrize",
    "write_projection_csv",
]
