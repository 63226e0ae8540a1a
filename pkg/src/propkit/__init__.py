"""Open-category object proposal toolkit.

Generates class-agnostic box proposals, scores them by the entropy of
their image-text similarity rows, merges fragmented boxes over a proposal
graph, refines coordinates with a small learned regressor, and evaluates
recall/AR/AP against ground truth.
"""

from ._kernels import HAVE_COMPILED
from ._version import __version__
from .embeddings import (
    CategoryVocabulary,
    cosine_similarity,
    load_embedding_file,
    softmax,
    store_embedding_file,
)
from .errors import (
    BackendError,
    ConfigError,
    FormatError,
    StageError,
    ToolkitError,
    ValidationError,
)
from .evaluation import (
    GroundTruth,
    MetricReport,
    average_recall,
    compute_report,
    detect_and_ap,
    load_ground_truth,
    recall_at,
)
from .geometry import BBox, NormalizedBBox, envelope, iou, nms, pairwise_iou
from .images import ImageRef, discover_images, load_image
from .initial import InitialProposal, generate_builtin, load_proposals
from .merging import (
    MergeConfig,
    ProposalGraph,
    build_graph,
    connected_components,
    merge_components,
)
from .pipeline import PipelineConfig, ablate, analyze, load_config, run, train_regressor
from .providers import (
    EmbeddingProvider,
    OnnxEncoderProvider,
    PrecomputedProvider,
    SyntheticColorProvider,
)
from .regression import (
    PseudoLabel,
    RegressorParams,
    TrainConfig,
    apply_replacement,
    forward,
    load_params,
    mine_pseudo_labels,
    save_params,
    smooth_l1,
    train,
)
from .selection import (
    ScoredProposal,
    SelectionConfig,
    SimilarityRow,
    analyze_entropies,
    entropy,
    filter_by_entropy,
    objectness_scores,
    similarity_row,
)

__all__ = [
    "__version__",
    "HAVE_COMPILED",
    "BBox",
    "NormalizedBBox",
    "iou",
    "pairwise_iou",
    "nms",
    "envelope",
    "ImageRef",
    "load_image",
    "discover_images",
    "CategoryVocabulary",
    "cosine_similarity",
    "softmax",
    "store_embedding_file",
    "load_embedding_file",
    "EmbeddingProvider",
    "SyntheticColorProvider",
    "PrecomputedProvider",
    "OnnxEncoderProvider",
    "InitialProposal",
    "load_proposals",
    "generate_builtin",
    "SimilarityRow",
    "ScoredProposal",
    "SelectionConfig",
    "similarity_row",
    "entropy",
    "filter_by_entropy",
    "objectness_scores",
    "analyze_entropies",
    "ProposalGraph",
    "MergeConfig",
    "build_graph",
    "connected_components",
    "merge_components",
    "PseudoLabel",
    "RegressorParams",
    "TrainConfig",
    "mine_pseudo_labels",
    "forward",
    "smooth_l1",
    "train",
    "apply_replacement",
    "save_params",
    "load_params",
    "GroundTruth",
    "MetricReport",
    "load_ground_truth",
    "recall_at",
    "average_recall",
    "detect_and_ap",
    "compute_report",
    "PipelineConfig",
    "load_config",
    "run",
    "train_regressor",
    "ablate",
    "analyze",
    "ToolkitError",
    "ConfigError",
    "ValidationError",
    "FormatError",
    "BackendError",
    "StageError",
]
