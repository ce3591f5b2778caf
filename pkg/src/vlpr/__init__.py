"""Visual-language place recognition toolkit.

Bag-of-words retrieval over pixel-level language embeddings, with
dynamic-object filtering and context-graph re-ranking.
"""

from .embedding import (
    DEFAULT_FILTERED_LABELS,
    DEFAULT_LABELS,
    FilterSet,
    LabelMap,
    PixelEmbeddingMap,
    TextEmbeddingSet,
    correlate_pixel,
    dynamic_mask,
    label_map,
)
from .evaluation import (
    EvalReport,
    PoseTable,
    ground_truth_neighbors,
    read_pose_csv,
    recall_at_n,
)
from .formats import (
    FormatError,
    read_embedding_map,
    read_text_embeddings,
    write_embedding_map,
    write_text_embeddings,
)
from .graph import (
    ContextGraph,
    Correspondence,
    build_context_graph,
    deserialize_nodes,
    graph_similarity,
    match_correspondences,
    rerank,
    serialize_nodes,
)
from .index import (
    ImageDatabase,
    ImageRecord,
    RankedCandidate,
    histogram_distance,
    load_index,
    save_index,
)
from .sampling import (
    EmptyFrameError,
    Keypoint,
    LabelCluster,
    cluster_nodes,
    label_components,
    sample_keypoints,
)
from .vocabulary import (
    Histogram,
    Vocabulary,
    histogram,
    load_vocabulary,
    quantize,
    save_vocabulary,
    train_vocabulary,
)

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_FILTERED_LABELS",
    "DEFAULT_LABELS",
    "ContextGraph",
    "Correspondence",
    "EmptyFrameError",
    "EvalReport",
    "FilterSet",
    "FormatError",
    "Histogram",
    "ImageDatabase",
    "ImageRecord",
    "Keypoint",
    "LabelCluster",
    "LabelMap",
    "PixelEmbeddingMap",
    "PoseTable",
    "RankedCandidate",
    "TextEmbeddingSet",
    "Vocabulary",
    "build_context_graph",
    "cluster_nodes",
    "correlate_pixel",
    "deserialize_nodes",
    "dynamic_mask",
    "graph_similarity",
    "ground_truth_neighbors",
    "histogram",
    "histogram_distance",
    "label_components",
    "label_map",
    "load_index",
    "load_vocabulary",
    "match_correspondences",
    "quantize",
    "read_embedding_map",
    "read_pose_csv",
    "read_text_embeddings",
    "recall_at_n",
    "rerank",
    "sample_keypoints",
    "save_index",
    "save_vocabulary",
    "serialize_nodes",
    "train_vocabulary",
    "write_embedding_map",
    "write_text_embeddings",
]
