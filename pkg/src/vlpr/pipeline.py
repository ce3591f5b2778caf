"""Per-image processing and multi-image orchestration shared by the CLI."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import PipelineConfig
from .embedding import FilterSet, PixelEmbeddingMap, TextEmbeddingSet, dynamic_mask, label_map
from .evaluation import EvalReport, PoseTable, ground_truth_neighbors, recall_at_n
from .graph import build_context_graph, deserialize_nodes, rerank, serialize_nodes
from .index import ImageDatabase, ImageRecord
from .sampling import (
    EmptyFrameError,
    Keypoint,
    cluster_nodes,
    derive_seed,
    label_components,
    sample_keypoints,
)
from .vocabulary import Histogram, Vocabulary, histogram, train_vocabulary

log = logging.getLogger("vlpr")


@dataclass(frozen=True)
class ImageFeatures:
    image_id: str
    histogram: Histogram
    nodes: tuple[Keypoint, ...]


@dataclass
class PipelineStats:
    processed: int = 0
    skipped_empty: list[str] = field(default_factory=list)
    skipped_unreadable: list[str] = field(default_factory=list)
    skipped_missing_pose: list[str] = field(default_factory=list)


def discover_embedding_files(directory: str | Path) -> list[Path]:
    """All *.vlpr files in lexicographic order for a stable corpus order."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"embedding directory not found: {directory}")
    return sorted(directory.glob("*.vlpr"))


def image_descriptors(
    emb: PixelEmbeddingMap, texts: TextEmbeddingSet, cfg: PipelineConfig
) -> list[Keypoint]:
    """Masked random keypoints for one image, seeded per image id."""
    lm = label_map(emb, texts)
    mask = dynamic_mask(lm, texts, FilterSet(cfg.effective_filtered_labels))
    seed = derive_seed(cfg.seed, emb.source_image_id)
    return sample_keypoints(mask, lm, emb, cfg.k, seed=seed)


def image_features(
    emb: PixelEmbeddingMap,
    texts: TextEmbeddingSet,
    vocab: Vocabulary,
    cfg: PipelineConfig,
) -> ImageFeatures:
    """Histogram plus context-graph nodes for one image."""
    lm = label_map(emb, texts)
    mask = dynamic_mask(lm, texts, FilterSet(cfg.effective_filtered_labels))
    seed = derive_seed(cfg.seed, emb.source_image_id)
    keypoints = sample_keypoints(mask, lm, emb, cfg.k, seed=seed)
    hist = histogram(
        np.stack([kp.descriptor for kp in keypoints]), vocab, norm_mode=cfg.norm_mode
    )
    clusters = label_components(lm, mask, min_cluster_size=cfg.min_cluster_size)
    nodes = tuple(cluster_nodes(clusters, emb))
    return ImageFeatures(image_id=emb.source_image_id, histogram=hist, nodes=nodes)


def _map_over_images(func, items, workers: int):
    if workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))


def build_vocabulary_from_maps(
    maps: list[PixelEmbeddingMap],
    texts: TextEmbeddingSet,
    cfg: PipelineConfig,
) -> tuple[Vocabulary, PipelineStats]:
    """Pool descriptors from every usable map and train the codebook."""
    stats = PipelineStats()

    def descriptors_or_none(emb):
        try:
            return [kp.descriptor for kp in image_descriptors(emb, texts, cfg)]
        except EmptyFrameError:
            return None

    results = _map_over_images(descriptors_or_none, maps, cfg.workers)
    corpus: list[np.ndarray] = []
    for emb, result in zip(maps, results):
        if result is None:
            stats.skipped_empty.append(emb.source_image_id)
            log.warning("no usable pixels in %s; skipping", emb.source_image_id)
            continue
        corpus.extend(result)
        stats.processed += 1
    if len(corpus) < cfg.v:
        raise ValueError(
            f"descriptor corpus of {len(corpus)} is smaller than V={cfg.v}"
        )
    vocab = train_vocabulary(
        np.stack(corpus),
        v=cfg.v,
        max_iters=cfg.kmeans_max_iters,
        tol=cfg.kmeans_tol,
        seed=cfg.seed,
    )
    log.info(
        "trained vocabulary: V=%d, dim=%d, %d iterations, inertia %.6g",
        vocab.v,
        vocab.dim,
        vocab.training_meta.iterations,
        vocab.training_meta.inertia,
    )
    return vocab, stats


def build_index_from_maps(
    maps: list[PixelEmbeddingMap],
    texts: TextEmbeddingSet,
    vocab: Vocabulary,
    poses: PoseTable | None,
    cfg: PipelineConfig,
) -> tuple[ImageDatabase, PipelineStats]:
    """One record per usable map; missing poses warn and skip."""
    stats = PipelineStats()
    db = ImageDatabase()

    def features_or_none(emb):
        try:
            return image_features(emb, texts, vocab, cfg)
        except EmptyFrameError:
            return None

    results = _map_over_images(features_or_none, maps, cfg.workers)
    for emb, feats in zip(maps, results):
        if feats is None:
            stats.skipped_empty.append(emb.source_image_id)
            log.warning("no usable pixels in %s; skipping", emb.source_image_id)
            continue
        pose = None
        if poses is not None:
            if emb.source_image_id not in poses:
                stats.skipped_missing_pose.append(emb.source_image_id)
                log.warning("no pose for %s; skipping", emb.source_image_id)
                continue
            pose = poses.get(emb.source_image_id)
        db.add(
            ImageRecord(
                image_id=feats.image_id,
                histogram=feats.histogram,
                graph_payload=serialize_nodes(feats.nodes),
                pose=pose,
            )
        )
        stats.processed += 1
    return db, stats


@dataclass(frozen=True)
class QueryResult:
    image_id: str
    retrieval: tuple[str, ...]  # candidate ids in retrieval order
    reranked: tuple[str, ...]  # candidate ids after graph re-ranking
    scores: tuple[float, ...]  # similarity scores in reranked order


@dataclass(frozen=True)
class EvalOutcome:
    retrieval: EvalReport
    reranked: EvalReport
    results: tuple[QueryResult, ...]
    stats: PipelineStats


def query_database(
    db: ImageDatabase,
    feats: ImageFeatures,
    cfg: PipelineConfig,
) -> QueryResult:
    """Retrieve candidates by histogram distance, then graph re-rank the top M."""
    depth = min(len(db), max(cfg.rerank_m, max(cfg.recall_ns)))
    candidates = db.query_topn(feats.histogram, depth)
    retrieval_ids = tuple(c.image_id for c in candidates)

    m = min(cfg.rerank_m, len(candidates))
    query_graph = build_context_graph(list(feats.nodes), tau=cfg.tau)
    graph_candidates = []
    for c in candidates[:m]:
        payload = db.get(c.image_id).graph_payload
        nodes = deserialize_nodes(payload) if payload else []
        graph_candidates.append((c.image_id, build_context_graph(nodes, tau=cfg.tau)))
    reranked = rerank(query_graph, graph_candidates, t=cfg.cosine_threshold)
    reranked_ids = tuple(image_id for image_id, _ in reranked) + retrieval_ids[m:]
    scores = tuple(score for _, score in reranked)
    return QueryResult(
        image_id=feats.image_id,
        retrieval=retrieval_ids,
        reranked=reranked_ids,
        scores=scores,
    )


def evaluate_queries(
    db: ImageDatabase,
    query_maps: list[PixelEmbeddingMap],
    texts: TextEmbeddingSet,
    vocab: Vocabulary,
    query_poses: PoseTable,
    cfg: PipelineConfig,
) -> EvalOutcome:
    """Full evaluation: retrieval and graph-reranked recall over all queries."""
    db_poses = {}
    for record in db.records():
        if record.pose is None:
            raise ValueError(
                f"database record {record.image_id!r} has no pose; "
                "evaluation needs ground-truth positions"
            )
        db_poses[record.image_id] = record.pose
    db_pose_table = PoseTable(entries=db_poses)

    stats = PipelineStats()

    def features_or_none(emb):
        try:
            return image_features(emb, texts, vocab, cfg)
        except EmptyFrameError:
            return None

    feats_list = _map_over_images(features_or_none, query_maps, cfg.workers)

    results = []
    gt = {}
    for emb, feats in zip(query_maps, feats_list):
        if feats is None:
            stats.skipped_empty.append(emb.source_image_id)
            log.warning("no usable pixels in query %s; skipping", emb.source_image_id)
            continue
        if emb.source_image_id not in query_poses:
            stats.skipped_missing_pose.append(emb.source_image_id)
            log.warning("no pose for query %s; skipping", emb.source_image_id)
            continue
        results.append(query_database(db, feats, cfg))
        gt[feats.image_id] = ground_truth_neighbors(
            db_pose_table, query_poses.get(emb.source_image_id), d=cfg.gt_distance
        )
        stats.processed += 1

    retrieval_report = recall_at_n(
        {r.image_id: list(r.retrieval) for r in results}, gt, ns=cfg.recall_ns
    )
    reranked_report = recall_at_n(
        {r.image_id: list(r.reranked) for r in results}, gt, ns=cfg.recall_ns
    )
    return EvalOutcome(
        retrieval=retrieval_report,
        reranked=reranked_report,
        results=tuple(results),
        stats=stats,
    )
