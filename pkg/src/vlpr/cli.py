"""Command-line orchestration for the full recognition pipeline.

Exit codes: 0 success, 2 configuration error, 3 input error,
4 computation error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from .config import ConfigError, PipelineConfig, load_config
from .embedding import PixelEmbeddingMap
from .evaluation import EmptyEvaluationError, PoseTable, read_pose_csv
from .formats import (
    FormatError,
    MAGIC_EMBEDDING_MAP,
    MAGIC_INDEX,
    MAGIC_TEXT_EMBEDDINGS,
    MAGIC_VOCABULARY,
    read_embedding_map,
    read_text_embeddings,
)
from .index import load_index, save_index
from .pipeline import (
    build_index_from_maps,
    build_vocabulary_from_maps,
    discover_embedding_files,
    evaluate_queries,
    image_features,
    query_database,
)
from .report import outcome_key_values, outcome_table, write_report
from .vocabulary import load_vocabulary, save_vocabulary

log = logging.getLogger("vlpr")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INPUT = 3
EXIT_COMPUTE = 4


class InputError(Exception):
    pass


class ComputationError(Exception):
    pass


def _setup_logging() -> None:
    level_name = os.environ.get("VLPR_LOG", "info").upper()
    level = getattr(logging, level_name, logging.INFO)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key = value config file")
    parser.add_argument("--k", type=int, help="keypoints sampled per image")
    parser.add_argument("--v", type=int, help="vocabulary size")
    parser.add_argument("--seed", type=int, help="pipeline seed")
    parser.add_argument("--norm-mode", choices=("counts", "l1", "l2"), help="histogram normalization")
    parser.add_argument("--tau", type=float, help="graph edge distance threshold (pixels)")
    parser.add_argument("--cosine-threshold", type=float, help="correspondence cosine threshold")
    parser.add_argument("--gt-distance", type=float, help="ground-truth radius in meters")
    parser.add_argument("--rerank-m", type=int, help="candidates re-ranked per query")
    parser.add_argument("--recall-ns", help="comma-separated recall cutoffs")
    parser.add_argument("--min-cluster-size", type=int, help="smallest segment kept as a graph node")
    parser.add_argument("--kmeans-max-iters", type=int)
    parser.add_argument("--kmeans-tol", type=float)
    parser.add_argument("--workers", type=int, help="worker threads for per-image stages")
    parser.add_argument(
        "--no-filter",
        action="store_true",
        help="disable dynamic-object filtering",
    )
    parser.add_argument(
        "--filter-labels",
        help="comma-separated label names to filter (overrides the default set)",
    )


def _build_config(args: argparse.Namespace) -> PipelineConfig:
    cfg = PipelineConfig()
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        cfg = load_config(path, base=cfg)
    overrides = {}
    for flag, name in (
        ("k", "k"),
        ("v", "v"),
        ("seed", "seed"),
        ("norm_mode", "norm_mode"),
        ("tau", "tau"),
        ("cosine_threshold", "cosine_threshold"),
        ("gt_distance", "gt_distance"),
        ("rerank_m", "rerank_m"),
        ("min_cluster_size", "min_cluster_size"),
        ("kmeans_max_iters", "kmeans_max_iters"),
        ("kmeans_tol", "kmeans_tol"),
        ("workers", "workers"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[name] = value
    if getattr(args, "recall_ns", None):
        try:
            overrides["recall_ns"] = tuple(
                int(part) for part in args.recall_ns.split(",") if part.strip()
            )
        except ValueError:
            raise ConfigError(f"--recall-ns expects integers, got {args.recall_ns!r}") from None
    if getattr(args, "filter_labels", None):
        overrides["filtered_labels"] = tuple(
            part.strip() for part in args.filter_labels.split(",") if part.strip()
        )
    if getattr(args, "no_filter", False):
        overrides["filtering"] = False
    try:
        return replace(cfg, **overrides)
    except ConfigError:
        raise
    except ValueError as e:
        raise ConfigError(str(e)) from None


def _load_maps(directory: str) -> list[PixelEmbeddingMap]:
    try:
        files = discover_embedding_files(directory)
    except FileNotFoundError as e:
        raise InputError(str(e)) from None
    if not files:
        raise InputError(f"no .vlpr files found in {directory}")
    maps = []
    bad = []
    for path in files:
        try:
            maps.append(read_embedding_map(path))
        except (FormatError, OSError) as e:
            bad.append(path.name)
            log.error("unreadable embedding file %s: %s", path, e)
    if not maps:
        raise InputError(f"every embedding file failed to load: {bad}")
    return maps


def _load_texts(path: str):
    try:
        return read_text_embeddings(path)
    except (FormatError, OSError, ValueError) as e:
        raise InputError(f"cannot read text embeddings {path}: {e}") from None


def _load_vocab(path: str):
    try:
        return load_vocabulary(path)
    except (FormatError, OSError, ValueError) as e:
        raise InputError(f"cannot read vocabulary {path}: {e}") from None


def _load_poses(path: str, has_header: bool) -> PoseTable:
    try:
        return read_pose_csv(path, has_header=has_header)
    except (OSError, ValueError) as e:
        raise InputError(f"cannot read pose file {path}: {e}") from None


def _check_dims(texts, vocab, maps) -> None:
    if vocab.dim != texts.dim:
        raise InputError(
            f"vocabulary dim {vocab.dim} does not match text embedding dim {texts.dim}"
        )
    for emb in maps:
        if emb.dim != texts.dim:
            raise InputError(
                f"embedding map {emb.source_image_id!r} has dim {emb.dim}, expected {texts.dim}"
            )


def cmd_build_vocab(args: argparse.Namespace) -> int:
    cfg = _build_config(args)
    maps = _load_maps(args.embeddings)
    texts = _load_texts(args.texts)
    for emb in maps:
        if emb.dim != texts.dim:
            raise InputError(
                f"embedding map {emb.source_image_id!r} has dim {emb.dim}, expected {texts.dim}"
            )
    try:
        vocab, stats = build_vocabulary_from_maps(maps, texts, cfg)
    except ValueError as e:
        raise ComputationError(str(e)) from None
    save_vocabulary(vocab, args.out)
    print(
        f"vocabulary: V={vocab.v} dim={vocab.dim} "
        f"iterations={vocab.training_meta.iterations} "
        f"inertia={vocab.training_meta.inertia:.6g} -> {args.out}"
    )
    if stats.skipped_empty:
        print(f"skipped {len(stats.skipped_empty)} empty frames")
    return EXIT_OK


def cmd_index(args: argparse.Namespace) -> int:
    cfg = _build_config(args)
    maps = _load_maps(args.embeddings)
    texts = _load_texts(args.texts)
    vocab = _load_vocab(args.vocab)
    poses = _load_poses(args.poses, args.poses_header) if args.poses else None
    _check_dims(texts, vocab, maps)
    try:
        db, stats = build_index_from_maps(maps, texts, vocab, poses, cfg)
    except ValueError as e:
        raise ComputationError(str(e)) from None
    if len(db) == 0:
        raise ComputationError("no images could be indexed")
    save_index(db, args.out)
    print(f"indexed {len(db)} images -> {args.out}")
    if stats.skipped_missing_pose:
        print(f"skipped {len(stats.skipped_missing_pose)} images with no pose")
    if stats.skipped_empty:
        print(f"skipped {len(stats.skipped_empty)} empty frames")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = _build_config(args)
    try:
        db = load_index(args.index)
    except (FormatError, OSError, ValueError) as e:
        raise InputError(f"cannot read index {args.index}: {e}") from None
    if len(db) == 0:
        raise InputError(f"index {args.index} is empty")
    maps = _load_maps(args.queries)
    texts = _load_texts(args.texts)
    vocab = _load_vocab(args.vocab)
    query_poses = _load_poses(args.query_poses, args.poses_header)
    _check_dims(texts, vocab, maps)
    if db.v != vocab.v:
        raise InputError(
            f"index histograms have {db.v} bins but vocabulary has {vocab.v}"
        )
    if db.norm_mode != cfg.norm_mode:
        raise InputError(
            f"index norm mode {db.norm_mode!r} does not match configured {cfg.norm_mode!r}"
        )
    try:
        outcome = evaluate_queries(db, maps, texts, vocab, query_poses, cfg)
    except EmptyEvaluationError as e:
        raise ComputationError(str(e)) from None
    except ValueError as e:
        raise ComputationError(str(e)) from None
    print(outcome_table(outcome))
    print()
    print(outcome_key_values(outcome), end="")
    if args.report_dir:
        written = write_report(outcome, args.report_dir)
        print(f"report written to {args.report_dir} ({len(written)} files)")
    return EXIT_OK


def cmd_query(args: argparse.Namespace) -> int:
    cfg = _build_config(args)
    try:
        db = load_index(args.index)
    except (FormatError, OSError, ValueError) as e:
        raise InputError(f"cannot read index {args.index}: {e}") from None
    if len(db) == 0:
        raise InputError(f"index {args.index} is empty")
    try:
        emb = read_embedding_map(args.embedding)
    except (FormatError, OSError) as e:
        raise InputError(f"cannot read embedding map {args.embedding}: {e}") from None
    texts = _load_texts(args.texts)
    vocab = _load_vocab(args.vocab)
    _check_dims(texts, vocab, [emb])
    cfg = replace(cfg, rerank_m=max(cfg.rerank_m, args.n), recall_ns=(args.n,))
    try:
        feats = image_features(emb, texts, vocab, cfg)
        result = query_database(db, feats, cfg)
    except ValueError as e:
        raise ComputationError(str(e)) from None
    if args.no_rerank:
        candidates = db.query_topn(feats.histogram, args.n)
        print("rank,image_id,distance")
        for c in candidates:
            print(f"{c.rank},{c.image_id},{c.distance:.9g}")
    else:
        print("rank,image_id,score")
        for rank, (image_id, score) in enumerate(
            zip(result.reranked[: args.n], result.scores), start=1
        ):
            print(f"{rank},{image_id},{score:.9g}")
    return EXIT_OK


def _inspect_text(path: Path) -> str:
    raw = path.read_bytes()
    if len(raw) < 4:
        raise InputError(f"{path}: too short to hold a format magic")
    magic = raw[:4]
    lines = [f"file: {path}", f"size: {len(raw)} bytes"]
    if magic == MAGIC_EMBEDDING_MAP:
        emb = read_embedding_map(path)
        lines += [
            "format: embedding map (VLPR)",
            f"height: {emb.height}",
            f"width: {emb.width}",
            f"dim: {emb.dim}",
            f"value range: [{emb.data.min():.6g}, {emb.data.max():.6g}]",
            f"value mean: {emb.data.mean():.6g}",
        ]
    elif magic == MAGIC_TEXT_EMBEDDINGS:
        texts = read_text_embeddings(path)
        lines += [
            "format: text embeddings (VLTX)",
            f"labels: {texts.n}",
            f"dim: {texts.dim}",
        ]
        lines += [f"  [{i}] {label}" for i, label in enumerate(texts.labels)]
    elif magic == MAGIC_VOCABULARY:
        vocab = load_vocabulary(path)
        meta = vocab.training_meta
        lines += [
            "format: vocabulary (VLVB)",
            f"codewords: {vocab.v}",
            f"dim: {vocab.dim}",
            f"training iterations: {meta.iterations}",
            f"final inertia: {meta.inertia:.6g}",
            f"training seed: {meta.seed}",
        ]
    elif magic == MAGIC_INDEX:
        db = load_index(path)
        lines += [
            "format: index (VLIX)",
            f"records: {len(db)}",
            f"histogram bins: {db.v}",
            f"norm mode: {db.norm_mode}",
        ]
        for record in db.records()[:20]:
            payload = len(record.graph_payload) if record.graph_payload else 0
            pose = f"({record.pose[0]:.2f}, {record.pose[1]:.2f})" if record.pose else "none"
            lines.append(f"  {record.image_id}: payload {payload} B, pose {pose}")
        if len(db) > 20:
            lines.append(f"  ... and {len(db) - 20} more")
    else:
        raise InputError(f"{path}: unknown magic {magic!r}")
    return "\n".join(lines)


def cmd_inspect(args: argparse.Namespace) -> int:
    path = Path(args.file)
    if not path.is_file():
        raise InputError(f"no such file: {path}")
    try:
        print(_inspect_text(path))
    except FormatError as e:
        raise InputError(f"{path}: {e}") from None
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vlpr",
        description="Visual-language place recognition over embedding-map files.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-vocab", help="train a vocabulary from embedding maps")
    p.add_argument("--embeddings", required=True, help="directory of .vlpr files")
    p.add_argument("--texts", required=True, help=".vltx text embedding file")
    p.add_argument("--out", required=True, help="output .vlvb path")
    _add_config_flags(p)
    p.set_defaults(func=cmd_build_vocab)

    p = sub.add_parser("index", help="build a retrieval index from embedding maps")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--texts", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--poses", help="image_id,x,y CSV of database poses")
    p.add_argument("--poses-header", action="store_true", help="pose CSV has a header row")
    p.add_argument("--out", required=True, help="output .vlix path")
    _add_config_flags(p)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("eval", help="evaluate recall@N for a query set")
    p.add_argument("--index", required=True)
    p.add_argument("--queries", required=True, help="directory of query .vlpr files")
    p.add_argument("--texts", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--query-poses", required=True)
    p.add_argument("--poses-header", action="store_true")
    p.add_argument("--report-dir", help="write report files and figures here")
    _add_config_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("query", help="top-N candidates for a single image")
    p.add_argument("--index", required=True)
    p.add_argument("--embedding", required=True, help="single .vlpr file")
    p.add_argument("--texts", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("-n", type=int, default=10)
    p.add_argument("--no-rerank", action="store_true", help="skip graph re-ranking")
    _add_config_flags(p)
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("inspect", help="dump any binary artifact as text")
    p.add_argument("--file", required=True)
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        log.error("configuration error: %s", e)
        return EXIT_CONFIG
    except InputError as e:
        log.error("input error: %s", e)
        return EXIT_INPUT
    except ComputationError as e:
        log.error("computation error: %s", e)
        return EXIT_COMPUTE


if __name__ == "__main__":
    sys.exit(main())
