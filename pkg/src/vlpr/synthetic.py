"""Synthetic revisit corpora for benchmarks and demos.

Builds a set of "places", each rendered as two embedding-map views: a clean
database view and a revisit view with per-pixel Gaussian noise plus a
dynamic blob (labeled as a movable category) overwriting a fraction of the
pixels. Place identity lives in a pool of region prototypes; places come in
near-duplicate pairs so retrieval is non-trivial, and the dynamic blob
mimics a prototype present in the paired distractor, which is what makes
unfiltered histograms drift toward the wrong place.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .embedding import DEFAULT_LABELS, PixelEmbeddingMap, TextEmbeddingSet
from .evaluation import PoseTable, write_pose_csv
from .formats import write_embedding_map, write_text_embeddings
from .sampling import make_rng

STATIC_LABELS = ("road", "sidewalk", "building", "vegetation", "trunk", "terrain", "pole", "sky")


@dataclass(frozen=True)
class RevisitSpec:
    n_places: int = 50
    height: int = 32
    width: int = 40
    dim: int = 16
    tile_rows: int = 2
    tile_cols: int = 4
    pool_size: int = 40
    noise_sigma: float = 0.1
    dynamic_fraction: float = 0.2
    dynamic_label: str = "car"
    amplitude: float = 2.0
    prototype_spread: float = 0.7
    mimic_twin_prob: float = 0.7
    seed: int = 1234
    labels: tuple[str, ...] = DEFAULT_LABELS


@dataclass(frozen=True)
class RevisitCorpus:
    texts: TextEmbeddingSet
    database: dict[str, PixelEmbeddingMap]
    queries: dict[str, PixelEmbeddingMap]
    db_poses: PoseTable
    query_poses: PoseTable
    place_of: dict[str, int] = field(default_factory=dict)


def _orthonormal_texts(labels: tuple[str, ...], dim: int, rng: np.random.Generator) -> TextEmbeddingSet:
    n = len(labels)
    if dim < n:
        raise ValueError(f"dim {dim} must be >= number of labels {n}")
    q, _ = np.linalg.qr(rng.normal(size=(dim, dim)))
    return TextEmbeddingSet(labels=labels, vectors=q[:n].astype(np.float32))


def _prototype_pool(
    spec: RevisitSpec, texts: TextEmbeddingSet, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pool of region appearances: unit directions tied to a static label.

    Each prototype is amplitude * normalize(T_label + spread * h) with h a
    random unit vector; the label term keeps per-pixel classification stable.
    Returns (vectors, label_indices, h_directions).
    """
    static_idx = np.array([texts.index_of(l) for l in STATIC_LABELS if l in texts.labels])
    if static_idx.size == 0:
        raise ValueError("no static labels available for prototypes")
    t64 = texts.vectors.astype(np.float64)
    vectors = np.empty((spec.pool_size, spec.dim))
    label_idx = np.empty(spec.pool_size, dtype=np.int32)
    h_dirs = np.empty((spec.pool_size, spec.dim))
    for r in range(spec.pool_size):
        while True:
            label = int(static_idx[rng.integers(static_idx.size)])
            h = rng.normal(size=spec.dim)
            h /= np.linalg.norm(h)
            direction = t64[label] + spec.prototype_spread * h
            direction /= np.linalg.norm(direction)
            vec = spec.amplitude * direction
            if int(np.argmax(t64 @ vec)) == label:
                vectors[r] = vec
                label_idx[r] = label
                h_dirs[r] = h
                break
    return vectors, label_idx, h_dirs


def _tile_map(spec: RevisitSpec) -> np.ndarray:
    """Assign each pixel a tile id on a tile_rows x tile_cols grid."""
    rows = np.minimum(
        np.arange(spec.height) * spec.tile_rows // spec.height, spec.tile_rows - 1
    )
    cols = np.minimum(
        np.arange(spec.width) * spec.tile_cols // spec.width, spec.tile_cols - 1
    )
    return rows[:, None] * spec.tile_cols + cols[None, :]


def _dynamic_vector(
    spec: RevisitSpec,
    texts: TextEmbeddingSet,
    h_dir: np.ndarray,
) -> np.ndarray:
    t64 = texts.vectors.astype(np.float64)
    dyn_label = texts.index_of(spec.dynamic_label)
    direction = t64[dyn_label] + spec.prototype_spread * h_dir
    direction /= np.linalg.norm(direction)
    return spec.amplitude * direction


def generate_revisit_corpus(spec: RevisitSpec = RevisitSpec()) -> RevisitCorpus:
    """Fully deterministic corpus for a given spec (seed included)."""
    if spec.n_places % 2:
        raise ValueError("n_places must be even: places are generated as twin pairs")
    rng = make_rng(spec.seed)
    texts = _orthonormal_texts(spec.labels, spec.dim, rng)
    pool_vectors, _, pool_h = _prototype_pool(spec, texts, rng)
    tiles = _tile_map(spec)
    n_tiles = spec.tile_rows * spec.tile_cols

    # Twin pairs: the odd place copies the even one and swaps one tile's
    # prototype, so every place has exactly one near-duplicate distractor.
    assignments = []
    swapped_in: dict[int, int] = {}
    for pair in range(spec.n_places // 2):
        base = rng.choice(spec.pool_size, size=n_tiles, replace=False)
        twin = base.copy()
        swap_tile = int(rng.integers(n_tiles))
        remaining = np.setdiff1d(np.arange(spec.pool_size), base)
        replacement = int(remaining[rng.integers(remaining.size)])
        twin[swap_tile] = replacement
        assignments.append(base)
        assignments.append(twin)
        swapped_in[2 * pair] = replacement
        swapped_in[2 * pair + 1] = int(base[swap_tile])

    blob_pixels = int(round(spec.dynamic_fraction * spec.height * spec.width))
    blob_h = max(1, int(round(np.sqrt(blob_pixels))))
    blob_w = max(1, blob_pixels // blob_h)

    database: dict[str, PixelEmbeddingMap] = {}
    queries: dict[str, PixelEmbeddingMap] = {}
    db_poses: dict[str, tuple[float, float]] = {}
    query_poses: dict[str, tuple[float, float]] = {}
    place_of: dict[str, int] = {}
    for place in range(spec.n_places):
        base = pool_vectors[assignments[place]][tiles]  # (H, W, D)
        view1 = base + spec.noise_sigma * rng.normal(size=base.shape)
        view2 = view1 + spec.noise_sigma * rng.normal(size=base.shape)

        # Dynamic blob mimicking a prototype, preferentially one the twin has.
        if rng.random() < spec.mimic_twin_prob:
            mimic = swapped_in[place]
        else:
            mimic = int(rng.integers(spec.pool_size))
        dyn = _dynamic_vector(spec, texts, pool_h[mimic])
        top = int(rng.integers(spec.height - blob_h + 1))
        left = int(rng.integers(spec.width - blob_w + 1))
        blob = dyn[None, None, :] + spec.noise_sigma * rng.normal(
            size=(blob_h, blob_w, spec.dim)
        )
        view2[top : top + blob_h, left : left + blob_w, :] = blob

        db_id = f"place{place:03d}_db"
        q_id = f"place{place:03d}_q"
        database[db_id] = PixelEmbeddingMap.from_array(
            view1.astype(np.float32), db_id
        )
        queries[q_id] = PixelEmbeddingMap.from_array(view2.astype(np.float32), q_id)
        pose = (100.0 * place, 0.0)
        db_poses[db_id] = pose
        query_poses[q_id] = pose
        place_of[db_id] = place
        place_of[q_id] = place

    return RevisitCorpus(
        texts=texts,
        database=database,
        queries=queries,
        db_poses=PoseTable(entries=db_poses),
        query_poses=PoseTable(entries=query_poses),
        place_of=place_of,
    )


def write_revisit_corpus(corpus: RevisitCorpus, out_dir: str | Path) -> None:
    """Lay the corpus out on disk: db/, queries/, poses, and the label file."""
    out = Path(out_dir)
    (out / "db").mkdir(parents=True, exist_ok=True)
    (out / "queries").mkdir(parents=True, exist_ok=True)
    write_text_embeddings(corpus.texts, out / "labels.vltx")
    for image_id, emb in corpus.database.items():
        write_embedding_map(emb, out / "db" / f"{image_id}.vlpr")
    for image_id, emb in corpus.queries.items():
        write_embedding_map(emb, out / "queries" / f"{image_id}.vlpr")
    write_pose_csv(corpus.db_poses, out / "db_poses.csv")
    write_pose_csv(corpus.query_poses, out / "query_poses.csv")


def main(argv: list[str] | None = None) -> int:
    import argparse

    parser = argparse.ArgumentParser(
        prog="python -m vlpr.synthetic",
        description="Generate a synthetic revisit corpus on disk.",
    )
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--places", type=int, default=50)
    parser.add_argument("--seed", type=int, default=1234)
    args = parser.parse_args(argv)
    spec = RevisitSpec(n_places=args.places, seed=args.seed)
    write_revisit_corpus(generate_revisit_corpus(spec), args.out)
    print(f"wrote {args.places} places ({2 * args.places} maps) to {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
