"""Visual-language vocabulary: k-means codebook training, quantization, histograms."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .formats import (
    FORMAT_VERSION,
    ByteReader,
    MAGIC_VOCABULARY,
    pack_f64,
    pack_u32,
    pack_u64,
)
from .sampling import make_rng

DEFAULT_V = 512
DEFAULT_MAX_ITERS = 100
DEFAULT_TOL = 1e-4

NORM_MODES = ("counts", "l1", "l2")


@dataclass(frozen=True)
class TrainingMeta:
    iterations: int
    inertia: float
    seed: int


@dataclass(frozen=True)
class Vocabulary:
    centroids: np.ndarray  # (V, dim), float32
    training_meta: TrainingMeta

    def __post_init__(self):
        c = np.ascontiguousarray(self.centroids, dtype=np.float32)
        if c.ndim != 2:
            raise ValueError(f"centroids must be 2-D, got shape {c.shape}")
        if c.shape[0] < 2:
            raise ValueError(f"need at least 2 codewords, got {c.shape[0]}")
        if not np.all(np.isfinite(c)):
            raise ValueError("centroids contain non-finite values")
        if np.unique(c, axis=0).shape[0] != c.shape[0]:
            raise ValueError("vocabulary contains identical centroids")
        c.flags.writeable = False
        object.__setattr__(self, "centroids", c)

    @property
    def v(self) -> int:
        return self.centroids.shape[0]

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]


@dataclass(frozen=True)
class Histogram:
    """Codeword frequency vector for one image."""

    bins: np.ndarray  # (V,), float64
    norm_mode: str

    def __post_init__(self):
        bins = np.ascontiguousarray(self.bins, dtype=np.float64)
        if bins.ndim != 1:
            raise ValueError(f"bins must be 1-D, got shape {bins.shape}")
        if self.norm_mode not in NORM_MODES:
            raise ValueError(f"norm_mode must be one of {NORM_MODES}, got {self.norm_mode!r}")
        if bins.size and bins.min() < 0:
            raise ValueError("histogram bins must be non-negative")
        total = bins.sum()
        if self.norm_mode == "counts":
            if not np.all(bins == np.round(bins)):
                raise ValueError("counts-mode bins must be integers")
        elif total > 0:
            if self.norm_mode == "l1" and abs(total - 1.0) > 1e-9:
                raise ValueError(f"l1-mode bins sum to {total!r}, expected 1")
            if self.norm_mode == "l2":
                norm = float(np.sqrt(np.sum(bins * bins)))
                if abs(norm - 1.0) > 1e-9:
                    raise ValueError(f"l2-mode bins have norm {norm!r}, expected 1")
        bins.flags.writeable = False
        object.__setattr__(self, "bins", bins)

    @property
    def v(self) -> int:
        return self.bins.shape[0]

    @property
    def is_empty(self) -> bool:
        return bool(self.bins.sum() == 0)


def _nearest_centroid_chunked(
    points: np.ndarray, centroids: np.ndarray, chunk: int = 8192
) -> tuple[np.ndarray, np.ndarray]:
    """Index of and squared distance to the nearest centroid per point.

    Float64 throughout so near-ties resolve identically across platforms;
    ties go to the lowest centroid index.
    """
    c64 = centroids.astype(np.float64)
    c2 = np.einsum("ij,ij->i", c64, c64)
    n = points.shape[0]
    idx = np.empty(n, dtype=np.int64)
    best = np.empty(n, dtype=np.float64)
    for start in range(0, n, chunk):
        block = points[start : start + chunk].astype(np.float64)
        d2 = block @ (-2.0 * c64.T)
        d2 += c2[None, :]
        d2 += np.einsum("ij,ij->i", block, block)[:, None]
        idx[start : start + chunk] = np.argmin(d2, axis=1)
        best[start : start + chunk] = np.maximum(d2[np.arange(d2.shape[0]), idx[start : start + chunk]], 0.0)
    return idx, best


def _kmeans_plus_plus(points: np.ndarray, v: int, rng: np.random.Generator) -> np.ndarray:
    """Standard D^2-weighted seeding, deterministic under the supplied generator."""
    n = points.shape[0]
    p64 = points.astype(np.float64)
    centers = np.empty((v, points.shape[1]), dtype=np.float64)
    first = int(rng.integers(n))
    centers[0] = p64[first]
    diff = p64 - centers[0]
    min_d2 = np.einsum("ij,ij->i", diff, diff)
    for i in range(1, v):
        total = min_d2.sum()
        if total <= 0:
            raise ValueError(
                f"k-means++ ran out of distinct points after {i} centers; "
                f"corpus needs at least {v} distinct descriptors"
            )
        target = rng.random() * total
        cum = np.cumsum(min_d2)
        pick = int(np.searchsorted(cum, target, side="right"))
        pick = min(pick, n - 1)
        centers[i] = p64[pick]
        diff = p64 - centers[i]
        d2 = np.einsum("ij,ij->i", diff, diff)
        np.minimum(min_d2, d2, out=min_d2)
    return centers


@dataclass(frozen=True)
class KMeansResult:
    centroids: np.ndarray  # (V, dim) float64
    assignment: np.ndarray  # (n,) int64
    inertia_history: tuple[float, ...]
    iterations: int


def lloyd_kmeans(
    corpus: np.ndarray,
    v: int,
    max_iters: int = DEFAULT_MAX_ITERS,
    tol: float = DEFAULT_TOL,
    seed: int = 0,
) -> KMeansResult:
    """Lloyd iterations with k-means++ seeding.

    Stops after max_iters or when relative inertia improvement drops below
    tol. Empty clusters are reseeded to the corpus point farthest from its
    assigned centroid (ties to the lowest point index), which keeps inertia
    non-increasing. Deterministic for a fixed seed.
    """
    corpus = np.ascontiguousarray(corpus, dtype=np.float64)
    if corpus.ndim != 2:
        raise ValueError(f"corpus must be 2-D, got shape {corpus.shape}")
    n = corpus.shape[0]
    if v < 2:
        raise ValueError(f"need at least 2 clusters, got {v}")
    if n < v:
        raise ValueError(f"corpus of {n} descriptors is smaller than V={v}")
    if max_iters < 1:
        raise ValueError(f"max_iters must be >= 1, got {max_iters}")

    rng = make_rng(seed)
    centroids = _kmeans_plus_plus(corpus, v, rng)
    history: list[float] = []
    assignment = np.zeros(n, dtype=np.int64)
    iterations = 0
    for _ in range(max_iters):
        assignment, d2 = _nearest_centroid_chunked(corpus, centroids)
        inertia = float(d2.sum())
        iterations += 1
        history.append(inertia)

        counts = np.bincount(assignment, minlength=v)
        sums = np.zeros((v, corpus.shape[1]), dtype=np.float64)
        np.add.at(sums, assignment, corpus)
        nonempty = counts > 0
        centroids[nonempty] = sums[nonempty] / counts[nonempty, None]

        empties = np.flatnonzero(~nonempty)
        if empties.size:
            claimable = d2.copy()
            for e in empties:
                far = int(np.argmax(claimable))
                centroids[e] = corpus[far]
                claimable[far] = -np.inf

        if len(history) >= 2:
            prev, cur = history[-2], history[-1]
            if prev <= 0 or (prev - cur) / prev < tol:
                break
    return KMeansResult(
        centroids=centroids,
        assignment=assignment,
        inertia_history=tuple(history),
        iterations=iterations,
    )


def train_vocabulary(
    corpus: np.ndarray,
    v: int = DEFAULT_V,
    max_iters: int = DEFAULT_MAX_ITERS,
    tol: float = DEFAULT_TOL,
    seed: int = 0,
) -> Vocabulary:
    """Learn a V-way codebook over a descriptor corpus."""
    result = lloyd_kmeans(corpus, v, max_iters=max_iters, tol=tol, seed=seed)
    centroids = result.centroids.astype(np.float32)
    if np.unique(centroids, axis=0).shape[0] != centroids.shape[0]:
        raise ValueError(
            "training produced identical centroids; "
            f"corpus likely has fewer than {v} distinct descriptors"
        )
    return Vocabulary(
        centroids=centroids,
        training_meta=TrainingMeta(
            iterations=result.iterations,
            inertia=result.inertia_history[-1],
            seed=seed,
        ),
    )


def quantize(descriptor: np.ndarray, vocab: Vocabulary) -> int:
    """Index of the Euclidean-nearest codeword; ties go to the lowest index."""
    descriptor = np.asarray(descriptor)
    if descriptor.ndim != 1 or descriptor.shape[0] != vocab.dim:
        raise ValueError(
            f"descriptor shape {descriptor.shape} does not match vocabulary dim {vocab.dim}"
        )
    idx, _ = _nearest_centroid_chunked(descriptor[None, :], vocab.centroids)
    return int(idx[0])


def quantize_batch(descriptors: np.ndarray, vocab: Vocabulary) -> np.ndarray:
    descriptors = np.atleast_2d(np.asarray(descriptors))
    if descriptors.shape[1] != vocab.dim:
        raise ValueError(
            f"descriptor dim {descriptors.shape[1]} does not match vocabulary dim {vocab.dim}"
        )
    idx, _ = _nearest_centroid_chunked(descriptors, vocab.centroids)
    return idx


def histogram(
    descriptors: list[np.ndarray] | np.ndarray,
    vocab: Vocabulary,
    norm_mode: str = "l1",
) -> Histogram:
    """Codeword histogram of a descriptor set; an empty set gives zero bins."""
    if norm_mode not in NORM_MODES:
        raise ValueError(f"norm_mode must be one of {NORM_MODES}, got {norm_mode!r}")
    if len(descriptors) == 0:
        return Histogram(bins=np.zeros(vocab.v, dtype=np.float64), norm_mode=norm_mode)
    stack = np.stack([np.asarray(d) for d in descriptors]) if isinstance(descriptors, list) else np.asarray(descriptors)
    idx = quantize_batch(stack, vocab)
    counts = np.bincount(idx, minlength=vocab.v).astype(np.float64)
    if norm_mode == "counts":
        bins = counts
    elif norm_mode == "l1":
        bins = counts / counts.sum()
    else:
        bins = counts / np.sqrt(np.sum(counts * counts))
    return Histogram(bins=bins, norm_mode=norm_mode)


def vocabulary_to_bytes(vocab: Vocabulary) -> bytes:
    meta = vocab.training_meta
    return b"".join(
        [
            MAGIC_VOCABULARY,
            pack_u32(FORMAT_VERSION),
            pack_u32(vocab.v),
            pack_u32(vocab.dim),
            np.ascontiguousarray(vocab.centroids, dtype="<f4").tobytes(),
            pack_u32(meta.iterations),
            pack_f64(meta.inertia),
            pack_u64(meta.seed),
        ]
    )


def vocabulary_from_bytes(data: bytes) -> Vocabulary:
    r = ByteReader(data)
    r.expect_magic(MAGIC_VOCABULARY)
    r.expect_version()
    v = r.u32("codeword count")
    d = r.u32("dim")
    centroids = r.f32_array(v * d, "centroids").reshape(v, d)
    iterations = r.u32("training iterations")
    inertia = r.f64("final inertia")
    seed = r.u64("training seed")
    r.expect_end()
    return Vocabulary(
        centroids=centroids,
        training_meta=TrainingMeta(iterations=iterations, inertia=inertia, seed=seed),
    )


def save_vocabulary(vocab: Vocabulary, path: str | Path) -> None:
    Path(path).write_bytes(vocabulary_to_bytes(vocab))


def load_vocabulary(path: str | Path) -> Vocabulary:
    return vocabulary_from_bytes(Path(path).read_bytes())
