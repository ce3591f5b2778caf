"""Keypoint selection: random descriptor sampling and per-label segment centroids."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .embedding import LabelMap, PixelEmbeddingMap

DEFAULT_K = 500
DEFAULT_MIN_CLUSTER_SIZE = 25


class EmptyFrameError(ValueError):
    """Raised when a frame has no usable pixels and contributes no descriptors."""


@dataclass(frozen=True)
class Keypoint:
    row: int
    col: int
    label_index: int
    descriptor: np.ndarray  # (D,), float32

    def __post_init__(self):
        d = np.ascontiguousarray(self.descriptor, dtype=np.float32)
        if d.ndim != 1:
            raise ValueError(f"descriptor must be 1-D, got shape {d.shape}")
        if not np.all(np.isfinite(d)):
            raise ValueError("keypoint descriptor contains non-finite values")
        d.flags.writeable = False
        object.__setattr__(self, "descriptor", d)


@dataclass(frozen=True)
class LabelCluster:
    label_index: int
    members: np.ndarray  # (size, 2) int32 rows of (row, col), row-major order
    centroid: tuple[float, float]  # (row, col) means, not rounded

    def __post_init__(self):
        members = np.ascontiguousarray(self.members, dtype=np.int32)
        if members.ndim != 2 or members.shape[1] != 2 or members.shape[0] == 0:
            raise ValueError(f"members must be a non-empty (n, 2) array, got {members.shape}")
        r, c = self.centroid
        if not (members[:, 0].min() <= r <= members[:, 0].max()):
            raise ValueError("centroid row outside member bounding box")
        if not (members[:, 1].min() <= c <= members[:, 1].max()):
            raise ValueError("centroid col outside member bounding box")
        members.flags.writeable = False
        object.__setattr__(self, "members", members)

    @property
    def size(self) -> int:
        return self.members.shape[0]


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based Philox generator; the sampling algorithm pinned per release."""
    return np.random.Generator(np.random.Philox(key=np.uint64(seed)))


def derive_seed(base_seed: int, tag: str) -> int:
    """Stable 64-bit per-item seed derived from a base seed and a string tag."""
    digest = hashlib.blake2b(
        f"{base_seed}:{tag}".encode("utf-8"), digest_size=8
    ).digest()
    return int.from_bytes(digest, "little")


def sample_keypoints(
    mask: np.ndarray,
    lm: LabelMap,
    emb: PixelEmbeddingMap,
    k: int,
    seed: int,
) -> list[Keypoint]:
    """Sample min(k, usable) keypoints uniformly without replacement.

    The output order is the generator's draw order, so a fixed seed gives an
    identical list. Raises EmptyFrameError when the mask has no usable pixel.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (emb.height, emb.width):
        raise ValueError(f"mask shape {mask.shape} != map shape {(emb.height, emb.width)}")
    if lm.labels.shape != mask.shape:
        raise ValueError(f"label map shape {lm.labels.shape} != mask shape {mask.shape}")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    usable = np.flatnonzero(mask.reshape(-1))
    if usable.size == 0:
        raise EmptyFrameError("no usable pixels: frame contributes no descriptors")
    count = min(k, usable.size)
    rng = make_rng(seed)
    picks = usable[rng.choice(usable.size, size=count, replace=False)]
    rows, cols = np.divmod(picks, emb.width)
    return [
        Keypoint(
            row=int(r),
            col=int(c),
            label_index=int(lm.labels[r, c]),
            descriptor=emb.data[r, c],
        )
        for r, c in zip(rows, cols)
    ]


def label_components(
    lm: LabelMap,
    mask: np.ndarray,
    min_cluster_size: int = DEFAULT_MIN_CLUSTER_SIZE,
) -> list[LabelCluster]:
    """Maximal 4-connected components of equal-labeled, unmasked pixels.

    Components below min_cluster_size are dropped. Output is ordered by
    (label_index, first member in row-major order) and members are row-major.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != lm.labels.shape:
        raise ValueError(f"mask shape {mask.shape} != label map shape {lm.labels.shape}")
    four_conn = ndimage.generate_binary_structure(2, 1)
    clusters: list[LabelCluster] = []
    for label in np.unique(lm.labels[mask]) if mask.any() else []:
        binary = (lm.labels == label) & mask
        comp, n_comp = ndimage.label(binary, structure=four_conn)
        if n_comp == 0:
            continue
        flat = comp.reshape(-1)
        order = np.argsort(flat, kind="stable")
        boundaries = np.searchsorted(flat[order], np.arange(1, n_comp + 2))
        entries = []
        for ci in range(n_comp):
            idx = order[boundaries[ci] : boundaries[ci + 1]]
            if idx.size < min_cluster_size:
                continue
            idx = np.sort(idx)
            rows, cols = np.divmod(idx, lm.width)
            members = np.stack([rows, cols], axis=1).astype(np.int32)
            centroid = (float(rows.mean()), float(cols.mean()))
            entries.append((int(idx[0]), LabelCluster(int(label), members, centroid)))
        entries.sort(key=lambda e: e[0])
        clusters.extend(c for _, c in entries)
    return clusters


def _round_half_toward_zero(x: float) -> int:
    return int(np.sign(x) * np.ceil(abs(x) - 0.5))


def cluster_nodes(
    clusters: list[LabelCluster], emb: PixelEmbeddingMap
) -> list[Keypoint]:
    """One keypoint per cluster: rounded centroid pixel, mean member embedding."""
    nodes = []
    for cluster in clusters:
        rows = cluster.members[:, 0]
        cols = cluster.members[:, 1]
        if rows.max() >= emb.height or cols.max() >= emb.width:
            raise ValueError("cluster members outside embedding map bounds")
        descriptor = emb.data[rows, cols].astype(np.float64).mean(axis=0)
        nodes.append(
            Keypoint(
                row=_round_half_toward_zero(cluster.centroid[0]),
                col=_round_half_toward_zero(cluster.centroid[1]),
                label_index=cluster.label_index,
                descriptor=descriptor.astype(np.float32),
            )
        )
    return nodes
