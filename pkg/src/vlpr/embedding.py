"""Pixel/text embedding types, per-pixel labeling, and dynamic-object masking."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Default street-scene category list; override via config for other environments.
DEFAULT_LABELS = (
    "road",
    "sidewalk",
    "building",
    "vehicle",
    "car",
    "bicycle",
    "motorcycle",
    "vegetation",
    "trunk",
    "terrain",
    "cyclist",
    "pole",
    "sky",
    "other",
)

# Movable categories excluded from descriptor extraction by default.
DEFAULT_FILTERED_LABELS = frozenset(
    {"vehicle", "car", "bicycle", "motorcycle", "cyclist", "other"}
)


def _freeze(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class PixelEmbeddingMap:
    """Dense D-dim embedding per (downsampled) pixel, row-major, float32."""

    height: int
    width: int
    dim: int
    data: np.ndarray  # shape (height, width, dim), float32
    source_image_id: str = ""

    def __post_init__(self):
        if self.height < 1 or self.width < 1 or self.dim < 1:
            raise ValueError(
                f"invalid embedding map shape {self.height}x{self.width}x{self.dim}"
            )
        data = np.ascontiguousarray(self.data, dtype=np.float32)
        if data.shape != (self.height, self.width, self.dim):
            raise ValueError(
                f"data shape {data.shape} != declared "
                f"({self.height}, {self.width}, {self.dim})"
            )
        if not np.all(np.isfinite(data)):
            raise ValueError("embedding map contains non-finite values")
        object.__setattr__(self, "data", _freeze(data))

    @classmethod
    def from_array(cls, data: np.ndarray, source_image_id: str = "") -> "PixelEmbeddingMap":
        data = np.asarray(data, dtype=np.float32)
        if data.ndim != 3:
            raise ValueError(f"expected HxWxD array, got shape {data.shape}")
        h, w, d = data.shape
        return cls(height=h, width=w, dim=d, data=data, source_image_id=source_image_id)


@dataclass(frozen=True)
class TextEmbeddingSet:
    """Ordered label strings with one embedding vector per label."""

    labels: tuple[str, ...]
    vectors: np.ndarray  # shape (N, dim), float32

    def __post_init__(self):
        labels = tuple(self.labels)
        if len(labels) < 2:
            raise ValueError(f"need at least 2 labels, got {len(labels)}")
        if len(set(labels)) != len(labels):
            dupes = sorted({l for l in labels if labels.count(l) > 1})
            raise ValueError(f"duplicate labels: {dupes}")
        if any(not l for l in labels):
            raise ValueError("labels must be non-empty strings")
        vectors = np.ascontiguousarray(self.vectors, dtype=np.float32)
        if vectors.ndim != 2 or vectors.shape[0] != len(labels):
            raise ValueError(
                f"vectors shape {vectors.shape} does not match {len(labels)} labels"
            )
        if not np.all(np.isfinite(vectors)):
            raise ValueError("text embeddings contain non-finite values")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "vectors", _freeze(vectors))

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def index_of(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"unknown label {label!r}") from None


@dataclass(frozen=True)
class LabelMap:
    """Per-pixel predicted label indices into a TextEmbeddingSet."""

    height: int
    width: int
    labels: np.ndarray  # shape (height, width), int32
    n_labels: int

    def __post_init__(self):
        labels = np.ascontiguousarray(self.labels, dtype=np.int32)
        if labels.shape != (self.height, self.width):
            raise ValueError(
                f"label array shape {labels.shape} != ({self.height}, {self.width})"
            )
        if labels.size and (labels.min() < 0 or labels.max() >= self.n_labels):
            raise ValueError(
                f"label indices must lie in [0, {self.n_labels}), "
                f"got range [{labels.min()}, {labels.max()}]"
            )
        object.__setattr__(self, "labels", _freeze(labels))


@dataclass(frozen=True)
class FilterSet:
    """Label strings whose pixels are excluded from descriptor extraction."""

    filtered_labels: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "filtered_labels", frozenset(self.filtered_labels))

    @classmethod
    def default(cls) -> "FilterSet":
        return cls(DEFAULT_FILTERED_LABELS)

    @classmethod
    def none(cls) -> "FilterSet":
        return cls(frozenset())

    def validate_against(self, texts: TextEmbeddingSet) -> None:
        for label in sorted(self.filtered_labels):
            if label not in texts.labels:
                raise ValueError(
                    f"filter label {label!r} not present in the text embedding set"
                )


def correlate_pixel(embedding: np.ndarray, texts: TextEmbeddingSet) -> np.ndarray:
    """Inner product of one pixel embedding against every text embedding.

    Accumulates in float64 regardless of input precision.
    """
    embedding = np.asarray(embedding)
    if embedding.ndim != 1 or embedding.shape[0] != texts.dim:
        raise ValueError(
            f"embedding dim {embedding.shape} does not match text dim {texts.dim}"
        )
    return texts.vectors.astype(np.float64) @ embedding.astype(np.float64)


def label_map(emb: PixelEmbeddingMap, texts: TextEmbeddingSet) -> LabelMap:
    """Predict a category per pixel by maximum text correlation.

    Ties resolve to the lowest label index, so the result is deterministic.
    """
    if emb.dim != texts.dim:
        raise ValueError(
            f"embedding map dim {emb.dim} does not match text dim {texts.dim}"
        )
    flat = emb.data.reshape(-1, emb.dim).astype(np.float64)
    scores = flat @ texts.vectors.astype(np.float64).T
    # np.argmax returns the first maximum, which is the lowest index.
    idx = np.argmax(scores, axis=1).astype(np.int32)
    return LabelMap(
        height=emb.height,
        width=emb.width,
        labels=idx.reshape(emb.height, emb.width),
        n_labels=texts.n,
    )


def dynamic_mask(
    lm: LabelMap, texts: TextEmbeddingSet, filter_set: FilterSet
) -> np.ndarray:
    """Boolean usable-pixel mask; False where the predicted label is filtered."""
    if lm.n_labels != texts.n:
        raise ValueError(
            f"label map built for {lm.n_labels} labels, text set has {texts.n}"
        )
    filter_set.validate_against(texts)
    filtered_idx = np.array(
        sorted(texts.index_of(l) for l in filter_set.filtered_labels), dtype=np.int32
    )
    if filtered_idx.size == 0:
        return np.ones((lm.height, lm.width), dtype=bool)
    return ~np.isin(lm.labels, filtered_idx)
