"""Writers for the embedding-map (VLPR) and text-embedding (VLTX) formats.

Implements the published byte layout directly: little-endian fields, format
version 1, f32 payloads. This package talks to the recognition core only
through these files.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1


def embedding_map_bytes(data: np.ndarray) -> bytes:
    """Serialize an (H, W, D) float array as a VLPR blob."""
    data = np.ascontiguousarray(data, dtype="<f4")
    if data.ndim != 3:
        raise ValueError(f"expected an HxWxD array, got shape {data.shape}")
    h, w, d = data.shape
    if h < 1 or w < 1 or d < 1:
        raise ValueError(f"invalid embedding map shape {data.shape}")
    if not np.all(np.isfinite(data)):
        raise ValueError("embedding map contains non-finite values")
    return b"VLPR" + struct.pack("<IIII", FORMAT_VERSION, h, w, d) + data.tobytes()


def text_embeddings_bytes(labels: list[str], vectors: np.ndarray) -> bytes:
    """Serialize labels with their embedding rows as a VLTX blob."""
    vectors = np.ascontiguousarray(vectors, dtype="<f4")
    if len(labels) < 2:
        raise ValueError(f"need at least 2 labels, got {len(labels)}")
    if len(set(labels)) != len(labels):
        dupes = sorted({l for l in labels if labels.count(l) > 1})
        raise ValueError(f"duplicate labels: {dupes}")
    if any(not l for l in labels):
        raise ValueError("labels must be non-empty")
    if vectors.ndim != 2 or vectors.shape[0] != len(labels):
        raise ValueError(
            f"vectors shape {vectors.shape} does not match {len(labels)} labels"
        )
    if not np.all(np.isfinite(vectors)):
        raise ValueError("text embeddings contain non-finite values")
    n, d = vectors.shape
    parts = [b"VLTX", struct.pack("<III", FORMAT_VERSION, n, d)]
    for label, row in zip(labels, vectors):
        raw = label.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
        parts.append(row.tobytes())
    return b"".join(parts)


def write_embedding_map(data: np.ndarray, path: str | Path) -> None:
    Path(path).write_bytes(embedding_map_bytes(data))


def write_text_embeddings(labels: list[str], vectors: np.ndarray, path: str | Path) -> None:
    Path(path).write_bytes(text_embeddings_bytes(labels, vectors))
