"""Deterministic color-anchor encoder.

A lightweight stand-in for a pretrained joint text/image model: pixels and
label words embed into one space built from a fixed palette of anchor
colors, each tied to a random unit direction. A pixel's embedding is the
similarity-weighted sum of anchor directions for its color; a label embeds
as the (unit) encoding of its prototype color, taken from a built-in street
lexicon or derived from the label hash. Correlating the two recovers soft
color proximity, which is enough to exercise the whole recognition pipeline
without any model weights. Fully deterministic for a fixed revision.
"""

from __future__ import annotations

import hashlib

import numpy as np

DIM = 64
COLOR_SIGMA = 0.12
LABEL_TIEBREAK = 0.02

# Prototype colors for common street categories (RGB, 0-255).
LEXICON = {
    "road": (90, 90, 95),
    "sidewalk": (170, 170, 170),
    "building": (150, 120, 105),
    "vehicle": (160, 40, 45),
    "car": (200, 30, 30),
    "bicycle": (30, 60, 200),
    "motorcycle": (230, 130, 30),
    "vegetation": (40, 140, 45),
    "trunk": (115, 80, 50),
    "terrain": (190, 170, 105),
    "cyclist": (250, 210, 60),
    "pole": (120, 125, 135),
    "sky": (135, 205, 235),
    "other": (128, 0, 128),
}

EXTRA_ANCHORS = (
    (0, 0, 0),
    (255, 255, 255),
    (255, 0, 0),
    (0, 255, 0),
    (0, 0, 255),
    (255, 255, 0),
    (0, 255, 255),
    (70, 70, 70),
    (210, 210, 210),
    (255, 128, 0),
)


def _seed_from(tag: str) -> int:
    return int.from_bytes(hashlib.blake2b(tag.encode(), digest_size=8).digest(), "little")


def _hash_color(label: str) -> tuple[int, int, int]:
    digest = hashlib.blake2b(f"color:{label}".encode(), digest_size=3).digest()
    return (digest[0], digest[1], digest[2])


class ColorAnchorBackend:
    name = "colorhash"

    def __init__(self, revision: str = "1"):
        self.revision = revision
        self.dim = DIM
        anchors = list(LEXICON.values()) + list(EXTRA_ANCHORS)
        self._anchors = np.asarray(anchors, dtype=np.float64) / 255.0
        rng = np.random.Generator(
            np.random.Philox(key=np.uint64(_seed_from(f"{self.name}:{revision}")))
        )
        directions = rng.normal(size=(len(anchors), DIM))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        self._directions = directions

    def _encode_colors(self, rgb01: np.ndarray) -> np.ndarray:
        """Soft-anchor encoding of (..., 3) colors in [0, 1]."""
        flat = rgb01.reshape(-1, 3)
        d2 = ((flat[:, None, :] - self._anchors[None, :, :]) ** 2).sum(axis=2)
        weights = np.exp(-d2 / (2.0 * COLOR_SIGMA**2))
        emb = weights @ self._directions
        return emb.reshape(*rgb01.shape[:-1], DIM)

    def encode_text(self, labels: list[str]) -> np.ndarray:
        out = np.empty((len(labels), DIM), dtype=np.float64)
        for i, label in enumerate(labels):
            color = LEXICON.get(label, _hash_color(label))
            vec = self._encode_colors(np.asarray(color, dtype=np.float64)[None, :] / 255.0)[0]
            norm = np.linalg.norm(vec)
            if norm > 0:
                vec = vec / norm
            # Small label-specific component keeps same-colored labels distinct.
            tiebreak_rng = np.random.Generator(
                np.random.Philox(key=np.uint64(_seed_from(f"label:{self.revision}:{label}")))
            )
            tiebreak = tiebreak_rng.normal(size=DIM)
            tiebreak /= np.linalg.norm(tiebreak)
            out[i] = vec + LABEL_TIEBREAK * tiebreak
        return out.astype(np.float32)

    def encode_image(self, image: np.ndarray, downsample: int) -> np.ndarray:
        image = np.asarray(image)
        if image.ndim != 3 or image.shape[2] != 3:
            raise ValueError(f"expected an (H, W, 3) image, got shape {image.shape}")
        if downsample < 1:
            raise ValueError(f"downsample factor must be >= 1, got {downsample}")
        emb = self._encode_colors(image.astype(np.float64) / 255.0)
        h, w = image.shape[:2]
        out_h = -(-h // downsample)
        out_w = -(-w // downsample)
        pooled = np.empty((out_h, out_w, DIM), dtype=np.float64)
        for i in range(out_h):
            for j in range(out_w):
                block = emb[
                    i * downsample : min((i + 1) * downsample, h),
                    j * downsample : min((j + 1) * downsample, w),
                ]
                pooled[i, j] = block.mean(axis=(0, 1))
        return pooled.astype(np.float32)
