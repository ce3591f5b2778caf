"""Encoder backend protocol, registry, and the pinned-revision lock file."""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path
from typing import Protocol, runtime_checkable

import numpy as np


class MissingWeightsError(RuntimeError):
    """Pinned model weights are not available locally."""


class UnknownRevisionError(RuntimeError):
    """Requested backend revision does not match the lock file."""


@runtime_checkable
class EncoderBackend(Protocol):
    """Joint text/image encoder producing embeddings in one shared space."""

    name: str
    revision: str
    dim: int

    def encode_text(self, labels: list[str]) -> np.ndarray:
        """(N, dim) float32, one row per label."""

    def encode_image(self, image: np.ndarray, downsample: int) -> np.ndarray:
        """(ceil(H/s), ceil(W/s), dim) float32 for an (H, W, 3) uint8 image."""


def load_lock(path: str | Path | None = None) -> dict:
    if path is not None:
        text = Path(path).read_text(encoding="utf-8")
    else:
        text = resources.files("vlpr_extractor").joinpath("extractor.lock").read_text(
            encoding="utf-8"
        )
    lock = json.loads(text)
    if "backends" not in lock or not isinstance(lock["backends"], dict):
        raise ValueError("lock file must contain a 'backends' table")
    return lock


def create_backend(
    name: str,
    lock: dict | None = None,
    device: str = "cpu",
) -> EncoderBackend:
    """Instantiate a backend pinned by the lock file."""
    lock = lock if lock is not None else load_lock()
    entries = lock["backends"]
    if name not in entries:
        raise UnknownRevisionError(
            f"backend {name!r} is not pinned; lock file knows {sorted(entries)}"
        )
    entry = entries[name]
    if name == "colorhash":
        from .colorhash import ColorAnchorBackend

        return ColorAnchorBackend(revision=str(entry["revision"]))
    if name == "clip":
        from .clip_backend import ClipDenseBackend

        return ClipDenseBackend(
            model=str(entry["model"]),
            revision=str(entry["revision"]),
            device=device,
        )
    raise UnknownRevisionError(f"no implementation registered for backend {name!r}")
