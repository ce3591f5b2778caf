"""Extraction jobs: manifest parsing and batch execution."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .backends import EncoderBackend
from .writers import write_embedding_map, write_text_embeddings

log = logging.getLogger("vlpr_extractor")


@dataclass(frozen=True)
class ExtractionJob:
    image_paths: tuple[Path, ...]
    labels: tuple[str, ...]
    output_dir: Path
    downsample: int = 4
    backend: str = "colorhash"
    device: str = "cpu"

    def __post_init__(self):
        if not self.labels:
            raise ValueError("label list must be non-empty")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("labels must be unique")
        if self.downsample < 1:
            raise ValueError(f"downsample factor must be >= 1, got {self.downsample}")
        if not self.image_paths:
            raise ValueError("image list must be non-empty")


def job_from_manifest(path: str | Path) -> ExtractionJob:
    """Load a JSON manifest: images, labels, output_dir, downsample, backend."""
    path = Path(path)
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ValueError(f"{path}: not valid JSON: {e}") from None
    required = {"images", "labels", "output_dir"}
    missing = required - set(manifest)
    if missing:
        raise ValueError(f"{path}: manifest missing keys {sorted(missing)}")
    base = path.parent
    return ExtractionJob(
        image_paths=tuple(
            (base / p).resolve() if not Path(p).is_absolute() else Path(p)
            for p in manifest["images"]
        ),
        labels=tuple(manifest["labels"]),
        output_dir=(base / manifest["output_dir"]).resolve()
        if not Path(manifest["output_dir"]).is_absolute()
        else Path(manifest["output_dir"]),
        downsample=int(manifest.get("downsample", 4)),
        backend=str(manifest.get("backend", "colorhash")),
        device=str(manifest.get("device", "cpu")),
    )


@dataclass
class JobStats:
    written: list[str] = field(default_factory=list)
    skipped_unreadable: list[str] = field(default_factory=list)


def extract_text_embeddings(
    labels: tuple[str, ...] | list[str],
    backend: EncoderBackend,
    out_path: str | Path,
) -> None:
    labels = list(labels)
    vectors = backend.encode_text(labels)
    write_text_embeddings(labels, vectors, out_path)


def run_job(job: ExtractionJob, backend: EncoderBackend) -> JobStats:
    """Write labels.vltx plus one .vlpr per readable image."""
    stats = JobStats()
    job.output_dir.mkdir(parents=True, exist_ok=True)
    extract_text_embeddings(job.labels, backend, job.output_dir / "labels.vltx")
    for image_path in job.image_paths:
        try:
            with Image.open(image_path) as img:
                rgb = np.asarray(img.convert("RGB"))
        except (OSError, UnidentifiedImageError) as e:
            stats.skipped_unreadable.append(str(image_path))
            log.warning("unreadable image %s: %s", image_path, e)
            continue
        emb = backend.encode_image(rgb, job.downsample)
        out_path = job.output_dir / f"{image_path.stem}.vlpr"
        write_embedding_map(emb, out_path)
        stats.written.append(str(out_path))
    return stats
