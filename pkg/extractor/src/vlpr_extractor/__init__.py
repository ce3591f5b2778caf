"""Embedding extraction: RGB images -> VLPR/VLTX files via encoder backends."""

from .backends import (
    EncoderBackend,
    MissingWeightsError,
    UnknownRevisionError,
    create_backend,
    load_lock,
)
from .jobs import ExtractionJob, extract_text_embeddings, job_from_manifest, run_job
from .writers import write_embedding_map, write_text_embeddings

__version__ = "0.1.0"

__all__ = [
    "EncoderBackend",
    "ExtractionJob",
    "MissingWeightsError",
    "UnknownRevisionError",
    "create_backend",
    "extract_text_embeddings",
    "job_from_manifest",
    "load_lock",
    "run_job",
    "write_embedding_map",
    "write_text_embeddings",
]
