"""Command-line entry point for extraction jobs.

Exit codes: 0 success, 2 bad manifest/arguments, 3 input error,
4 backend/model error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .backends import MissingWeightsError, UnknownRevisionError, create_backend, load_lock
from .jobs import extract_text_embeddings, job_from_manifest, run_job

log = logging.getLogger("vlpr_extractor")

EXIT_OK = 0
EXIT_ARGS = 2
EXIT_INPUT = 3
EXIT_MODEL = 4


def _setup_logging() -> None:
    level_name = os.environ.get("VLPR_LOG", "info").upper()
    logging.basicConfig(
        level=getattr(logging, level_name, logging.INFO),
        format="%(levelname)s %(name)s: %(message)s",
    )


def cmd_run(args: argparse.Namespace) -> int:
    try:
        job = job_from_manifest(args.manifest)
    except (OSError, ValueError) as e:
        log.error("bad manifest: %s", e)
        return EXIT_ARGS
    backend_name = args.backend or job.backend
    try:
        lock = load_lock(args.lock) if args.lock else load_lock()
        backend = create_backend(backend_name, lock=lock, device=job.device)
    except (MissingWeightsError, UnknownRevisionError, OSError, ValueError) as e:
        log.error("backend error: %s", e)
        return EXIT_MODEL
    stats = run_job(job, backend)
    print(
        f"wrote {len(stats.written)} embedding maps "
        f"(dim {backend.dim}, backend {backend.name} rev {backend.revision}) "
        f"to {job.output_dir}"
    )
    if stats.skipped_unreadable:
        print(f"skipped {len(stats.skipped_unreadable)} unreadable images")
    if not stats.written:
        log.error("no images could be read")
        return EXIT_INPUT
    return EXIT_OK


def cmd_texts(args: argparse.Namespace) -> int:
    labels = [part.strip() for part in args.labels.split(",") if part.strip()]
    try:
        lock = load_lock(args.lock) if args.lock else load_lock()
        backend = create_backend(args.backend, lock=lock)
    except (MissingWeightsError, UnknownRevisionError, OSError, ValueError) as e:
        log.error("backend error: %s", e)
        return EXIT_MODEL
    try:
        extract_text_embeddings(labels, backend, args.out)
    except ValueError as e:
        log.error("bad label list: %s", e)
        return EXIT_ARGS
    print(f"wrote {len(labels)} label embeddings (dim {backend.dim}) to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vlpr-extract",
        description="Produce VLPR/VLTX files from RGB images and a label list.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a batch extraction job from a manifest")
    p.add_argument("--manifest", required=True, help="JSON job manifest")
    p.add_argument("--backend", help="override the manifest's backend")
    p.add_argument("--lock", help="alternative lock file")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("texts", help="embed a label list only")
    p.add_argument("--labels", required=True, help="comma-separated label names")
    p.add_argument("--out", required=True, help="output .vltx path")
    p.add_argument("--backend", default="colorhash")
    p.add_argument("--lock", help="alternative lock file")
    p.set_defaults(func=cmd_texts)
    return parser


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
