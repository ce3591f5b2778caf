"""Histogram database with exhaustive top-N retrieval and binary persistence."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .formats import (
    FORMAT_VERSION,
    ByteReader,
    FormatError,
    MAGIC_INDEX,
    pack_f64,
    pack_u32,
    pack_utf8,
)
from .vocabulary import Histogram, NORM_MODES

_NORM_MODE_CODE = {mode: i for i, mode in enumerate(NORM_MODES)}


@dataclass(frozen=True)
class ImageRecord:
    image_id: str
    histogram: Histogram
    graph_payload: bytes | None = None
    pose: tuple[float, float] | None = None

    def __post_init__(self):
        if not self.image_id:
            raise ValueError("image_id must be non-empty")
        if self.pose is not None:
            x, y = self.pose
            if not (np.isfinite(x) and np.isfinite(y)):
                raise ValueError(f"pose must be finite, got {self.pose}")
            object.__setattr__(self, "pose", (float(x), float(y)))


@dataclass(frozen=True)
class RankedCandidate:
    image_id: str
    distance: float
    rank: int  # 1-based


def histogram_distance(a: Histogram, b: Histogram) -> float:
    """Euclidean distance between two same-shape, same-mode histograms."""
    if a.v != b.v:
        raise ValueError(f"histogram sizes differ: {a.v} vs {b.v}")
    if a.norm_mode != b.norm_mode:
        raise ValueError(f"histogram modes differ: {a.norm_mode!r} vs {b.norm_mode!r}")
    diff = a.bins - b.bins
    return float(np.sqrt(np.sum(diff * diff)))


class ImageDatabase:
    """Insertion-ordered record store; queries see an immutable snapshot.

    Reads may run concurrently; add/save require exclusive access.
    """

    def __init__(self):
        self._records: dict[str, ImageRecord] = {}
        self._matrix: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self._records)

    def __contains__(self, image_id: str) -> bool:
        return image_id in self._records

    def get(self, image_id: str) -> ImageRecord:
        return self._records[image_id]

    def ids(self) -> list[str]:
        return list(self._records)

    def records(self) -> list[ImageRecord]:
        return list(self._records.values())

    @property
    def v(self) -> int | None:
        if not self._records:
            return None
        return next(iter(self._records.values())).histogram.v

    @property
    def norm_mode(self) -> str | None:
        if not self._records:
            return None
        return next(iter(self._records.values())).histogram.norm_mode

    def add(self, record: ImageRecord) -> None:
        if record.image_id in self._records:
            raise ValueError(f"duplicate image_id {record.image_id!r}")
        if self._records:
            if record.histogram.v != self.v:
                raise ValueError(
                    f"histogram size {record.histogram.v} does not match database size {self.v}"
                )
            if record.histogram.norm_mode != self.norm_mode:
                raise ValueError(
                    f"histogram mode {record.histogram.norm_mode!r} does not match "
                    f"database mode {self.norm_mode!r}"
                )
        self._records[record.image_id] = record
        self._matrix = None

    def _histogram_matrix(self) -> np.ndarray:
        if self._matrix is None:
            self._matrix = np.stack([r.histogram.bins for r in self._records.values()])
        return self._matrix

    def query_topn(self, query: Histogram, n: int) -> list[RankedCandidate]:
        """The min(n, size) nearest records by histogram distance.

        Ordering is ascending distance with ties broken by ascending
        image_id, so results depend only on database content.
        """
        if not self._records:
            raise ValueError("cannot query an empty database")
        if n < 1:
            raise ValueError(f"n must be >= 1, got {n}")
        if query.v != self.v:
            raise ValueError(f"query size {query.v} does not match database size {self.v}")
        if query.norm_mode != self.norm_mode:
            raise ValueError(
                f"query mode {query.norm_mode!r} does not match database mode {self.norm_mode!r}"
            )
        diff = self._histogram_matrix() - query.bins[None, :]
        dists = np.sqrt(np.einsum("ij,ij->i", diff, diff))
        ids = self.ids()
        order = sorted(range(len(ids)), key=lambda i: (dists[i], ids[i]))
        return [
            RankedCandidate(image_id=ids[i], distance=float(dists[i]), rank=rank)
            for rank, i in enumerate(order[: min(n, len(ids))], start=1)
        ]


def index_to_bytes(db: ImageDatabase) -> bytes:
    parts = [MAGIC_INDEX, pack_u32(FORMAT_VERSION), pack_u32(len(db))]
    for record in db.records():
        hist = record.histogram
        body = [
            pack_utf8(record.image_id),
            bytes([_NORM_MODE_CODE[hist.norm_mode]]),
            pack_u32(hist.v),
            np.ascontiguousarray(hist.bins, dtype="<f8").tobytes(),
        ]
        if record.graph_payload is None:
            body.append(b"\x00")
        else:
            body.append(b"\x01")
            body.append(pack_u32(len(record.graph_payload)))
            body.append(record.graph_payload)
        if record.pose is None:
            body.append(b"\x00")
        else:
            body.append(b"\x01")
            body.append(pack_f64(record.pose[0]))
            body.append(pack_f64(record.pose[1]))
        blob = b"".join(body)
        parts.append(pack_u32(len(blob)))
        parts.append(blob)
    return b"".join(parts)


def index_from_bytes(data: bytes) -> ImageDatabase:
    r = ByteReader(data)
    r.expect_magic(MAGIC_INDEX)
    r.expect_version()
    count = r.u32("record count")
    db = ImageDatabase()
    for i in range(count):
        at = r.offset
        length = r.u32(f"record {i} length")
        end = r.offset + length
        image_id = r.utf8(f"record {i} image_id")
        mode_code = r.u8(f"record {i} norm_mode")
        if mode_code >= len(NORM_MODES):
            raise FormatError(f"record {i} has unknown norm_mode code {mode_code}", at)
        v = r.u32(f"record {i} histogram size")
        bins = r.f64_array(v, f"record {i} bins")
        payload = None
        if r.u8(f"record {i} payload flag"):
            payload_len = r.u32(f"record {i} payload length")
            payload = r.take(payload_len, f"record {i} payload")
        pose = None
        if r.u8(f"record {i} pose flag"):
            pose = (r.f64(f"record {i} pose x"), r.f64(f"record {i} pose y"))
        if r.offset != end:
            raise FormatError(
                f"record {i} length field says {length} bytes but {r.offset - at - 4} were read",
                at,
            )
        db.add(
            ImageRecord(
                image_id=image_id,
                histogram=Histogram(bins=bins, norm_mode=NORM_MODES[mode_code]),
                graph_payload=payload,
                pose=pose,
            )
        )
    r.expect_end()
    return db


def save_index(db: ImageDatabase, path: str | Path) -> None:
    Path(path).write_bytes(index_to_bytes(db))


def load_index(path: str | Path) -> ImageDatabase:
    return index_from_bytes(Path(path).read_bytes())
