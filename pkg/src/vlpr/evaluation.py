"""Ground-truth neighborhoods and recall@N computation."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

DEFAULT_GT_DISTANCE = 25.0
DEFAULT_RECALL_NS = (1, 5, 10, 20)


class EmptyEvaluationError(ValueError):
    """No query had a ground-truth neighbor, so recall is undefined."""


@dataclass(frozen=True)
class PoseTable:
    """2D ground-truth positions in meters, one per image id."""

    entries: dict[str, tuple[float, float]]

    def __post_init__(self):
        clean = {}
        for image_id, (x, y) in self.entries.items():
            if not image_id:
                raise ValueError("pose table contains an empty image_id")
            x, y = float(x), float(y)
            if not (np.isfinite(x) and np.isfinite(y)):
                raise ValueError(f"non-finite pose for {image_id!r}: ({x}, {y})")
            clean[image_id] = (x, y)
        object.__setattr__(self, "entries", clean)

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, image_id: str) -> bool:
        return image_id in self.entries

    def get(self, image_id: str) -> tuple[float, float]:
        return self.entries[image_id]


def read_pose_csv(path: str | Path, has_header: bool = False) -> PoseTable:
    """Parse image_id,x,y rows; duplicate ids are rejected."""
    text = Path(path).read_text(encoding="utf-8")
    return parse_pose_csv(text, has_header=has_header, source=str(path))


def parse_pose_csv(text: str, has_header: bool = False, source: str = "<string>") -> PoseTable:
    entries: dict[str, tuple[float, float]] = {}
    reader = csv.reader(io.StringIO(text))
    for lineno, row in enumerate(reader, start=1):
        if not row:
            continue
        if has_header and lineno == 1:
            continue
        if len(row) != 3:
            raise ValueError(f"{source}:{lineno}: expected image_id,x,y, got {len(row)} fields")
        image_id = row[0].strip()
        try:
            x, y = float(row[1]), float(row[2])
        except ValueError:
            raise ValueError(f"{source}:{lineno}: malformed coordinates {row[1]!r}, {row[2]!r}") from None
        if image_id in entries:
            raise ValueError(f"{source}:{lineno}: duplicate image_id {image_id!r}")
        entries[image_id] = (x, y)
    return PoseTable(entries=entries)


def write_pose_csv(table: PoseTable, path: str | Path) -> None:
    lines = [f"{image_id},{x},{y}\n" for image_id, (x, y) in table.entries.items()]
    Path(path).write_text("".join(lines), encoding="utf-8", newline="")


def ground_truth_neighbors(
    db_poses: PoseTable, q_pose: tuple[float, float], d: float = DEFAULT_GT_DISTANCE
) -> set[str]:
    """Database ids within Euclidean distance d of the query pose (inclusive)."""
    if d <= 0:
        raise ValueError(f"distance threshold must be positive, got {d}")
    qx, qy = float(q_pose[0]), float(q_pose[1])
    out = set()
    for image_id, (x, y) in db_poses.entries.items():
        if np.hypot(x - qx, y - qy) <= d:
            out.add(image_id)
    return out


def alternating_split(image_ids: list[str], query_parity: int = 0) -> tuple[list[str], list[str]]:
    """Split an ordered sequence into (queries, database) by index parity."""
    if query_parity not in (0, 1):
        raise ValueError(f"query_parity must be 0 or 1, got {query_parity}")
    queries = [s for i, s in enumerate(image_ids) if i % 2 == query_parity]
    database = [s for i, s in enumerate(image_ids) if i % 2 != query_parity]
    return queries, database


@dataclass(frozen=True)
class EvalReport:
    recalls: dict[int, float]
    per_query: tuple[tuple[str, int | None], ...]  # (query_id, first correct rank)
    evaluated: int
    excluded: int

    def __post_init__(self):
        ns = sorted(self.recalls)
        values = [self.recalls[n] for n in ns]
        for a, b in zip(values, values[1:]):
            if b < a:
                raise ValueError(f"recall must be non-decreasing in N, got {self.recalls}")
        for n, v in self.recalls.items():
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"recall@{n} out of range: {v}")

    def to_key_values(self) -> str:
        lines = [f"evaluated={self.evaluated}", f"excluded={self.excluded}"]
        for n in sorted(self.recalls):
            lines.append(f"recall@{n}={self.recalls[n]:.6f}")
        return "\n".join(lines) + "\n"

    def to_table(self) -> str:
        header = f"{'N':>4}  {'recall':>8}"
        rows = [f"{n:>4}  {self.recalls[n]:>8.4f}" for n in sorted(self.recalls)]
        footer = f"queries evaluated: {self.evaluated}, excluded (no GT neighbor): {self.excluded}"
        return "\n".join([header, "-" * len(header), *rows, footer])


def recall_at_n(
    rankings: dict[str, list[str]],
    gt: dict[str, set[str]],
    ns: tuple[int, ...] | list[int] = DEFAULT_RECALL_NS,
) -> EvalReport:
    """Fraction of queries whose top-N candidates hit a ground-truth neighbor.

    Queries with an empty ground-truth set are excluded from the denominator
    and reported in the exclusion count. A ranked query with no gt entry at
    all is an error.
    """
    ns = tuple(sorted(set(int(n) for n in ns)))
    if not ns or ns[0] < 1:
        raise ValueError(f"recall cutoffs must be positive, got {ns}")
    missing = [q for q in rankings if q not in gt]
    if missing:
        raise ValueError(f"queries missing ground-truth entries: {sorted(missing)[:5]}")

    per_query: list[tuple[str, int | None]] = []
    evaluated = 0
    excluded = 0
    correct = {n: 0 for n in ns}
    for query_id, candidates in rankings.items():
        positives = gt[query_id]
        if not positives:
            excluded += 1
            per_query.append((query_id, None))
            continue
        evaluated += 1
        first_rank = None
        for rank, candidate in enumerate(candidates, start=1):
            if candidate in positives:
                first_rank = rank
                break
        per_query.append((query_id, first_rank))
        if first_rank is not None:
            for n in ns:
                if first_rank <= n:
                    correct[n] += 1
    if evaluated == 0:
        raise EmptyEvaluationError(
            "no evaluated queries: every query had an empty ground-truth set"
        )
    recalls = {n: correct[n] / evaluated for n in ns}
    return EvalReport(
        recalls=recalls,
        per_query=tuple(per_query),
        evaluated=evaluated,
        excluded=excluded,
    )
