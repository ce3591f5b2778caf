"""Context graphs over segment-centroid keypoints: build, match, score, re-rank.

Nodes are labeled keypoints; an edge connects two nodes whose pixel distance
is at most tau (inclusive). Two graphs are compared through label- and
cosine-gated node correspondences, scored by how often correspondence pairs
agree on adjacency.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .formats import ByteReader, pack_u32
from .sampling import Keypoint

DEFAULT_TAU = 50.0
DEFAULT_COSINE_THRESHOLD = 0.95
DEFAULT_RERANK_M = 20


@dataclass(frozen=True)
class ContextGraph:
    nodes: tuple[Keypoint, ...]
    tau: float
    edges: frozenset[tuple[int, int]]  # (i, j) with i < j
    edge_distances: dict[tuple[int, int], float]
    adjacency: np.ndarray  # (n, n) uint8, symmetric, zero diagonal

    @property
    def n(self) -> int:
        return len(self.nodes)


def build_context_graph(nodes: list[Keypoint], tau: float) -> ContextGraph:
    """All-pairs graph with an edge wherever pixel distance <= tau."""
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    nodes = tuple(nodes)
    n = len(nodes)
    adjacency = np.zeros((n, n), dtype=np.uint8)
    edges = set()
    distances: dict[tuple[int, int], float] = {}
    if n >= 2:
        coords = np.array([(kp.row, kp.col) for kp in nodes], dtype=np.float64)
        diff = coords[:, None, :] - coords[None, :, :]
        d = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
        for i in range(n):
            for j in range(i + 1, n):
                if d[i, j] <= tau:
                    edges.add((i, j))
                    distances[(i, j)] = float(d[i, j])
                    adjacency[i, j] = 1
                    adjacency[j, i] = 1
    adjacency.flags.writeable = False
    return ContextGraph(
        nodes=nodes,
        tau=float(tau),
        edges=frozenset(edges),
        edge_distances=distances,
        adjacency=adjacency,
    )


@dataclass(frozen=True)
class Correspondence:
    query_node: int
    candidate_node: int
    cosine: float


def match_correspondences(
    q_nodes: list[Keypoint] | tuple[Keypoint, ...],
    c_nodes: list[Keypoint] | tuple[Keypoint, ...],
    t: float = DEFAULT_COSINE_THRESHOLD,
) -> list[Correspondence]:
    """Greedy one-to-one matching of same-label nodes by descending cosine.

    Pairs must share label_index and reach cosine >= t. Zero-norm descriptors
    never match. Descending cosine with (query, candidate) index tie-breaks
    makes the matching deterministic.
    """
    if not (0 < t <= 1):
        raise ValueError(f"threshold t must lie in (0, 1], got {t}")
    if not q_nodes or not c_nodes:
        return []
    q_desc = np.stack([kp.descriptor for kp in q_nodes]).astype(np.float64)
    c_desc = np.stack([kp.descriptor for kp in c_nodes]).astype(np.float64)
    q_norm = np.sqrt(np.einsum("ij,ij->i", q_desc, q_desc))
    c_norm = np.sqrt(np.einsum("ij,ij->i", c_desc, c_desc))
    q_labels = np.array([kp.label_index for kp in q_nodes])
    c_labels = np.array([kp.label_index for kp in c_nodes])

    scored = []
    for qi in range(len(q_nodes)):
        if q_norm[qi] == 0:
            continue
        for ci in range(len(c_nodes)):
            if c_norm[ci] == 0 or q_labels[qi] != c_labels[ci]:
                continue
            cos = float(q_desc[qi] @ c_desc[ci] / (q_norm[qi] * c_norm[ci]))
            if cos >= t:
                scored.append((cos, qi, ci))
    scored.sort(key=lambda s: (-s[0], s[1], s[2]))

    used_q: set[int] = set()
    used_c: set[int] = set()
    matches = []
    for cos, qi, ci in scored:
        if qi in used_q or ci in used_c:
            continue
        used_q.add(qi)
        used_c.add(ci)
        matches.append(Correspondence(query_node=qi, candidate_node=ci, cosine=cos))
    return matches


def graph_similarity(
    g_q: ContextGraph, g_c: ContextGraph, corr: list[Correspondence]
) -> float:
    """Structural agreement in [0, 1].

    Over all unordered correspondence pairs, count those whose query-side and
    candidate-side adjacency entries agree; scale the agreement ratio by the
    matched fraction of the larger graph. Fewer than two correspondences
    score 0.
    """
    m = len(corr)
    if m < 2:
        return 0.0
    for c in corr:
        if not (0 <= c.query_node < g_q.n and 0 <= c.candidate_node < g_c.n):
            raise ValueError(
                f"correspondence ({c.query_node}, {c.candidate_node}) out of range"
            )
    consistent = 0
    total = 0
    for a in range(m):
        for b in range(a + 1, m):
            total += 1
            qa, qb = corr[a].query_node, corr[b].query_node
            ca, cb = corr[a].candidate_node, corr[b].candidate_node
            if g_q.adjacency[qa, qb] == g_c.adjacency[ca, cb]:
                consistent += 1
    coverage = m / max(g_q.n, g_c.n)
    return (consistent / total) * coverage


def rerank(
    query: ContextGraph,
    candidates: list[tuple[str, ContextGraph]],
    t: float = DEFAULT_COSINE_THRESHOLD,
) -> list[tuple[str, float]]:
    """Order retrieval candidates by descending context-graph similarity.

    Ties keep the incoming (retrieval) order, then ascending image id.
    """
    if not candidates:
        raise ValueError("candidate list is empty")
    scored = []
    for position, (image_id, g_c) in enumerate(candidates):
        corr = match_correspondences(query.nodes, g_c.nodes, t=t)
        scored.append((image_id, graph_similarity(query, g_c, corr), position))
    scored.sort(key=lambda s: (-s[1], s[2], s[0]))
    return [(image_id, score) for image_id, score, _ in scored]


def serialize_nodes(nodes: list[Keypoint] | tuple[Keypoint, ...]) -> bytes:
    """Pack keypoints as u32 count then (u16 row, u16 col, u16 label, D f32) LE.

    Tau is a query-time parameter, so only nodes are stored; the graph is
    rebuilt on load.
    """
    parts = [pack_u32(len(nodes))]
    for kp in nodes:
        if not (0 <= kp.row < 65536 and 0 <= kp.col < 65536):
            raise ValueError(f"node coordinates ({kp.row}, {kp.col}) exceed u16 range")
        if not (0 <= kp.label_index < 65536):
            raise ValueError(f"label index {kp.label_index} exceeds u16 range")
        parts.append(struct.pack("<HHH", kp.row, kp.col, kp.label_index))
        parts.append(np.ascontiguousarray(kp.descriptor, dtype="<f4").tobytes())
    return b"".join(parts)


def deserialize_nodes(payload: bytes) -> list[Keypoint]:
    r = ByteReader(payload)
    count = r.u32("node count")
    if count == 0:
        r.expect_end()
        return []
    remaining = len(payload) - r.offset
    if remaining % count != 0:
        raise ValueError(
            f"payload of {remaining} node bytes is not divisible by {count} nodes"
        )
    per_node = remaining // count
    if per_node < 6 or (per_node - 6) % 4 != 0:
        raise ValueError(f"invalid node record size {per_node}")
    dim = (per_node - 6) // 4
    nodes = []
    for i in range(count):
        row, col, label = struct.unpack("<HHH", r.take(6, f"node {i} header"))
        desc = r.f32_array(dim, f"node {i} descriptor")
        nodes.append(Keypoint(row=row, col=col, label_index=label, descriptor=desc))
    r.expect_end()
    return nodes
