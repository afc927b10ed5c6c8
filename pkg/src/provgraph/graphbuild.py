"""Provenance graph construction from adjacency matrices.

Two builders:

* :func:`kruskal_build` - maximum spanning tree over metadata votes alone.
* :func:`cluster_expand_build` - grows a tree outwards from the query along
  the strongest visual links and orients each new edge by the votes.

Both emit a :class:`ProvenanceGraph`, serializable as a binary adjacency
matrix (BAM) or DOT.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from provgraph.errors import (
    CycleDetected,
    InvalidQueryIndex,
    SchemaError,
    SizeMismatch,
    TooFewImages,
)
from provgraph.matrices import VisualMatrix, VoteMatrix

# Minimum consistent matches for an expansion edge.
DEFAULT_THETA = 8

Edge = tuple[str, str]


def _find_cycle(nodes: Sequence[str], edges: Iterable[Edge]) -> bool:
    indeg = {n: 0 for n in nodes}
    out: dict[str, list[str]] = {n: [] for n in nodes}
    for a, b in edges:
        out[a].append(b)
        indeg[b] += 1
    ready = [n for n in nodes if indeg[n] == 0]
    seen = 0
    while ready:
        n = ready.pop()
        seen += 1
        for m in out[n]:
            indeg[m] -= 1
            if indeg[m] == 0:
                ready.append(m)
    return seen != len(nodes)


@dataclass(frozen=True)
class ProvenanceGraph:
    """Directed acyclic graph over image ids."""

    node_ids: tuple[str, ...]
    edges: frozenset[Edge]

    def __init__(self, node_ids: Iterable[str], edges: Iterable[Edge] = ()) -> None:
        nodes = tuple(node_ids)
        if len(set(nodes)) != len(nodes):
            raise ValueError("duplicate node ids")
        edge_list = [(str(a), str(b)) for a, b in edges]
        members = set(nodes)
        for a, b in edge_list:
            if a == b:
                raise ValueError(f"self loop on {a!r}")
            if a not in members or b not in members:
                raise ValueError(f"edge {a!r}->{b!r} leaves the node set")
        if len(set(edge_list)) != len(edge_list):
            raise ValueError("duplicate edges")
        if _find_cycle(nodes, edge_list):
            raise CycleDetected("provenance graph must be acyclic")
        object.__setattr__(self, "node_ids", nodes)
        object.__setattr__(self, "edges", frozenset(edge_list))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ProvenanceGraph):
            return NotImplemented
        return set(self.node_ids) == set(other.node_ids) and self.edges == other.edges

    def __hash__(self) -> int:
        return hash((frozenset(self.node_ids), self.edges))

    def sorted_edges(self) -> list[Edge]:
        return sorted(self.edges)


# --------------------------------------------------------------------------
# builders


class _DisjointSet:
    def __init__(self, n: int) -> None:
        self.parent = list(range(n))
        self.rank = [0] * n

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.rank[ra] < self.rank[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        if self.rank[ra] == self.rank[rb]:
            self.rank[ra] += 1
        return True


def symmetrized(m: VoteMatrix) -> np.ndarray:
    return np.maximum(m.votes, m.votes.T)


def _orient(votes: Optional[np.ndarray], ids: Sequence[str], i: int, j: int, tie_from: int) -> Edge:
    if votes is not None and votes[i, j] != votes[j, i]:
        return (ids[i], ids[j]) if votes[i, j] > votes[j, i] else (ids[j], ids[i])
    k = j if tie_from == i else i
    return ids[tie_from], ids[k]


def kruskal_build(m: VoteMatrix) -> ProvenanceGraph:
    """Maximum spanning forest of the symmetrized votes, directed by the votes.

    Pair weight is ``max(M[i,j], M[j,i])``. Zero-weight pairs are not edges,
    so images without any shared evidence stay disconnected. Equal weights
    are taken in order of the (smaller id, larger id) pair; equal votes
    orient from the smaller id.
    """
    n = m.size
    if n < 2:
        raise TooFewImages(f"need at least 2 images, got {n}")
    ids = m.ids
    w = symmetrized(m)
    candidates = []
    for i in range(n):
        for j in range(i + 1, n):
            if w[i, j] > 0:
                a, b = (i, j) if ids[i] < ids[j] else (j, i)
                candidates.append((-int(w[i, j]), ids[a], ids[b], a, b))
    candidates.sort()
    forest = _DisjointSet(n)
    edges = []
    for _, _, _, a, b in candidates:
        if forest.union(a, b):
            edges.append(_orient(m.votes, ids, a, b, tie_from=a))
            if len(edges) == n - 1:
                break
    return ProvenanceGraph(ids, edges)


def _resolve_query(query: int | str, ids: Sequence[str]) -> int:
    if isinstance(query, str):
        if query in ids:
            return list(ids).index(query)
        raise InvalidQueryIndex(f"unknown query id {query!r}")
    q = int(query)
    if not 0 <= q < len(ids):
        raise InvalidQueryIndex(f"query index {q} outside 0..{len(ids) - 1}")
    return q


def cluster_expand_build(
    d: VisualMatrix,
    m: Optional[VoteMatrix],
    query_index: int | str,
    theta: int = DEFAULT_THETA,
    tie: str = "grow",
) -> ProvenanceGraph:
    """Grow a provenance tree from the query along the strongest visual links.

    At each step the heaviest visual edge ``u-v`` with ``u`` already in the
    graph, ``v`` outside it and ``d[u][v] >= theta`` is added (equal weights:
    smallest ``(id_u, id_v)`` first). Its direction comes from the votes;
    when they tie, or ``m`` is None, ``tie="grow"`` points ``u -> v`` and
    ``tie="id"`` points from the smaller id. Unreachable images are left out.
    """
    if tie not in ("grow", "id"):
        raise ValueError(f"unknown tie policy {tie!r}")
    n = d.size
    if m is not None and (m.size != n or m.ids != d.ids):
        raise SizeMismatch("visual and vote matrices must cover the same ids")
    ids = d.ids
    q = _resolve_query(query_index, ids)
    weights = d.weights
    votes = m.votes if m is not None else None

    in_graph = np.zeros(n, dtype=bool)
    in_graph[q] = True
    best = np.where(np.arange(n) == q, -1, weights[q]).astype(np.int64)
    best_from = np.full(n, q)
    order = [q]
    edges = []
    while True:
        cand = [v for v in range(n) if not in_graph[v] and best[v] >= theta]
        if not cand:
            break
        top = max(best[v] for v in cand)
        v = min((v for v in cand if best[v] == top), key=lambda v: (ids[best_from[v]], ids[v]))
        u = int(best_from[v])
        if tie == "grow":
            edges.append(_orient(votes, ids, u, v, tie_from=u))
        else:
            lo = u if ids[u] < ids[v] else v
            edges.append(_orient(votes, ids, u, v, tie_from=lo))
        in_graph[v] = True
        order.append(v)
        for x in range(n):
            if in_graph[x]:
                continue
            wx = weights[v, x]
            if wx > best[x] or (wx == best[x] and ids[v] < ids[best_from[x]]):
                best[x] = wx
                best_from[x] = v
    nodes = [ids[i] for i in sorted(order)]
    return ProvenanceGraph(nodes, edges)


# --------------------------------------------------------------------------
# serialization


@dataclass(frozen=True)
class BinaryAdjacency:
    ids: tuple[str, ...]
    bits: np.ndarray

    @property
    def size(self) -> int:
        return len(self.ids)


def to_bam(g: ProvenanceGraph, ids: Optional[Sequence[str]] = None) -> BinaryAdjacency:
    order = tuple(ids) if ids is not None else g.node_ids
    if set(order) != set(g.node_ids) or len(order) != len(g.node_ids):
        raise SizeMismatch("ids must list exactly the graph's nodes")
    pos = {k: i for i, k in enumerate(order)}
    bits = np.zeros((len(order), len(order)), dtype=bool)
    for a, b in g.edges:
        bits[pos[a], pos[b]] = True
    return BinaryAdjacency(order, bits)


def from_bam(b: BinaryAdjacency | np.ndarray, ids: Optional[Sequence[str]] = None) -> ProvenanceGraph:
    if isinstance(b, BinaryAdjacency):
        bits, order = b.bits, b.ids if ids is None else tuple(ids)
    else:
        bits = np.asarray(b, dtype=bool)
        order = tuple(ids) if ids is not None else tuple(str(i) for i in range(len(bits)))
    if bits.ndim != 2 or bits.shape[0] != bits.shape[1] or bits.shape[0] != len(order):
        raise SizeMismatch("BAM must be square and match the id list")
    if np.any(np.diag(bits)):
        raise CycleDetected("self loop in BAM")
    rows, cols = np.nonzero(bits)
    edges = [(order[i], order[j]) for i, j in zip(rows.tolist(), cols.tolist())]
    return ProvenanceGraph(order, edges)


def bam_to_json(g: ProvenanceGraph) -> str:
    bam = to_bam(g)
    return json.dumps({"ids": list(bam.ids), "bam": bam.bits.astype(int).tolist()}, sort_keys=True)


def bam_from_json(json_text: str) -> ProvenanceGraph:
    try:
        doc = json.loads(json_text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"unparseable BAM: {exc}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("ids"), list) or not isinstance(doc.get("bam"), list):
        raise SchemaError("BAM document needs 'ids' and 'bam'")
    rows = doc["bam"]
    n = len(doc["ids"])
    if len(rows) != n or any(not isinstance(r, list) or len(r) != n for r in rows):
        raise SchemaError("BAM must be square and match the id list")
    if any(v not in (0, 1) or isinstance(v, float) for r in rows for v in r):
        raise SchemaError("BAM entries must be 0 or 1")
    ids = [str(i) for i in doc["ids"]]
    return from_bam(np.array(rows, dtype=bool).reshape(n, n), ids)


def _dot_id(name: str) -> str:
    return '"' + name.replace("\\", "\\\\").replace('"', '\\"') + '"'


def to_dot(g: ProvenanceGraph, name: str = "") -> str:
    """DOT digraph with nodes in sorted id order and edges sorted."""
    if not g.node_ids:
        return "digraph {}\n"
    head = f"digraph {_dot_id(name)} {{" if name else "digraph {"
    lines = [head]
    lines += [f"  {_dot_id(n)};" for n in sorted(g.node_ids)]
    lines += [f"  {_dot_id(a)} -> {_dot_id(b)};" for a, b in g.sorted_edges()]
    lines.append("}")
    return "\n".join(lines) + "\n"
