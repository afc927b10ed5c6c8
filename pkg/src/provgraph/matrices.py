"""Adjacency matrix containers and their JSON form.

Wire format: ``{"kind": "visual"|"votes", "ids": [...], "data": [[...]]}``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from provgraph.errors import AsymmetryError, NegativeWeight, SchemaError


@dataclass(frozen=True)
class VoteMatrix:
    """Directed metadata votes: ``votes[i, j]`` supports content flowing i -> j."""

    ids: tuple[str, ...]
    votes: np.ndarray

    kind = "votes"

    @property
    def size(self) -> int:
        return len(self.ids)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, VoteMatrix):
            return NotImplemented
        return self.ids == other.ids and np.array_equal(self.votes, other.votes)


@dataclass(frozen=True)
class VisualMatrix:
    """Symmetric counts of geometrically consistent matches per image pair."""

    ids: tuple[str, ...]
    weights: np.ndarray

    kind = "visual"

    @property
    def size(self) -> int:
        return len(self.ids)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, VisualMatrix):
            return NotImplemented
        return self.ids == other.ids and np.array_equal(self.weights, other.weights)


def matrix_to_json(matrix: VoteMatrix | VisualMatrix) -> str:
    data = matrix.votes if isinstance(matrix, VoteMatrix) else matrix.weights
    doc = {"kind": matrix.kind, "ids": list(matrix.ids), "data": data.tolist()}
    return json.dumps(doc, sort_keys=True)


def _square(doc: object, kind: str) -> tuple[tuple[str, ...], np.ndarray]:
    if not isinstance(doc, dict):
        raise SchemaError("matrix document must be an object")
    if doc.get("kind") != kind:
        raise SchemaError(f"expected kind {kind!r}, got {doc.get('kind')!r}")
    rows = doc.get("data")
    if not isinstance(rows, list) or not rows:
        raise SchemaError("data must be a non-empty list of rows")
    n = len(rows)
    if any(not isinstance(r, list) or len(r) != n for r in rows):
        raise SchemaError("data must be square")
    for r in rows:
        for v in r:
            if isinstance(v, bool) or not isinstance(v, (int, float)) or v != int(v):
                raise SchemaError("entries must be integers")
    ids = doc.get("ids")
    if ids is None:
        ids = [str(i) for i in range(n)]
    if not isinstance(ids, list) or len(ids) != n or not all(isinstance(i, str) for i in ids):
        raise SchemaError("ids must list one string per row")
    if len(set(ids)) != n:
        raise SchemaError("ids must be unique")
    return tuple(ids), np.array(rows, dtype=np.int64).reshape(n, n)


def _validate(data: np.ndarray, symmetric: bool) -> None:
    if np.any(np.diag(data) != 0):
        raise SchemaError("diagonal must be zero")
    if np.any(data < 0):
        raise NegativeWeight("weights must be non-negative")
    if symmetric and not np.array_equal(data, data.T):
        raise AsymmetryError("visual matrix must be symmetric")


def visual_from_json(json_text: str) -> VisualMatrix:
    try:
        doc = json.loads(json_text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"unparseable matrix: {exc}") from exc
    ids, data = _square(doc, "visual")
    _validate(data, symmetric=True)
    return VisualMatrix(ids, data)


def votes_from_json(json_text: str) -> VoteMatrix:
    try:
        doc = json.loads(json_text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"unparseable matrix: {exc}") from exc
    ids, data = _square(doc, "votes")
    _validate(data, symmetric=False)
    return VoteMatrix(ids, data)


def default_ids(n: int) -> tuple[str, ...]:
    return tuple(str(i) for i in range(n))


def as_vote_matrix(data: Sequence[Sequence[int]] | np.ndarray, ids: Sequence[str] | None = None) -> VoteMatrix:
    arr = np.asarray(data, dtype=np.int64)
    return VoteMatrix(tuple(ids) if ids is not None else default_ids(len(arr)), arr)


def as_visual_matrix(data: Sequence[Sequence[int]] | np.ndarray, ids: Sequence[str] | None = None) -> VisualMatrix:
    arr = np.asarray(data, dtype=np.int64)
    _validate(arr, symmetric=True)
    return VisualMatrix(tuple(ids) if ids is not None else default_ids(len(arr)), arr)
