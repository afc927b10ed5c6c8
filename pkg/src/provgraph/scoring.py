"""Vertex/edge overlap scores between a candidate graph and ground truth."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from provgraph.errors import EmptyCollection, EmptyGraph
from provgraph.graphbuild import ProvenanceGraph

METRICS = ("vo", "eo", "veo")


@dataclass(frozen=True)
class CaseScore:
    vo: float
    eo: float
    veo: float

    def as_dict(self) -> dict[str, float]:
        return {"vo": self.vo, "eo": self.eo, "veo": self.veo}


def _f1(common: int, total: int) -> float:
    return 2.0 * common / total


def score_case(candidate: ProvenanceGraph, truth: ProvenanceGraph, directed: bool = True) -> CaseScore:
    """F1 overlap of nodes (VO), edges (EO) and both together (VEO).

    Edges are compared as ordered pairs unless ``directed`` is False. Two
    empty edge sets agree perfectly (EO = 1).
    """
    vc, vt = set(candidate.node_ids), set(truth.node_ids)
    if not vc or not vt:
        raise EmptyGraph("both graphs need at least one node")
    if directed:
        ec, et = set(candidate.edges), set(truth.edges)
    else:
        ec = {frozenset(e) for e in candidate.edges}
        et = {frozenset(e) for e in truth.edges}
    v_common, e_common = len(vc & vt), len(ec & et)
    vo = _f1(v_common, len(vc) + len(vt))
    if not ec and not et:
        eo = 1.0
    elif not ec or not et:
        eo = 0.0
    else:
        eo = _f1(e_common, len(ec) + len(et))
    veo = _f1(v_common + e_common, len(vc) + len(vt) + len(ec) + len(et))
    return CaseScore(vo, eo, veo)


@dataclass
class SuiteReport:
    cases: list[tuple[str, CaseScore]]
    mean: dict[str, float] = field(default_factory=dict)
    std: dict[str, float] = field(default_factory=dict)
    config: dict[str, object] = field(default_factory=dict)

    def to_json(self) -> str:
        doc = {
            "config": self.config,
            "cases": [{"case": cid, **s.as_dict()} for cid, s in self.cases],
            "mean": self.mean,
            "std": self.std,
        }
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"

    def to_table(self, label: str = "") -> str:
        header = f"{'Solution':<24}{'VO':>16}{'EO':>16}{'VEO':>16}"
        cells = "".join(f"{self.mean[k]:>9.3f}±{self.std[k]:.3f}" for k in METRICS)
        return f"{header}\n{label or 'run':<24}{cells}\n"


def aggregate(scores: Sequence[CaseScore] | Iterable[tuple[str, CaseScore]]) -> SuiteReport:
    """Mean and population standard deviation per metric."""
    items = list(scores)
    if not items:
        raise EmptyCollection("no case scores to aggregate")
    if isinstance(items[0], CaseScore):
        items = [(str(i), s) for i, s in enumerate(items)]
    n = len(items)
    mean, std = {}, {}
    for key in METRICS:
        vals = [getattr(s, key) for _, s in items]
        mu = math.fsum(vals) / n
        mean[key] = mu
        std[key] = math.sqrt(math.fsum((v - mu) ** 2 for v in vals) / n)
    return SuiteReport(cases=items, mean=mean, std=std)
