"""Suite runner: candidate selection, matrices, graph building and scoring
for every case directory of a generated suite."""

from __future__ import annotations

import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from provgraph.assets import ImageAsset, corpus_files, load_asset
from provgraph.errors import ConfigError, ProvenanceError
from provgraph.filtering import QuantizedIndex, load_index, query
from provgraph.graphbuild import (
    DEFAULT_THETA,
    ProvenanceGraph,
    bam_from_json,
    cluster_expand_build,
    kruskal_build,
    to_dot,
)
from provgraph.heuristics import HeuristicSet, build_vote_matrix
from provgraph.matrices import VisualMatrix, VoteMatrix
from provgraph.scoring import CaseScore, SuiteReport, aggregate, score_case
from provgraph.visual import DetectorConfig, ImageFeatures, build_visual_matrix, detect

log = logging.getLogger("provgraph")

PROTOCOLS = ("oracle", "end_to_end")
METHODS = ("kruskal_metadata", "cluster_visual", "cluster_fused")


class CaseFailure(ProvenanceError):
    """A module error raised while processing one case."""

    def __init__(self, case_id: str, error: Exception) -> None:
        super().__init__(f"case {case_id}: {type(error).__name__}: {error}")
        self.case_id = case_id
        self.error = error


@dataclass(frozen=True)
class RunConfig:
    suite: Path
    protocol: str = "oracle"
    method: str = "cluster_fused"
    heuristics: HeuristicSet = field(default_factory=HeuristicSet)
    k: int = 100
    stages: int = 2
    expansion: int = 5
    theta: int = DEFAULT_THETA
    index: Optional[Path] = None
    out: Optional[Path] = None
    dot: bool = False
    directed: bool = True
    seed: int = 0

    def validate(self) -> None:
        if self.protocol not in PROTOCOLS:
            raise ConfigError(f"protocol must be one of {PROTOCOLS}, got {self.protocol!r}")
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.method != "cluster_visual" and not self.heuristics.enabled():
            raise ConfigError(f"method {self.method} needs at least one heuristic enabled")
        if self.protocol == "end_to_end" and self.index is None:
            raise ConfigError("end_to_end protocol requires an index")
        if self.k < 1 or self.stages < 1 or self.expansion < 1:
            raise ConfigError("k, stages and expansion must be positive")
        if not Path(self.suite).is_dir():
            raise ConfigError(f"suite directory {self.suite} does not exist")
        if self.index is not None and self.protocol == "end_to_end" and not Path(self.index).is_file():
            raise ConfigError(f"index file {self.index} does not exist")

    def describe(self) -> dict:
        """Settings that determine the scores (no paths, so reports are relocatable)."""
        return {
            "protocol": self.protocol,
            "method": self.method,
            "heuristics": str(self.heuristics) if self.method != "cluster_visual" else "none",
            "k": self.k,
            "stages": self.stages,
            "expansion": self.expansion,
            "theta": self.theta,
            "directed": self.directed,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, doc: dict, **overrides) -> "RunConfig":
        values = dict(doc)
        values.update({k: v for k, v in overrides.items() if v is not None})
        known = set(cls.__dataclass_fields__)
        unknown = set(values) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "suite" not in values:
            raise ConfigError("config needs a suite directory")
        h = values.get("heuristics", "all")
        if not isinstance(h, HeuristicSet):
            values["heuristics"] = HeuristicSet.parse(h if isinstance(h, str) else ",".join(h))
        for key in ("suite", "index", "out"):
            if values.get(key) is not None:
                values[key] = Path(values[key])
        return cls(**values)


def case_dirs(suite: Path) -> list[Path]:
    return sorted(p for p in Path(suite).iterdir() if (p / "truth.bam.json").is_file())


@dataclass
class CaseResult:
    case_id: str
    score: CaseScore
    graph: ProvenanceGraph


class Runner:
    """Holds per-run caches (file locations, loaded assets, keypoints)."""

    def __init__(self, cfg: RunConfig, detector: DetectorConfig = DetectorConfig()) -> None:
        cfg.validate()
        self.cfg = cfg
        self.detector = detector
        self.files = corpus_files(cfg.suite)
        self.index: Optional[QuantizedIndex] = load_index(cfg.index) if cfg.protocol == "end_to_end" else None
        self._assets: dict[str, ImageAsset] = {}

    def asset(self, asset_id: str) -> ImageAsset:
        a = self._assets.get(asset_id)
        if a is None:
            if asset_id not in self.files:
                raise ConfigError(f"image {asset_id!r} not found under {self.cfg.suite}")
            a = load_asset(self.files[asset_id])
            self._assets[asset_id] = a
        return a

    def features(self, asset: ImageAsset) -> ImageFeatures:
        kp = asset.cache.get("keypoints")
        if kp is None:
            kp = detect(asset.raster, self.detector)
            asset.cache["keypoints"] = kp
        return ImageFeatures(asset.id, kp)

    def candidates(self, truth: ProvenanceGraph, query_id: str) -> list[str]:
        if self.cfg.protocol == "oracle":
            return sorted(truth.node_ids)
        ranked = query(self.index, self.asset(query_id), self.cfg.k, self.cfg.stages, self.cfg.expansion)
        return sorted({query_id, *ranked.ids()})

    def matrices(self, ids: list[str]) -> tuple[Optional[VoteMatrix], Optional[VisualMatrix]]:
        assets = [self.asset(i) for i in ids]
        votes = visual = None
        if self.cfg.method != "cluster_visual":
            votes = build_vote_matrix([a.bundle for a in assets], self.cfg.heuristics, ids=ids)
        if self.cfg.method != "kruskal_metadata":
            visual = build_visual_matrix([self.features(a) for a in assets], self.detector)
        return votes, visual

    def build(self, votes: Optional[VoteMatrix], visual: Optional[VisualMatrix], query_id: str) -> ProvenanceGraph:
        if self.cfg.method == "kruskal_metadata":
            return kruskal_build(votes)
        if self.cfg.method == "cluster_visual":
            return cluster_expand_build(visual, None, query_id, self.cfg.theta, tie="id")
        return cluster_expand_build(visual, votes, query_id, self.cfg.theta, tie="grow")

    def run_case(self, directory: Path) -> CaseResult:
        case_id = directory.name
        try:
            t0 = time.perf_counter()
            truth = bam_from_json((directory / "truth.bam.json").read_text())
            query_id = (directory / "query.txt").read_text().strip()
            ids = self.candidates(truth, query_id)
            t1 = time.perf_counter()
            _log(case_id, "filter", t1 - t0, candidates=len(ids))
            votes, visual = self.matrices(ids)
            t2 = time.perf_counter()
            _log(case_id, "matrices", t2 - t1)
            graph = self.build(votes, visual, query_id)
            t3 = time.perf_counter()
            _log(case_id, "build", t3 - t2, edges=len(graph.edges))
            score = score_case(graph, truth, directed=self.cfg.directed)
            _log(case_id, "score", time.perf_counter() - t3, eo=round(score.eo, 6))
        except ProvenanceError as exc:
            raise CaseFailure(case_id, exc) from exc
        return CaseResult(case_id, score, graph)


def _log(case_id: str, stage: str, seconds: float, **extra) -> None:
    fields = " ".join(f"{k}={v}" for k, v in extra.items())
    log.info("case=%s stage=%s duration=%.3f %s", case_id, stage, seconds, fields)


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("PROVGRAPH_THREADS", "1")))
    except ValueError:
        raise ConfigError("PROVGRAPH_THREADS must be an integer") from None


def run_suite(cfg: RunConfig, runner: Optional[Runner] = None) -> SuiteReport:
    """Score every case of the suite and aggregate. Reports are ordered by case id."""
    runner = runner or Runner(cfg)
    dirs = case_dirs(cfg.suite)
    if not dirs:
        raise ConfigError(f"no cases under {cfg.suite}")
    workers = min(worker_count(), len(dirs))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(runner.run_case, dirs))
    else:
        results = [runner.run_case(d) for d in dirs]
    results.sort(key=lambda r: r.case_id)
    report = aggregate([(r.case_id, r.score) for r in results])
    report.config = cfg.describe()
    if cfg.out is not None:
        write_report(report, results, cfg)
    return report


def write_report(report: SuiteReport, results: list[CaseResult], cfg: RunConfig) -> None:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report.to_json())
    (out / "report.txt").write_text(report.to_table(cfg.method))
    if cfg.dot:
        ddir = out / "dot"
        ddir.mkdir(exist_ok=True)
        for r in results:
            (ddir / f"{r.case_id}.dot").write_text(to_dot(r.graph, r.case_id))


def config_from_file(path: str | Path, **overrides) -> RunConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config file must hold a JSON object")
    return RunConfig.from_dict(doc, **overrides)
