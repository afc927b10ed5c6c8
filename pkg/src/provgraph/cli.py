"""Command line entry point: ``provgraph <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from provgraph.assets import corpus_files, image_files, load_asset
from provgraph.datagen.cases import CaseSpec, write_suite
from provgraph.datagen.transforms import ALL as ALL_TRANSFORMS
from provgraph.errors import ConfigError, ProvenanceError
from provgraph.filtering import IndexConfig, build_index, load_index, query, save_index
from provgraph.graphbuild import bam_from_json, bam_to_json, cluster_expand_build, kruskal_build, to_dot
from provgraph.heuristics import HeuristicSet, build_vote_matrix
from provgraph.matrices import matrix_to_json, visual_from_json, votes_from_json
from provgraph.pipeline import METHODS, PROTOCOLS, RunConfig, config_from_file, run_suite
from provgraph.scoring import score_case
from provgraph.visual import build_visual_matrix, features_for

log = logging.getLogger("provgraph")


def _order_range(text: str) -> tuple[int, int]:
    try:
        if ".." in text:
            lo, hi = text.split("..", 1)
            return int(lo), int(hi)
        n = int(text)
        return n, n
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected N or LO..HI, got {text!r}") from None


def _menu(text: str) -> frozenset[str]:
    if text.strip().lower() == "all":
        return frozenset(ALL_TRANSFORMS)
    return frozenset(t.strip() for t in text.split(",") if t.strip())


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# --------------------------------------------------------------------------
# subcommands


def cmd_gen(args: argparse.Namespace) -> int:
    spec = CaseSpec(
        graph_order=args.order,
        transform_menu=_menu(args.menu),
        metadata_corruption=args.corruption,
        distractor_count=args.distractors,
        seed=args.seed,
    )
    out = write_suite(args.out, args.cases, spec)
    log.info("stage=gen suite=%s cases=%d", out, args.cases)
    return 0


def cmd_index(args: argparse.Namespace) -> int:
    cfg = IndexConfig(
        coarse=args.coarse, m=args.m, ksub=args.ksub, nprobe=args.nprobe, iterations=args.iterations, seed=args.seed
    )
    assets = [load_asset(p) for p in corpus_files(args.corpus).values()]
    save_index(build_index(assets, cfg), args.out)
    log.info("stage=index images=%d out=%s", len(assets), args.out)
    return 0


def cmd_filter(args: argparse.Namespace) -> int:
    index = load_index(args.index)
    ranked = query(index, load_asset(args.query), args.k, args.stages, args.expansion)
    doc = {"query": ranked.query_id, "entries": [{"id": i, "score": s} for i, s in ranked.entries]}
    _emit(json.dumps(doc, indent=2) + "\n", args.out)
    return 0


def _image_list(paths: Sequence[str]) -> list[Path]:
    files: list[Path] = []
    for p in map(Path, paths):
        files.extend(image_files(p) if p.is_dir() else [p])
    return files


def cmd_matrices(args: argparse.Namespace) -> int:
    assets = [load_asset(p, with_raster=args.visual_out is not None) for p in _image_list(args.images)]
    ids = [a.id for a in assets]
    if args.votes_out is None and args.visual_out is None:
        raise ConfigError("give --votes-out and/or --visual-out")
    if args.votes_out:
        m = build_vote_matrix([a.bundle for a in assets], HeuristicSet.parse(args.heuristics), ids=ids)
        Path(args.votes_out).write_text(matrix_to_json(m) + "\n")
    if args.visual_out:
        d = build_visual_matrix([features_for(a.id, a.raster) for a in assets])
        Path(args.visual_out).write_text(matrix_to_json(d) + "\n")
    return 0


def cmd_build(args: argparse.Namespace) -> int:
    votes = votes_from_json(Path(args.votes).read_text()) if args.votes else None
    visual = visual_from_json(Path(args.visual).read_text()) if args.visual else None
    if args.method == "kruskal_metadata":
        if votes is None:
            raise ConfigError("kruskal_metadata needs --votes")
        graph = kruskal_build(votes)
    else:
        if visual is None or args.query is None:
            raise ConfigError(f"{args.method} needs --visual and --query")
        if args.method == "cluster_fused":
            if votes is None:
                raise ConfigError("cluster_fused needs --votes")
            graph = cluster_expand_build(visual, votes, args.query, args.theta, tie="grow")
        else:
            graph = cluster_expand_build(visual, None, args.query, args.theta, tie="id")
    _emit(bam_to_json(graph) + "\n", args.out)
    if args.dot:
        Path(args.dot).write_text(to_dot(graph))
    return 0


def cmd_score(args: argparse.Namespace) -> int:
    cand = bam_from_json(Path(args.candidate).read_text())
    truth = bam_from_json(Path(args.truth).read_text())
    s = score_case(cand, truth, directed=not args.undirected)
    _emit(json.dumps(s.as_dict(), sort_keys=True) + "\n", args.out)
    return 0


def cmd_run(args: argparse.Namespace) -> int:
    overrides = {
        "suite": args.suite,
        "protocol": args.protocol,
        "method": args.method,
        "heuristics": args.heuristics,
        "k": args.k,
        "stages": args.stages,
        "expansion": args.expansion,
        "theta": args.theta,
        "index": args.index,
        "out": args.out,
        "dot": True if args.dot else None,
        "directed": False if args.undirected else None,
        "seed": args.seed,
    }
    if args.config:
        cfg = config_from_file(args.config, **overrides)
    else:
        cfg = RunConfig.from_dict({}, **overrides)
    if cfg.out is None:
        raise ConfigError("run needs --out (reports are written to files)")
    report = run_suite(cfg)
    log.info(
        "stage=report cases=%d vo=%.6f eo=%.6f veo=%.6f",
        len(report.cases),
        report.mean["vo"],
        report.mean["eo"],
        report.mean["veo"],
    )
    return 0


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="provgraph", description="Image provenance graph toolkit")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic case suite")
    g.add_argument("--out", required=True)
    g.add_argument("--cases", type=int, default=50)
    g.add_argument("--order", type=_order_range, default=(5, 15), help="graph order N or LO..HI")
    g.add_argument("--corruption", type=float, default=0.0)
    g.add_argument("--menu", default="all", help="comma list of transforms or 'all'")
    g.add_argument("--distractors", type=int, default=0)
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=cmd_gen)

    i = sub.add_parser("index", help="build a PVIX retrieval index over a corpus directory")
    i.add_argument("--corpus", required=True)
    i.add_argument("--out", required=True)
    i.add_argument("--coarse", type=int, default=IndexConfig.coarse)
    i.add_argument("--m", type=int, default=IndexConfig.m)
    i.add_argument("--ksub", type=int, default=IndexConfig.ksub)
    i.add_argument("--nprobe", type=int, default=IndexConfig.nprobe)
    i.add_argument("--iterations", type=int, default=IndexConfig.iterations)
    i.add_argument("--seed", type=int, default=0)
    i.set_defaults(func=cmd_index)

    f = sub.add_parser("filter", help="rank the indexed corpus against a query image")
    f.add_argument("--index", required=True)
    f.add_argument("--query", required=True, help="query image file")
    f.add_argument("--k", type=int, default=100)
    f.add_argument("--stages", type=int, default=2)
    f.add_argument("--expansion", type=int, default=5)
    f.add_argument("--out")
    f.set_defaults(func=cmd_filter)

    m = sub.add_parser("matrices", help="compute vote and/or visual matrices for a set of images")
    m.add_argument("images", nargs="+", help="image files or directories")
    m.add_argument("--heuristics", default="all")
    m.add_argument("--votes-out")
    m.add_argument("--visual-out")
    m.set_defaults(func=cmd_matrices)

    b = sub.add_parser("build", help="construct a provenance graph from matrices")
    b.add_argument("--method", choices=METHODS, required=True)
    b.add_argument("--votes")
    b.add_argument("--visual")
    b.add_argument("--query", help="query image id (cluster methods)")
    b.add_argument("--theta", type=int, default=8)
    b.add_argument("--out", help="BAM JSON output (stdout if omitted)")
    b.add_argument("--dot", help="also write DOT to this file")
    b.set_defaults(func=cmd_build)

    s = sub.add_parser("score", help="score a candidate BAM against a truth BAM")
    s.add_argument("--candidate", required=True)
    s.add_argument("--truth", required=True)
    s.add_argument("--undirected", action="store_true")
    s.add_argument("--out")
    s.set_defaults(func=cmd_score)

    r = sub.add_parser("run", help="run a full suite and write reports")
    r.add_argument("--config", help="JSON file with RunConfig fields; flags override it")
    r.add_argument("--suite")
    r.add_argument("--protocol", choices=PROTOCOLS)
    r.add_argument("--method", choices=METHODS)
    r.add_argument("--heuristics", help="'all', 'none' or a comma list")
    r.add_argument("--k", type=int)
    r.add_argument("--stages", type=int)
    r.add_argument("--expansion", type=int)
    r.add_argument("--theta", type=int)
    r.add_argument("--index")
    r.add_argument("--out")
    r.add_argument("--dot", action="store_true", help="write one DOT file per case")
    r.add_argument("--undirected", action="store_true")
    r.add_argument("--seed", type=int)
    r.set_defaults(func=cmd_run)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s %(message)s",
    )
    try:
        return args.func(args)
    except ProvenanceError as exc:
        log.error("error=%s detail=%s", type(exc).__name__, exc)
        return 2
    except (OSError, ValueError) as exc:
        log.error("error=%s detail=%s", type(exc).__name__, exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
