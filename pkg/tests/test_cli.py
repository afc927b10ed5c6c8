import json

import numpy as np
import pytest

from provgraph.assets import image_files, load_asset
from provgraph.cli import main
from provgraph.graphbuild import bam_from_json, kruskal_build
from provgraph.heuristics import HeuristicSet, build_vote_matrix
from provgraph.scoring import score_case


@pytest.fixture(scope="module")
def suite(tmp_path_factory):
    root = tmp_path_factory.mktemp("suite")
    assert main(["gen", "--out", str(root / "s"), "--cases", "3", "--order", "4..6",
                 "--corruption", "0.2", "--distractors", "8", "--seed", "5"]) == 0  # fmt: skip
    assert main(["index", "--corpus", str(root / "s"), "--out", str(root / "i.pvix"),
                 "--coarse", "16", "--m", "32", "--iterations", "3"]) == 0  # fmt: skip
    return root


def run(suite, out, *extra):
    return main(["run", "--suite", str(suite / "s"), "--out", str(out), *extra])


def report(out):
    return json.loads((out / "report.json").read_text())


def test_gen_layout(suite):
    s = suite / "s"
    assert json.loads((s / "suite.json").read_text())["cases"] == ["case000", "case001", "case002"]
    for case in ("case000", "case001", "case002"):
        truth = bam_from_json((s / case / "truth.bam.json").read_text())
        assert (s / case / "query.txt").read_text().strip() in truth.node_ids
        assert len(image_files(s / case)) == len(truth.node_ids)


def test_oracle_run_writes_reports(suite, tmp_path):
    assert run(suite, tmp_path, "--method", "kruskal_metadata", "--dot") == 0
    doc = report(tmp_path)
    assert [c["case"] for c in doc["cases"]] == ["case000", "case001", "case002"]
    assert all(c["vo"] == 1.0 for c in doc["cases"])
    assert doc["config"]["method"] == "kruskal_metadata"
    assert (tmp_path / "report.txt").read_text().startswith("Solution")
    assert sorted(p.name for p in (tmp_path / "dot").iterdir()) == ["case000.dot", "case001.dot", "case002.dot"]


def test_fused_without_heuristics_is_config_error(suite, tmp_path):
    assert run(suite, tmp_path, "--method", "cluster_fused", "--heuristics", "none") == 2
    assert not (tmp_path / "report.json").exists()


def test_bad_inputs_exit_nonzero(suite, tmp_path):
    assert main(["run", "--suite", str(tmp_path / "missing"), "--out", str(tmp_path)]) == 2
    assert run(suite, tmp_path, "--protocol", "end_to_end") == 2
    assert main(["score", "--candidate", str(tmp_path / "nope.json"), "--truth", str(tmp_path / "nope.json")]) == 1


def test_end_to_end_k1(suite, tmp_path):
    assert run(suite, tmp_path, "--protocol", "end_to_end", "--index", str(suite / "i.pvix"), "--k", "1") == 0
    for c in report(tmp_path)["cases"]:
        truth = bam_from_json((suite / "s" / c["case"] / "truth.bam.json").read_text())
        if len(truth.node_ids) > 2:
            assert c["vo"] < 1.0


def test_ablation_consistency(suite, tmp_path):
    assert run(suite, tmp_path, "--method", "kruskal_metadata", "--heuristics", "date") == 0
    got = {c["case"]: (c["vo"], c["eo"], c["veo"]) for c in report(tmp_path)["cases"]}
    for case, scores in got.items():
        d = suite / "s" / case
        truth = bam_from_json((d / "truth.bam.json").read_text())
        assets = {a.id: a for a in map(lambda p: load_asset(p, with_raster=False), image_files(d))}
        ids = sorted(truth.node_ids)
        m = build_vote_matrix([assets[i].bundle for i in ids], HeuristicSet.only("date"), ids=ids)
        s = score_case(kruskal_build(m), truth)
        assert scores == (s.vo, s.eo, s.veo)


def test_run_deterministic_and_thread_independent(suite, tmp_path, monkeypatch):
    assert run(suite, tmp_path / "a", "--method", "cluster_fused", "--dot") == 0
    monkeypatch.setenv("PROVGRAPH_THREADS", "3")
    assert run(suite, tmp_path / "b", "--method", "cluster_fused", "--dot") == 0
    for name in ("report.json", "report.txt", "dot/case001.dot"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_config_file_with_override(suite, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"suite": str(suite / "s"), "method": "cluster_visual", "theta": 4}))
    assert main(["run", "--config", str(cfg), "--theta", "9", "--out", str(tmp_path / "o")]) == 0
    assert report(tmp_path / "o")["config"]["theta"] == 9
    cfg.write_text(json.dumps({"suite": str(suite / "s"), "colour": 1}))
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2


def test_module_subcommands_chain(suite, tmp_path):
    d = suite / "s" / "case001"
    query = (d / "query.txt").read_text().strip()
    votes, visual = tmp_path / "votes.json", tmp_path / "visual.json"
    assert main(["matrices", str(d), "--votes-out", str(votes), "--visual-out", str(visual)]) == 0
    v = json.loads(visual.read_text())
    assert v["kind"] == "visual" and np.array_equal(np.array(v["data"]), np.array(v["data"]).T)
    cand, dot = tmp_path / "cand.json", tmp_path / "g.dot"
    assert main(["build", "--method", "cluster_fused", "--votes", str(votes), "--visual", str(visual),
                 "--query", query, "--out", str(cand), "--dot", str(dot)]) == 0  # fmt: skip
    assert dot.read_text().startswith("digraph")
    assert main(["build", "--method", "cluster_fused", "--visual", str(visual), "--query", query]) == 2
    scored = tmp_path / "score.json"
    assert main(["score", "--candidate", str(cand), "--truth", str(d / "truth.bam.json"), "--out", str(scored)]) == 0
    assert set(json.loads(scored.read_text())) == {"vo", "eo", "veo"}


def test_filter_subcommand(suite, tmp_path):
    d = suite / "s" / "case000"
    qfile = next(p for p in image_files(d) if p.stem == (d / "query.txt").read_text().strip())
    out = tmp_path / "ranked.json"
    assert main(["filter", "--index", str(suite / "i.pvix"), "--query", str(qfile), "--k", "5", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["query"] == qfile.stem and len(doc["entries"]) == 5
    assert qfile.stem not in [e["id"] for e in doc["entries"]]
