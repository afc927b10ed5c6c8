import hashlib

import numpy as np
import pytest

from provgraph.datagen import transforms as tf
from provgraph.datagen.cases import CaseSpec, generate_case, generate_suite_cases, write_suite
from provgraph.datagen.textures import seed_raster
from provgraph.errors import IncompatibleMenu, RootTooSmall
from provgraph.heuristics import vote_date
from provgraph.metadata import TagBundle, parse_exif


def roots(seed, n=2, size=160):
    rng = np.random.default_rng(seed)
    return [seed_raster(rng, size) for _ in range(n)]


def test_order_two_brightness():
    case = generate_case(CaseSpec(graph_order=(2, 2), transform_menu=frozenset({"brightness"}), seed=3), roots(3, 1))
    root, child = case.truth.node_ids
    assert case.truth.edges == {(root, child)} and case.query_id == child
    assert case.asset(child).bundle.modify_date > case.asset(root).bundle.modify_date
    assert case.history[child]["transform"] == "brightness"


def test_splice_gives_in_degree_two():
    for seed in range(10):
        case = generate_case(CaseSpec(graph_order=(5, 5), seed=seed), roots(seed))
        indeg = {}
        for _, b in case.truth.edges:
            indeg[b] = indeg.get(b, 0) + 1
        assert max(indeg.values()) == 2
        assert len(case.truth.node_ids) == 5


def test_full_corruption_strips_derived():
    case = generate_case(CaseSpec(graph_order=(6, 6), metadata_corruption=1.0, seed=4), roots(4))
    derived = [n for n, h in case.history.items() if h["parents"]]
    assert derived and all(case.asset(n).bundle == TagBundle() for n in derived)
    assert all(case.asset(n).bundle != TagBundle() for n, h in case.history.items() if not h["parents"])


def replay(case, node):
    h = case.history[node]
    parents = [case.asset(p).raster for p in h["parents"]]
    p = h["params"]
    src = parents[0]
    if h["transform"] == "crop":
        return src[p["y"] : p["y"] + p["h"], p["x"] : p["x"] + p["w"]]
    if h["transform"] == "resize":
        return tf.resize_to(src, p["h"], p["w"])
    if h["transform"] == "brightness":
        return np.clip(src.astype(int) + p["offset"], 0, 255)
    if h["transform"] == "blur":
        return tf.box_blur3(src)
    if h["transform"] == "rotate":
        return np.rot90(src, p["quarter_turns"])
    sx, sy, pw, ph = p["src"]
    tx, ty = p["dst"]
    out = src.copy()
    out[ty : ty + ph, tx : tx + pw] = parents[1][sy : sy + ph, sx : sx + pw]
    return out


def test_causal_soundness_and_pixel_lineage():
    for seed in range(15):
        case = generate_case(CaseSpec(seed=seed), roots(seed))
        for parent, child in case.truth.edges:
            a, b = case.asset(parent).bundle, case.asset(child).bundle
            forward, backward = vote_date(a, b)
            assert forward >= backward
            assert b.modify_date > a.modify_date
            assert b.software is not None
        for node, h in case.history.items():
            if h["parents"]:
                assert np.array_equal(replay(case, node), case.asset(node).raster), h["transform"]
            parsed = parse_exif(case.files[node])
            assert parsed == case.asset(node).bundle


def test_metadata_rules_per_transform():
    case = generate_case(CaseSpec(graph_order=(15, 15), seed=9), roots(9))
    for node, h in case.history.items():
        b = case.asset(node).bundle
        if h["transform"] == "splice":
            assert b.processing_software and b.artist and b.gps_latitude is None
        if h["transform"] in ("brightness", "blur"):
            assert b.thumbnail is None
        if h["transform"] in ("crop", "resize", "rotate"):
            assert b.thumbnail is not None


def test_errors():
    with pytest.raises(RootTooSmall):
        generate_case(CaseSpec(transform_menu=frozenset({"crop"})), [np.zeros((100, 200), np.uint8)])
    with pytest.raises(IncompatibleMenu):
        generate_case(CaseSpec(), roots(0, 1))
    with pytest.raises(IncompatibleMenu):
        CaseSpec(transform_menu=frozenset({"splice"}))
    with pytest.raises(IncompatibleMenu):
        CaseSpec(transform_menu=frozenset({"warp"}))
    with pytest.raises(ValueError):
        CaseSpec(graph_order=(1, 3))
    with pytest.raises(ValueError):
        CaseSpec(metadata_corruption=1.5)


def tree_digest(root):
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        if p.is_file():
            h.update(str(p.relative_to(root)).encode() + b"\0" + p.read_bytes())
    return h.hexdigest()


def test_suite_byte_identical(tmp_path):
    spec = CaseSpec(graph_order=(3, 6), metadata_corruption=0.3, distractor_count=3, seed=21)
    a = write_suite(tmp_path / "a", 3, spec)
    b = write_suite(tmp_path / "b", 3, spec)
    assert tree_digest(a) == tree_digest(b)
    assert len(list((a / "distractors").glob("*.tif"))) == 3
    assert sorted(p.name for p in (a / "case000").iterdir() if p.suffix != ".tif") == [
        "query.txt",
        "spec.json",
        "truth.bam.json",
    ]
    other = write_suite(tmp_path / "c", 3, CaseSpec(graph_order=(3, 6), metadata_corruption=0.3, distractor_count=3, seed=22))
    assert tree_digest(other) != tree_digest(a)


def test_distractors_disjoint_from_cases():
    cases, distractors = generate_suite_cases(4, CaseSpec(graph_order=(3, 5), distractor_count=6, seed=2))
    case_nodes = {n for c in cases for n in c.truth.node_ids}
    assert not case_nodes & {d.id for d in distractors}
    assert len(case_nodes) == sum(len(c.truth.node_ids) for c in cases)
