import struct

import numpy as np
import pytest

from provgraph.errors import EmptyIndex, InsufficientTrainingData, SchemaError
from provgraph.filtering import (
    IndexConfig,
    QuantizedIndex,
    RankedList,
    build_index,
    load_index,
    query,
    recall,
    save_index,
)


def rand_desc(rng, n):
    return rng.integers(0, 256, (n, 32), dtype=np.uint8)


def near(rng, centre, n, max_flips=3):
    out = np.repeat(centre[None], n, axis=0)
    bits = np.unpackbits(out, axis=1)
    for row in bits:
        flips = rng.choice(256, int(rng.integers(0, max_flips + 1)), replace=False)
        row[flips] ^= 1
    return np.packbits(bits, axis=1)


def hamming(a, b):
    return int(np.unpackbits(a ^ b).sum())


def test_single_image_single_cell():
    rng = np.random.default_rng(0)
    idx = build_index([("only", rand_desc(rng, 50))], IndexConfig(coarse=1, m=1, ksub=4, nprobe=1))
    assert idx.cell_start.tolist() == [0, 50]
    assert idx.codes.shape == (50, 1) and set(idx.owners.tolist()) == {0}


def test_four_separated_clusters():
    rng = np.random.default_rng(1)
    centres = rand_desc(rng, 4)
    members = [near(rng, c, 30) for c in centres]
    corpus = [(f"img{k}", m) for k, m in enumerate(members)]
    idx = build_index(corpus, IndexConfig(coarse=4, m=8, ksub=8, nprobe=1, seed=3))
    # oracle: exhaustive nearest-centre assignment of every descriptor
    truth = {}
    for k, m in enumerate(members):
        for row in m:
            nearest = min(range(4), key=lambda c: hamming(row, centres[c]))
            truth.setdefault(nearest, []).append(k)
    cells = []
    for cell in range(4):
        lo, hi = idx.cell_start[cell], idx.cell_start[cell + 1]
        cells.append(set(idx.owners[lo:hi].tolist()))
    assert sorted(map(sorted, cells)) == [[0], [1], [2], [3]]
    assert sorted(map(sorted, cells)) == sorted(sorted(set(v)) for v in truth.values())
    assert np.diff(idx.cell_start).tolist() == [30, 30, 30, 30]


def test_training_size_checks():
    with pytest.raises(InsufficientTrainingData):
        build_index([])
    rng = np.random.default_rng(2)
    with pytest.raises(InsufficientTrainingData):
        build_index([("a", rand_desc(rng, 100))], IndexConfig(coarse=16, m=8, ksub=16))
    with pytest.raises(ValueError):
        IndexConfig(m=7)


CHAIN_CFG = IndexConfig(coarse=16, m=32, ksub=256, nprobe=4, iterations=4, seed=1)


@pytest.fixture(scope="module")
def chain_corpus():
    """A shares block X with B, B shares block Y with C; C and A share nothing."""
    rng = np.random.default_rng(5)
    x, y = rand_desc(rng, 40), rand_desc(rng, 40)
    a = np.vstack([x, rand_desc(rng, 20)])
    b = np.vstack([x, y])
    c = np.vstack([y, rand_desc(rng, 20)])
    items = [("A", a), ("B", b), ("C", c)] + [(f"d{k:02d}", rand_desc(rng, 60)) for k in range(40)]
    return items, build_index(items, CHAIN_CFG)


def test_self_query_rank_one(chain_corpus):
    items, idx = chain_corpus
    for name, desc in items[:3]:
        r = query(idx, (name + "-copy", desc), k=1)
        assert r.ids() == [name]


def test_transitive_chain(chain_corpus):
    items, idx = chain_corpus
    one = query(idx, items[0], k=2, stages=1)
    two = query(idx, items[0], k=2, stages=2)
    assert one.ids()[0] == "B" and "C" not in one.ids()
    assert set(two.ids()) == {"B", "C"}
    assert recall(one, {"A", "B", "C"}) == 0.5 and recall(two, {"A", "B", "C"}) == 1.0


def test_stage_scores_monotone(chain_corpus):
    items, idx = chain_corpus
    s1 = dict(query(idx, items[0], k=100, stages=1).entries)
    s2 = dict(query(idx, items[0], k=100, stages=2).entries)
    assert s1.keys() == s2.keys() and all(s2[i] >= s1[i] for i in s1)


def test_k_larger_than_corpus(chain_corpus):
    items, idx = chain_corpus
    outside = query(idx, ("external", items[0][1]), k=1000)
    assert len(outside) == len(items)
    inside = query(idx, items[0], k=1000, stages=3)
    assert len(inside) == len(items) - 1 and "A" not in inside.ids()
    scores = [s for _, s in inside.entries]
    assert scores == sorted(scores, reverse=True) and len(set(inside.ids())) == len(inside)


def test_empty_index():
    idx = QuantizedIndex(
        image_ids=(),
        coarse_centroids=np.zeros((1, 256)),
        subquantizers=np.zeros((1, 1, 256)),
        cell_start=np.zeros(2, np.int64),
        owners=np.zeros(0, np.int32),
        codes=np.zeros((0, 1), np.uint8),
        nprobe=1,
    )
    with pytest.raises(EmptyIndex):
        query(idx, ("q", np.zeros((1, 32), np.uint8)), k=5)


def test_recall_excludes_query():
    r = RankedList("q", (("a", 1.0),))
    assert recall(r, {"q", "a", "b"}) == 0.5
    assert recall(r, {"q"}) == 1.0


# --------------------------------------------------------------------------
# PVIX persistence


def test_pvix_round_trip_and_layout(chain_corpus, tmp_path):
    items, idx = chain_corpus
    path = tmp_path / "i.pvix"
    save_index(idx, path)
    data = path.read_bytes()
    assert data[:4] == b"PVIX" and data[4] == 1
    dim, c, m, ksub, nprobe, n_images, n_post = struct.unpack_from("<IIIIIIQ", data, 5)
    assert (dim, c, m, ksub, nprobe, n_images, n_post) == (256, 16, 32, 256, 4, 43, len(idx.owners))
    body = 37 + 8 * (c * dim + m * ksub * (dim // m) + c + 1) + 4 * n_post + m * n_post
    assert len(data) == body + sum(2 + len(name) for name, _ in items)
    back = load_index(path)
    assert back.image_ids == idx.image_ids and back.nprobe == idx.nprobe
    for field in ("coarse_centroids", "subquantizers", "cell_start", "owners", "codes"):
        assert np.array_equal(getattr(back, field), getattr(idx, field))
    assert query(back, items[1], k=5, stages=2) == query(idx, items[1], k=5, stages=2)


def test_build_deterministic(chain_corpus, tmp_path):
    items, idx = chain_corpus
    save_index(idx, tmp_path / "a")
    save_index(build_index(items, CHAIN_CFG), tmp_path / "b")
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()


def test_pvix_corruption(chain_corpus, tmp_path):
    _, idx = chain_corpus
    good = tmp_path / "g.pvix"
    save_index(idx, good)
    data = good.read_bytes()
    n_post = len(idx.owners)
    owners_at = 37 + 8 * (16 * 256 + 32 * 256 * 8 + 17)
    cases = {
        "magic": b"XVIP" + data[4:],
        "version": data[:4] + b"\x02" + data[5:],
        "short header": data[:20],
        "short body": data[:-200],
        "trailing": data + b"\x00",
        "owner": data[:owners_at] + struct.pack("<i", 99) + data[owners_at + 4 :],
        "offsets": data[:owners_at - 8] + struct.pack("<q", n_post + 1) + data[owners_at:],
        "dims": data[:13] + struct.pack("<I", 7) + data[17:],
    }
    for name, blob in cases.items():
        p = tmp_path / f"{name}.pvix"
        p.write_bytes(blob)
        with pytest.raises(SchemaError):
            load_index(p)
