import numpy as np
import pytest

from provgraph import _fallback, kernels

compiled = pytest.importorskip("provgraph._kernels")


def test_backend_reports_choice():
    assert kernels.BACKEND in ("compiled", "python")


@pytest.mark.parametrize("seed", range(5))
def test_fast_score_map_identical(seed):
    rng = np.random.default_rng(seed)
    img = rng.integers(0, 256, (int(rng.integers(20, 90)), int(rng.integers(20, 90))), dtype=np.uint8)
    img = np.ascontiguousarray(img)
    for threshold, margin in ((20, 16), (5, 3), (60, 4)):
        a = compiled.fast_score_map(img, threshold, margin)
        b = _fallback.fast_score_map(img, threshold, margin)
        assert a.dtype == b.dtype and np.array_equal(a, b)


def test_fast_score_map_tiny_image():
    img = np.zeros((5, 5), np.uint8)
    assert np.array_equal(compiled.fast_score_map(img, 20, 3), _fallback.fast_score_map(img, 20, 3))


@pytest.mark.parametrize("words", [1, 4])
def test_hamming_identical(words):
    rng = np.random.default_rng(words)
    a = rng.integers(0, 2**63, (37, words), dtype=np.uint64)
    b = rng.integers(0, 2**63, (23, words), dtype=np.uint64)
    x, y = compiled.hamming_matrix(a, b), _fallback.hamming_matrix(a, b)
    assert np.array_equal(x, y)
    ref = [[sum(bin(int(p) ^ int(q)).count("1") for p, q in zip(r, s)) for s in b] for r in a]
    assert y.tolist() == ref


def test_adc_identical():
    rng = np.random.default_rng(3)
    cells, m, ksub, n_images, postings = 9, 4, 16, 12, 300
    codes = rng.integers(0, ksub, (postings, m), dtype=np.uint8)
    owners = rng.integers(0, n_images, postings).astype(np.int32)
    cuts = np.sort(rng.integers(0, postings, cells - 1))
    cell_start = np.concatenate([[0], cuts, [postings]]).astype(np.int64)
    tables = rng.uniform(0, 50, (7, m, ksub))
    probes = rng.integers(0, cells, (7, 3)).astype(np.int32)
    a = compiled.adc_scores(codes, owners, cell_start, tables, probes, n_images)
    b = _fallback.adc_scores(codes, owners, cell_start, tables, probes, n_images)
    assert np.array_equal(a, b)
