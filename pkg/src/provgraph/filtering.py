"""Candidate retrieval: an inverted-file index with product-quantized codes.

Each 256-bit descriptor is treated as a 256-d vector of +1/-1 values, so
squared distances are four times the Hamming distance. A coarse
k-means quantizer assigns it to a cell; a product quantizer splits it into
``m`` sub-blocks and stores the nearest sub-centroid index of each as one
byte. A query descriptor probes its nearest coarse cells and scores every
posting there by ``1 / (1 + d)``, where ``d`` is the asymmetric distance
between the raw query vector and the posting's quantized reconstruction.
Image scores are the sums of their postings' contributions.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from provgraph.assets import ImageAsset
from provgraph.errors import EmptyIndex, InsufficientTrainingData, SchemaError
from provgraph.kernels import adc_scores
from provgraph.visual import DetectorConfig, detect

log = logging.getLogger(__name__)

DIM = 256
MAGIC = b"PVIX"
VERSION = 1
_HEADER = struct.Struct("<4sBIIIIIIQ")  # magic, version, dim, C, m, ksub, nprobe, n_images, n_postings


@dataclass(frozen=True)
class IndexConfig:
    coarse: int = 256
    m: int = 8
    ksub: int = 256
    nprobe: int = 4
    iterations: int = 12
    train_cap: int = 60000
    seed: int = 0

    def __post_init__(self) -> None:
        if self.coarse < 1 or self.ksub < 1 or self.ksub > 256:
            raise ValueError("need coarse >= 1 and 1 <= ksub <= 256")
        if self.m < 1 or DIM % self.m:
            raise ValueError(f"m must divide {DIM}")
        if self.nprobe < 1 or self.iterations < 1:
            raise ValueError("nprobe and iterations must be positive")


@dataclass(frozen=True)
class QuantizedIndex:
    image_ids: tuple[str, ...]
    coarse_centroids: np.ndarray  # (C, DIM) float64
    subquantizers: np.ndarray  # (m, ksub, DIM // m) float64
    cell_start: np.ndarray  # (C + 1,) int64, postings of cell c are [start[c], start[c+1])
    owners: np.ndarray  # (P,) int32 index into image_ids
    codes: np.ndarray  # (P, m) uint8
    nprobe: int = 4

    @property
    def m(self) -> int:
        return self.subquantizers.shape[0]

    @property
    def ksub(self) -> int:
        return self.subquantizers.shape[1]

    @property
    def cells(self) -> int:
        return self.coarse_centroids.shape[0]

    def postings(self, cell: int) -> list[tuple[str, bytes]]:
        lo, hi = int(self.cell_start[cell]), int(self.cell_start[cell + 1])
        return [(self.image_ids[self.owners[p]], self.codes[p].tobytes()) for p in range(lo, hi)]

    def reconstruct(self, image_index: int) -> np.ndarray:
        """Quantized stand-ins for one indexed image's descriptors."""
        rows = np.flatnonzero(self.owners == image_index)
        parts = [self.subquantizers[j][self.codes[rows, j]] for j in range(self.m)]
        return np.concatenate(parts, axis=1) if len(rows) else np.zeros((0, DIM))


@dataclass(frozen=True)
class RankedList:
    query_id: str
    entries: tuple[tuple[str, float], ...]

    def ids(self) -> list[str]:
        return [i for i, _ in self.entries]

    def __len__(self) -> int:
        return len(self.entries)


# --------------------------------------------------------------------------
# k-means


def unpack_bits(descriptors: np.ndarray) -> np.ndarray:
    """(K, 32) packed descriptors -> (K, 256) float64 of 0/1, bit 0 first."""
    d = np.ascontiguousarray(descriptors, dtype=np.uint8).reshape(-1, DIM // 8)
    return np.unpackbits(d, axis=1, bitorder="little").astype(np.float64)


def signs(descriptors: np.ndarray) -> np.ndarray:
    """(K, 32) packed descriptors -> (K, 256) float64 of +1/-1."""
    return unpack_bits(descriptors) * 2.0 - 1.0


def _sq_dists(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    d = (x * x).sum(axis=1)[:, None] - 2.0 * (x @ c.T) + (c * c).sum(axis=1)[None, :]
    return np.maximum(d, 0.0)


def assign(x: np.ndarray, centroids: np.ndarray, chunk: int = 8192) -> np.ndarray:
    """Nearest centroid per row (lowest index on ties)."""
    out = np.empty(len(x), dtype=np.int64)
    for s in range(0, len(x), chunk):
        out[s : s + chunk] = np.argmin(_sq_dists(x[s : s + chunk], centroids), axis=1)
    return out


def kmeans(x: np.ndarray, k: int, iterations: int, rng: np.random.Generator) -> np.ndarray:
    """Lloyd iterations from a k-means++ start. Empty clusters keep their centroid."""
    n = len(x)
    xx = (x * x).sum(axis=1)
    centroids = np.empty((k, x.shape[1]))

    def dist_to(row: np.ndarray) -> np.ndarray:
        return np.maximum(xx - 2.0 * (x @ row) + row @ row, 0.0)

    centroids[0] = x[int(rng.integers(n))]
    closest = dist_to(centroids[0])
    for c in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            idx = int(rng.integers(n))
        else:
            idx = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        centroids[c] = x[idx]
        np.minimum(closest, dist_to(centroids[c]), out=closest)
    for _ in range(iterations):
        labels = assign(x, centroids)
        counts = np.bincount(labels, minlength=k)
        sums = np.zeros_like(centroids)
        np.add.at(sums, labels, x)
        filled = counts > 0
        centroids[filled] = sums[filled] / counts[filled, None]
    return centroids


# --------------------------------------------------------------------------
# build


CorpusItem = Union[ImageAsset, tuple[str, np.ndarray]]


def asset_descriptors(asset: ImageAsset, cfg: DetectorConfig = DetectorConfig()) -> np.ndarray:
    """Packed descriptors of an asset, computed once and cached on it."""
    feats = asset.cache.get("keypoints")
    if feats is None:
        feats = detect(asset.raster, cfg)
        asset.cache["keypoints"] = feats
    return feats.descriptors


def _corpus_arrays(corpus: Iterable[CorpusItem]) -> tuple[list[str], list[np.ndarray]]:
    ids, descs = [], []
    for item in corpus:
        if isinstance(item, ImageAsset):
            ids.append(item.id)
            descs.append(asset_descriptors(item))
        else:
            asset_id, d = item
            ids.append(str(asset_id))
            descs.append(np.asarray(d, dtype=np.uint8).reshape(-1, DIM // 8))
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate image ids in corpus")
    return ids, descs


def build_index(corpus: Iterable[CorpusItem], cfg: IndexConfig = IndexConfig()) -> QuantizedIndex:
    """Train the coarse and product quantizers on the corpus and post every descriptor."""
    ids, descs = _corpus_arrays(corpus)
    counts = np.array([len(d) for d in descs], dtype=np.int64)
    total = int(counts.sum())
    need = 10 * max(cfg.coarse, cfg.ksub)
    if total < need:
        raise InsufficientTrainingData(
            f"{total} descriptors cannot train {cfg.coarse} coarse / {cfg.ksub} sub centroids (need {need})"
        )
    x = signs(np.concatenate(descs))
    owners = np.repeat(np.arange(len(ids), dtype=np.int32), counts)
    rng = np.random.default_rng(cfg.seed)
    cap = max(cfg.train_cap, need)
    train = x if total <= cap else x[np.sort(rng.choice(total, cap, replace=False))]

    coarse = kmeans(train, cfg.coarse, cfg.iterations, rng)
    sub_dim = DIM // cfg.m
    subq = np.stack(
        [kmeans(train[:, j * sub_dim : (j + 1) * sub_dim], cfg.ksub, cfg.iterations, rng) for j in range(cfg.m)]
    )

    cells = assign(x, coarse)
    codes = np.stack([assign(x[:, j * sub_dim : (j + 1) * sub_dim], subq[j]) for j in range(cfg.m)], axis=1)
    order = np.argsort(cells, kind="stable")
    cell_start = np.zeros(cfg.coarse + 1, dtype=np.int64)
    cell_start[1:] = np.cumsum(np.bincount(cells, minlength=cfg.coarse))
    log.info("stage=index images=%d descriptors=%d cells=%d", len(ids), total, cfg.coarse)
    return QuantizedIndex(
        image_ids=tuple(ids),
        coarse_centroids=coarse,
        subquantizers=subq,
        cell_start=cell_start,
        owners=np.ascontiguousarray(owners[order]),
        codes=np.ascontiguousarray(codes[order].astype(np.uint8)),
        nprobe=min(cfg.nprobe, cfg.coarse),
    )


# --------------------------------------------------------------------------
# query


def score_vectors(index: QuantizedIndex, x: np.ndarray) -> np.ndarray:
    """Per-image sum of 1 / (1 + d) for query vectors ``x`` (sign vectors or reconstructions)."""
    n = len(index.image_ids)
    if len(x) == 0:
        return np.zeros(n)
    nprobe = min(index.nprobe, index.cells)
    probes = np.argsort(_sq_dists(x, index.coarse_centroids), axis=1, kind="stable")[:, :nprobe]
    sub_dim = DIM // index.m
    tables = np.stack(
        [_sq_dists(x[:, j * sub_dim : (j + 1) * sub_dim], index.subquantizers[j]) for j in range(index.m)], axis=1
    )
    return adc_scores(
        index.codes,
        index.owners,
        index.cell_start,
        np.ascontiguousarray(tables),
        np.ascontiguousarray(probes.astype(np.int32)),
        n,
    )


def _rank(scores: np.ndarray, ids: Sequence[str], skip: set[int]) -> list[int]:
    keep = [i for i in range(len(ids)) if i not in skip]
    return sorted(keep, key=lambda i: (-scores[i], ids[i]))


def query(
    index: QuantizedIndex,
    query_asset: CorpusItem,
    k: int,
    stages: int = 1,
    expansion: int = 5,
) -> RankedList:
    """Top-``k`` corpus images for the query after ``stages`` rounds of expansion.

    Round one scores the corpus against the query descriptors. Each further
    round re-queries with the ``expansion`` best results not yet used as
    queries, using their quantized descriptors from the index, and keeps the
    maximum score seen for every image. An image never scores itself.
    """
    if k < 1 or stages < 1 or expansion < 1:
        raise ValueError("k, stages and expansion must be positive")
    if len(index.image_ids) == 0 or len(index.owners) == 0:
        raise EmptyIndex("index holds no postings")
    if isinstance(query_asset, ImageAsset):
        qid, qdesc = query_asset.id, asset_descriptors(query_asset)
    else:
        qid, qdesc = str(query_asset[0]), np.asarray(query_asset[1], dtype=np.uint8)
    ids = index.image_ids
    pos = {name: i for i, name in enumerate(ids)}
    skip = {pos[qid]} if qid in pos else set()

    scores = score_vectors(index, signs(qdesc))
    used = set(skip)
    for stage in range(2, stages + 1):
        ranked = _rank(scores, ids, used)
        seeds = ranked[:expansion]
        if not seeds:
            break
        for s in seeds:
            extra = score_vectors(index, index.reconstruct(s))
            extra[s] = 0.0
            scores = np.maximum(scores, extra)
            used.add(s)
        log.debug("stage=filter query=%s round=%d seeds=%d", qid, stage, len(seeds))
    ranked = _rank(scores, ids, skip)[:k]
    return RankedList(qid, tuple((ids[i], float(scores[i])) for i in ranked))


# --------------------------------------------------------------------------
# persistence


def save_index(index: QuantizedIndex, path: str | Path) -> None:
    """Write the index as a single little-endian PVIX file."""
    c, dim = index.coarse_centroids.shape
    m, ksub, _ = index.subquantizers.shape
    parts = [
        _HEADER.pack(MAGIC, VERSION, dim, c, m, ksub, index.nprobe, len(index.image_ids), len(index.owners)),
        np.ascontiguousarray(index.coarse_centroids, dtype="<f8").tobytes(),
        np.ascontiguousarray(index.subquantizers, dtype="<f8").tobytes(),
        np.ascontiguousarray(index.cell_start, dtype="<i8").tobytes(),
        np.ascontiguousarray(index.owners, dtype="<i4").tobytes(),
        np.ascontiguousarray(index.codes, dtype=np.uint8).tobytes(),
    ]
    for name in index.image_ids:
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw)
    Path(path).write_bytes(b"".join(parts))


def load_index(path: str | Path) -> QuantizedIndex:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise SchemaError("truncated PVIX header")
    magic, version, dim, c, m, ksub, nprobe, n_images, n_post = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise SchemaError("not a PVIX file")
    if version != VERSION:
        raise SchemaError(f"unsupported PVIX version {version}")
    if dim != DIM or m == 0 or dim % m:
        raise SchemaError("inconsistent PVIX dimensions")
    at = _HEADER.size

    def take(dtype: str, count: int, shape: tuple) -> np.ndarray:
        nonlocal at
        size = np.dtype(dtype).itemsize * count
        if at + size > len(data):
            raise SchemaError("truncated PVIX body")
        arr = np.frombuffer(data, dtype=dtype, count=count, offset=at).reshape(shape)
        at += size
        return arr.astype(np.dtype(dtype).newbyteorder("="))

    coarse = take("<f8", c * dim, (c, dim))
    subq = take("<f8", m * ksub * (dim // m), (m, ksub, dim // m))
    cell_start = take("<i8", c + 1, (c + 1,))
    owners = take("<i4", n_post, (n_post,))
    codes = take("u1", n_post * m, (n_post, m))
    names = []
    for _ in range(n_images):
        if at + 2 > len(data):
            raise SchemaError("truncated PVIX id table")
        (length,) = struct.unpack_from("<H", data, at)
        at += 2
        names.append(data[at : at + length].decode("utf-8"))
        at += length
    if at != len(data):
        raise SchemaError("trailing bytes after PVIX id table")
    if cell_start[0] != 0 or cell_start[-1] != n_post or np.any(np.diff(cell_start) < 0):
        raise SchemaError("PVIX cell offsets are inconsistent")
    if n_post and (owners.min() < 0 or owners.max() >= n_images):
        raise SchemaError("PVIX posting owner out of range")
    return QuantizedIndex(tuple(names), coarse, subq, cell_start, owners, codes, nprobe)


def recall(ranked: RankedList, relevant: Iterable[str]) -> float:
    """Fraction of ``relevant`` ids (query excluded) present in ``ranked``."""
    rel = set(relevant) - {ranked.query_id}
    if not rel:
        return 1.0
    return len(rel & set(ranked.ids())) / len(rel)
