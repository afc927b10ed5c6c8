"""Content-based adjacency: corners, binary descriptors, matching, geometry.

The built-in stack is a segment-test corner detector (16-pixel circle,
9-pixel arc) with a 256-bit steered intensity-comparison descriptor on a
5x5 box-smoothed patch, matched under Hamming distance and verified with a
seeded affine consensus fit. Matrices from other feature pipelines can be
loaded with :func:`ingest_matrix` instead.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

import numpy as np

from provgraph import kernels
from provgraph.errors import EmptyKeypoints, ImageTooSmall, TooFewImages
from provgraph.matrices import VisualMatrix, visual_from_json
from provgraph.raster import to_gray

logger = logging.getLogger(__name__)

MIN_SIDE = 32
DESCRIPTOR_BITS = 256
PATCH_RADIUS = 15  # orientation disk
PATTERN_RADIUS = 13  # test points, before steering
BORDER = 16  # keypoints keep this far from the image edge
ANGLE_BINS = 32  # 90 degrees is exactly 8 bins
PATTERN_SEED = 0x5EED_B1F5


@dataclass(frozen=True)
class DetectorConfig:
    max_keypoints: int = 500
    corner_threshold: int = 20
    match_ratio: float = 0.8
    ransac_iterations: int = 1000
    inlier_px: float = 3.0

    def __post_init__(self) -> None:
        if self.max_keypoints < 4:
            raise ValueError("max_keypoints must be at least 4")
        if self.corner_threshold <= 0 or self.ransac_iterations <= 0 or self.inlier_px <= 0:
            raise ValueError("thresholds must be positive")
        if not 0 < self.match_ratio <= 1:
            raise ValueError("match_ratio must lie in (0, 1]")


@dataclass(frozen=True)
class Keypoint:
    x: int
    y: int
    response: int
    descriptor: bytes


@dataclass(frozen=True)
class KeypointSet:
    """Keypoints of one image as parallel arrays, strongest first."""

    xy: np.ndarray  # (K, 2) int, columns x, y
    response: np.ndarray  # (K,) int
    descriptors: np.ndarray  # (K, 32) uint8

    def __len__(self) -> int:
        return len(self.response)

    def __getitem__(self, i: int) -> Keypoint:
        return Keypoint(
            int(self.xy[i, 0]), int(self.xy[i, 1]), int(self.response[i]), self.descriptors[i].tobytes()
        )

    def __iter__(self) -> Iterator[Keypoint]:
        return (self[i] for i in range(len(self)))

    @property
    def packed(self) -> np.ndarray:
        return np.ascontiguousarray(self.descriptors).view(np.uint64)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, KeypointSet):
            return NotImplemented
        return (
            np.array_equal(self.xy, other.xy)
            and np.array_equal(self.response, other.response)
            and np.array_equal(self.descriptors, other.descriptors)
        )


def _make_pattern() -> np.ndarray:
    """Test-point pairs for each orientation bin: (bins, 256, 4) as dx1, dy1, dx2, dy2."""
    rng = np.random.default_rng(PATTERN_SEED)
    pts = []
    while len(pts) < 2 * DESCRIPTOR_BITS:
        p = rng.normal(0.0, PATTERN_RADIUS / 2.0, size=2)
        if p @ p <= PATTERN_RADIUS**2:
            pts.append(p)
    base = np.array(pts).reshape(DESCRIPTOR_BITS, 2, 2)
    out = np.empty((ANGLE_BINS, DESCRIPTOR_BITS, 4), dtype=np.int64)
    for b in range(ANGLE_BINS):
        t = 2 * np.pi * b / ANGLE_BINS
        c, s = np.cos(t), np.sin(t)
        x = base[..., 0] * c - base[..., 1] * s
        y = base[..., 0] * s + base[..., 1] * c
        rx, ry = np.rint(x).astype(np.int64), np.rint(y).astype(np.int64)
        out[b] = np.stack([rx[:, 0], ry[:, 0], rx[:, 1], ry[:, 1]], axis=1)
    return out


PATTERN = _make_pattern()
_dy, _dx = np.mgrid[-PATCH_RADIUS : PATCH_RADIUS + 1, -PATCH_RADIUS : PATCH_RADIUS + 1]
_disk = _dx**2 + _dy**2 <= PATCH_RADIUS**2
DISK_DX, DISK_DY = _dx[_disk].astype(np.int64), _dy[_disk].astype(np.int64)


def box_smooth(gray: np.ndarray, radius: int = 2) -> np.ndarray:
    """Sum over a (2r+1)^2 window with edge replication (integer, unnormalized)."""
    pad = np.pad(gray.astype(np.int32), radius + 1, mode="edge")
    ii = pad.cumsum(0).cumsum(1)
    k = 2 * radius + 1
    h, w = gray.shape
    a = ii[k : k + h, k : k + w]
    b = ii[0:h, k : k + w]
    c = ii[k : k + h, 0:w]
    d = ii[0:h, 0:w]
    return a - b - c + d


def suppress_nonmax(score: np.ndarray) -> np.ndarray:
    """Mask of 3x3 local maxima; on ties the first pixel in raster order wins."""
    h, w = score.shape
    pad = np.pad(score, 1, mode="constant", constant_values=0)
    keep = score > 0
    centre = pad[1 : h + 1, 1 : w + 1]
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dy == 0 and dx == 0:
                continue
            nb = pad[1 + dy : h + 1 + dy, 1 + dx : w + 1 + dx]
            earlier = dy < 0 or (dy == 0 and dx < 0)
            keep &= centre > nb if earlier else centre >= nb
    return keep


def orientation_bins(gray: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    patch = gray[ys[:, None] + DISK_DY[None, :], xs[:, None] + DISK_DX[None, :]].astype(np.int64)
    m10 = patch @ DISK_DX
    m01 = patch @ DISK_DY
    angle = np.arctan2(m01, m10)
    return np.rint(angle / (2 * np.pi / ANGLE_BINS)).astype(np.int64) % ANGLE_BINS


def describe(gray: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Steered 256-bit descriptors, packed little-endian into 32 bytes."""
    if len(xs) == 0:
        return np.zeros((0, DESCRIPTOR_BITS // 8), dtype=np.uint8)
    smooth = box_smooth(gray)
    pat = PATTERN[orientation_bins(gray, xs, ys)]  # (K, 256, 4)
    s1 = smooth[ys[:, None] + pat[..., 1], xs[:, None] + pat[..., 0]]
    s2 = smooth[ys[:, None] + pat[..., 3], xs[:, None] + pat[..., 2]]
    return np.packbits(s1 < s2, axis=1, bitorder="little")


def corner_candidates(gray: np.ndarray, threshold: int) -> np.ndarray:
    """(y, x, score) rows of every non-suppressed corner, strongest first."""
    score = kernels.fast_score_map(np.ascontiguousarray(gray, dtype=np.uint8), int(threshold), BORDER)
    ys, xs = np.nonzero(suppress_nonmax(score))
    s = score[ys, xs]
    order = np.lexsort((xs, ys, -s))
    return np.stack([ys[order], xs[order], s[order]], axis=1)


def detect(image: np.ndarray, cfg: DetectorConfig = DetectorConfig()) -> KeypointSet:
    """Top ``cfg.max_keypoints`` corners with descriptors, by descending response."""
    gray = to_gray(np.asarray(image))
    if min(gray.shape) < MIN_SIDE:
        raise ImageTooSmall(f"image {gray.shape} below {MIN_SIDE}px")
    cand = corner_candidates(gray, cfg.corner_threshold)[: cfg.max_keypoints]
    ys, xs = cand[:, 0].astype(np.int64), cand[:, 1].astype(np.int64)
    return KeypointSet(
        xy=np.stack([xs, ys], axis=1),
        response=cand[:, 2].astype(np.int64),
        descriptors=describe(gray, xs, ys),
    )


def match_pair(a: KeypointSet, b: KeypointSet, cfg: DetectorConfig = DetectorConfig()) -> np.ndarray:
    """Mutual nearest neighbours passing the ratio test, as (M, 2) index pairs."""
    if len(a) == 0 or len(b) == 0:
        raise EmptyKeypoints("both images need keypoints")
    dist = kernels.hamming_matrix(a.packed, b.packed)
    nearest = np.argmin(dist, axis=1)
    d1 = dist[np.arange(len(a)), nearest]
    if dist.shape[1] > 1:
        d2 = np.partition(dist, 1, axis=1)[:, 1]
    else:
        d2 = np.full(len(a), DESCRIPTOR_BITS)
    back = np.argmin(dist, axis=0)
    ok = (d1 < cfg.match_ratio * d2) & (back[nearest] == np.arange(len(a)))
    idx = np.nonzero(ok)[0]
    return np.stack([idx, nearest[idx]], axis=1).astype(np.int64)


@dataclass(frozen=True)
class GeometricResult:
    matches: np.ndarray
    consistent: bool
    model: Optional[np.ndarray] = None  # 3x2, maps [x y 1] of a onto b


def pair_seed(id_a: str, id_b: str) -> int:
    lo, hi = sorted((id_a, id_b))
    return int.from_bytes(hashlib.sha256(f"{lo}\x1f{hi}".encode()).digest()[:8], "little")


def _fit_affine(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    a = np.hstack([src, np.ones((len(src), 1))])
    model, *_ = np.linalg.lstsq(a, dst, rcond=None)
    return model


def _inliers(model: np.ndarray, src_h: np.ndarray, dst: np.ndarray, tol2: float) -> np.ndarray:
    err = src_h @ model - dst
    return (err * err).sum(axis=1) <= tol2


def filter_geometric(
    matches: np.ndarray,
    a: KeypointSet,
    b: KeypointSet,
    cfg: DetectorConfig = DetectorConfig(),
    seed: int = 0,
) -> GeometricResult:
    """Keep the matches that agree with one affine map (sampled consensus).

    Fewer than four matches cannot confirm a model and come back unchanged
    with ``consistent=False``; so does a best model supported only by its own
    three-point sample.
    """
    matches = np.asarray(matches, dtype=np.int64).reshape(-1, 2)
    n = len(matches)
    if n < 4:
        return GeometricResult(matches, False)
    src = a.xy[matches[:, 0]].astype(np.float64)
    dst = b.xy[matches[:, 1]].astype(np.float64)
    src_h = np.hstack([src, np.ones((n, 1))])
    tol2 = cfg.inlier_px**2

    rng = np.random.default_rng(seed)
    iters = cfg.ransac_iterations
    sample = rng.integers(0, n, size=(iters, 3))
    dup = (sample[:, 0] == sample[:, 1]) | (sample[:, 0] == sample[:, 2]) | (sample[:, 1] == sample[:, 2])
    while dup.any():
        sample[dup] = rng.integers(0, n, size=(int(dup.sum()), 3))
        dup = (sample[:, 0] == sample[:, 1]) | (sample[:, 0] == sample[:, 2]) | (sample[:, 1] == sample[:, 2])
    sys_a = src_h[sample]  # (iters, 3, 3)
    det = np.linalg.det(sys_a)
    good = np.abs(det) > 1e-6
    if not good.any():
        return GeometricResult(matches[:0], False)
    models = np.linalg.solve(sys_a[good], dst[sample[good]])  # (g, 3, 2)
    x, y = src[:, 0][None, :], src[:, 1][None, :]
    ex = models[:, 0, 0, None] * x + models[:, 1, 0, None] * y + models[:, 2, 0, None] - dst[:, 0]
    ey = models[:, 0, 1, None] * x + models[:, 1, 1, None] * y + models[:, 2, 1, None] - dst[:, 1]
    counts = (ex * ex + ey * ey <= tol2).sum(axis=1)
    best = int(np.argmax(counts))
    model = models[best]
    mask = _inliers(model, src_h, dst, tol2)
    if mask.sum() >= 3:
        refit = _fit_affine(src[mask], dst[mask])
        refit_mask = _inliers(refit, src_h, dst, tol2)
        if refit_mask.sum() >= mask.sum():
            model, mask = refit, refit_mask
    kept = matches[mask]
    return GeometricResult(kept, len(kept) >= 4, model)


@dataclass
class ImageFeatures:
    asset_id: str
    keypoints: KeypointSet


def pair_weight(fa: ImageFeatures, fb: ImageFeatures, cfg: DetectorConfig = DetectorConfig()) -> int:
    """Number of geometrically consistent matches between two images."""
    if len(fa.keypoints) == 0 or len(fb.keypoints) == 0:
        return 0
    m = match_pair(fa.keypoints, fb.keypoints, cfg)
    res = filter_geometric(m, fa.keypoints, fb.keypoints, cfg, seed=pair_seed(fa.asset_id, fb.asset_id))
    return len(res.matches) if res.consistent else 0


@dataclass
class PairCounter:
    """Tally of pair evaluations; handy for checking the (N^2 - N)/2 budget."""

    calls: int = field(default=0)


def build_visual_matrix(
    features: Sequence[ImageFeatures],
    cfg: DetectorConfig = DetectorConfig(),
    counter: Optional[PairCounter] = None,
) -> VisualMatrix:
    """Symmetric match-count matrix over every unordered pair."""
    n = len(features)
    if n < 2:
        raise TooFewImages(f"need at least 2 images, got {n}")
    w = np.zeros((n, n), dtype=np.int64)
    for i in range(n):
        for j in range(i + 1, n):
            w[i, j] = w[j, i] = pair_weight(features[i], features[j], cfg)
            if counter is not None:
                counter.calls += 1
    assert np.array_equal(w, w.T) and not np.any(np.diag(w))
    return VisualMatrix(tuple(f.asset_id for f in features), w)


def features_for(asset_id: str, image: np.ndarray, cfg: DetectorConfig = DetectorConfig()) -> ImageFeatures:
    return ImageFeatures(asset_id, detect(image, cfg))


def ingest_matrix(json_text: str) -> VisualMatrix:
    """Load a visual matrix computed elsewhere (e.g. another feature pipeline)."""
    return visual_from_json(json_text)
