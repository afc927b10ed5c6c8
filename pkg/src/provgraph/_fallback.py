"""Pure numpy versions of the compiled kernels in ``_kernels.pyx``.

Each function returns exactly what its compiled twin returns, including
float accumulation order, so either backend can be swapped in silently.
"""

from __future__ import annotations

import numpy as np

CIRCLE_DX = (0, 1, 2, 3, 3, 3, 2, 1, 0, -1, -2, -3, -3, -3, -2, -1)
CIRCLE_DY = (-3, -3, -2, -1, 0, 1, 2, 3, 3, 3, 2, 1, 0, -1, -2, -3)


def _has_arc(mask: np.ndarray, arc: int) -> np.ndarray:
    run = mask | (mask << np.uint32(16))
    for _ in range(arc - 1):
        run &= run >> np.uint32(1)
    return run != 0


def fast_score_map(img: np.ndarray, threshold: int, margin: int, arc: int = 9) -> np.ndarray:
    h, w = img.shape
    out = np.zeros((h, w), dtype=np.int32)
    margin = max(margin, 3)
    if h - 2 * margin <= 0 or w - 2 * margin <= 0:
        return out
    src = img.astype(np.int32)
    centre = src[margin : h - margin, margin : w - margin]
    hi = centre + threshold
    lo = centre - threshold
    bright = np.zeros(centre.shape, dtype=np.uint32)
    dark = np.zeros(centre.shape, dtype=np.uint32)
    s_bright = np.zeros(centre.shape, dtype=np.int32)
    s_dark = np.zeros(centre.shape, dtype=np.int32)
    for k, (dx, dy) in enumerate(zip(CIRCLE_DX, CIRCLE_DY)):
        v = src[margin + dy : h - margin + dy, margin + dx : w - margin + dx]
        up = v > hi
        down = v < lo
        bright |= up.astype(np.uint32) << np.uint32(k)
        dark |= down.astype(np.uint32) << np.uint32(k)
        s_bright += np.where(up, v - hi, 0)
        s_dark += np.where(down, lo - v, 0)
    is_bright = _has_arc(bright, arc)
    is_dark = _has_arc(dark, arc) & ~is_bright
    core = np.where(is_bright, s_bright, np.where(is_dark, s_dark, 0))
    out[margin : h - margin, margin : w - margin] = core
    return out


if hasattr(np, "bitwise_count"):
    _popcount = np.bitwise_count
else:  # numpy < 2.0

    def _popcount(x: np.ndarray) -> np.ndarray:
        bits = np.unpackbits(x.view(np.uint8), axis=-1)
        return bits.reshape(*x.shape, 64).sum(axis=-1)


def hamming_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape[1] != b.shape[1]:
        raise ValueError("descriptor widths differ")
    out = np.empty((a.shape[0], b.shape[0]), dtype=np.int32)
    # chunk rows to bound the (rows, nb, words) temporary
    step = max(1, (1 << 20) // max(1, b.shape[0] * b.shape[1]))
    for i in range(0, a.shape[0], step):
        x = a[i : i + step, None, :] ^ b[None, :, :]
        out[i : i + step] = _popcount(x).sum(axis=2, dtype=np.int32)
    return out


def adc_scores(
    codes: np.ndarray,
    owners: np.ndarray,
    cell_start: np.ndarray,
    tables: np.ndarray,
    probes: np.ndarray,
    n_images: int,
) -> np.ndarray:
    scores = np.zeros(n_images, dtype=np.float64)
    m = tables.shape[1]
    for q in range(tables.shape[0]):
        for cell in probes[q]:
            start, stop = int(cell_start[cell]), int(cell_start[cell + 1])
            if start == stop:
                continue
            block = codes[start:stop]
            d = np.zeros(stop - start, dtype=np.float64)
            for j in range(m):
                d += tables[q, j, block[:, j]]
            np.add.at(scores, owners[start:stop], 1.0 / (1.0 + d))
    return scores
