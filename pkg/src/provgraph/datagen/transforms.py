"""Pixel transforms used to derive child images. All integer-exact or
plain float64 arithmetic so output bytes do not depend on the platform."""

from __future__ import annotations

import numpy as np

MIN_CHILD_SIDE = 64

SIMPLE = ("crop", "resize", "brightness", "blur", "rotate")
ALL = SIMPLE + ("splice",)


def crop(img: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, dict]:
    """Axis-aligned sub-rectangle covering at least half the area."""
    h, w = img.shape
    for _ in range(100):
        fx, fy = rng.uniform(0.71, 1.0, size=2)
        if fx * fy >= 0.5:
            break
    ch = max(min(h, MIN_CHILD_SIDE), int(h * fy))
    cw = max(min(w, MIN_CHILD_SIDE), int(w * fx))
    y0 = int(rng.integers(0, h - ch + 1))
    x0 = int(rng.integers(0, w - cw + 1))
    return img[y0 : y0 + ch, x0 : x0 + cw].copy(), {"x": x0, "y": y0, "w": cw, "h": ch}


def resize_to(img: np.ndarray, nh: int, nw: int) -> np.ndarray:
    """Bilinear resampling with pixel-centre alignment."""
    h, w = img.shape
    ys = np.clip((np.arange(nh) + 0.5) * (h / nh) - 0.5, 0, h - 1)
    xs = np.clip((np.arange(nw) + 0.5) * (w / nw) - 0.5, 0, w - 1)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    f = img.astype(np.float64)
    top = f[y0][:, x0] * (1 - wx) + f[y0][:, x1] * wx
    bot = f[y1][:, x0] * (1 - wx) + f[y1][:, x1] * wx
    return np.clip(np.rint(top * (1 - wy) + bot * wy), 0, 255).astype(np.uint8)


def resize(img: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, dict]:
    h, w = img.shape
    factor = float(rng.uniform(0.8, 1.25))
    nh = max(MIN_CHILD_SIDE, int(round(h * factor)))
    nw = max(MIN_CHILD_SIDE, int(round(w * factor)))
    return resize_to(img, nh, nw), {"factor": factor, "w": nw, "h": nh}


def brightness(img: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, dict]:
    offset = int(rng.integers(10, 41)) * (1 if rng.random() < 0.5 else -1)
    out = np.clip(img.astype(np.int16) + offset, 0, 255).astype(np.uint8)
    return out, {"offset": offset}


def box_blur3(img: np.ndarray) -> np.ndarray:
    pad = np.pad(img.astype(np.int32), 1, mode="edge")
    h, w = img.shape
    acc = sum(pad[dy : dy + h, dx : dx + w] for dy in range(3) for dx in range(3))
    return ((acc + 4) // 9).astype(np.uint8)


def blur(img: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, dict]:
    return box_blur3(img), {}


def rotate(img: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, dict]:
    k = int(rng.integers(1, 4))
    return np.ascontiguousarray(np.rot90(img, k)), {"quarter_turns": k}


def splice(host: np.ndarray, donor: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, dict]:
    """Paste a donor sub-rectangle (40-60% of each side) into the host."""
    hh, hw = host.shape
    dh, dw = donor.shape
    ph = min(int(dh * rng.uniform(0.4, 0.6)), hh)
    pw = min(int(dw * rng.uniform(0.4, 0.6)), hw)
    sy = int(rng.integers(0, dh - ph + 1))
    sx = int(rng.integers(0, dw - pw + 1))
    ty = int(rng.integers(0, hh - ph + 1))
    tx = int(rng.integers(0, hw - pw + 1))
    out = host.copy()
    out[ty : ty + ph, tx : tx + pw] = donor[sy : sy + ph, sx : sx + pw]
    return out, {"src": [sx, sy, pw, ph], "dst": [tx, ty]}


UNARY = {"crop": crop, "resize": resize, "brightness": brightness, "blur": blur, "rotate": rotate}
GEOMETRIC = frozenset({"crop", "resize", "rotate", "splice"})
