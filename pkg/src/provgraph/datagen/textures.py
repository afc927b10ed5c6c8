"""Procedural seed rasters: smooth shaded background plus random shapes."""

from __future__ import annotations

import numpy as np

from provgraph.datagen.transforms import resize_to


def seed_raster(rng: np.random.Generator, size: int = 160) -> np.ndarray:
    coarse = rng.uniform(50, 200, size=(6, 6))
    img = resize_to(np.clip(coarse, 0, 255).astype(np.uint8), size, size).astype(np.float64)
    yy, xx = np.mgrid[0:size, 0:size]
    for _ in range(int(rng.integers(60, 90))):
        shade = rng.uniform(0, 255)
        cx, cy = rng.uniform(0, size, size=2)
        rx, ry = rng.uniform(3, size / 7, size=2)
        kind = rng.integers(0, 3)
        if kind == 0:
            mask = (np.abs(xx - cx) <= rx) & (np.abs(yy - cy) <= ry)
        elif kind == 1:
            mask = ((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2 <= 1.0
        else:
            # axis-aligned right triangle
            mask = (xx >= cx) & (yy >= cy) & ((xx - cx) / rx + (yy - cy) / ry <= 1.0)
        img[mask] = shade
    img += rng.normal(0, 3, size=img.shape)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)
