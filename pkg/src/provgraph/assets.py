"""In-memory image assets and corpus directory discovery."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from provgraph.metadata import TagBundle, read_bundle
from provgraph.raster import load_raster

IMAGE_SUFFIXES = (".tif", ".tiff", ".jpg", ".jpeg", ".pgm", ".ppm", ".png")


@dataclass
class ImageAsset:
    id: str
    raster: Optional[np.ndarray]
    bundle: TagBundle
    path: Optional[Path] = None
    cache: dict = field(default_factory=dict, repr=False, compare=False)


def load_asset(path: str | Path, with_raster: bool = True) -> ImageAsset:
    p = Path(path)
    raster = load_raster(p) if with_raster else None
    return ImageAsset(id=p.stem, raster=raster, bundle=read_bundle(p), path=p)


def image_files(directory: str | Path) -> list[Path]:
    d = Path(directory)
    return sorted(p for p in d.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


def corpus_files(root: str | Path) -> dict[str, Path]:
    """Every image under ``root`` (one level of case directories), by id."""
    found: dict[str, Path] = {}
    root = Path(root)
    dirs = [root] + sorted(p for p in root.iterdir() if p.is_dir())
    for d in dirs:
        for f in image_files(d):
            if f.stem in found:
                raise ValueError(f"duplicate image id {f.stem!r} in corpus")
            found[f.stem] = f
    return dict(sorted(found.items()))
