"""Synthetic provenance cases: random DAGs of edited images with causally
consistent EXIF metadata, plus unrelated distractor images."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from provgraph.assets import ImageAsset
from provgraph.datagen import transforms as tf
from provgraph.datagen.exifwriter import write_exif
from provgraph.datagen.textures import seed_raster
from provgraph.errors import IncompatibleMenu, RootTooSmall
from provgraph.graphbuild import ProvenanceGraph, bam_to_json
from provgraph.metadata import TAG_FIELDS, TagBundle
from provgraph.raster import thumbnail_bytes

log = logging.getLogger(__name__)

MIN_ROOT_SIDE = 128
ROOT_SIZE = 160
MIN_DELTA = 60
MAX_DELTA = 30 * 24 * 3600
YEAR = 365 * 24 * 3600
EPOCH_START = datetime(2008, 1, 1)
EPOCH_SPAN = 9 * YEAR

CAMERAS = (
    ("Canon", "Canon EOS 5D Mark III", "Firmware Version 1.3.6"),
    ("NIKON CORPORATION", "NIKON D750", "Ver.1.13"),
    ("SONY", "ILCE-7M3", "ILCE-7M3 v3.01"),
    ("Apple", "iPhone 8", "13.3.1"),
    ("samsung", "SM-G960F", "G960FXXU7DTAA"),
    ("FUJIFILM", "X-T3", "Digital Camera X-T3 Ver4.00"),
    ("Panasonic", "DMC-GH4", "Ver.2.5"),
    ("OLYMPUS IMAGING CORP.", "E-M10MarkII", "Version 1.2"),
)
EDITORS = (
    "Adobe Photoshop CC 2019 (Windows)",
    "Adobe Photoshop Lightroom Classic 9.2",
    "GIMP 2.10.18",
    "Paint.NET 4.2",
    "Pixelmator Pro 1.6",
    "darktable 3.0.1",
)
ARTISTS = ("jdoe", "m.rossi", "kwan", "a.schmidt", "photo_lab", "ana")
HOSTS = ("WORKSTATION-7", "Mac Pro", "studio-pc", "LAPTOP-K2")


@dataclass(frozen=True)
class CaseSpec:
    graph_order: tuple[int, int] = (5, 15)
    transform_menu: frozenset[str] = frozenset(tf.ALL)
    metadata_corruption: float = 0.0
    distractor_count: int = 0
    seed: int = 0

    def __post_init__(self) -> None:
        lo, hi = self.graph_order
        if lo < 2 or hi < lo:
            raise ValueError(f"graph order range {lo}..{hi} must satisfy 2 <= lo <= hi")
        menu = frozenset(self.transform_menu)
        if not menu or not menu <= set(tf.ALL):
            raise IncompatibleMenu(f"transform menu must be a nonempty subset of {tf.ALL}")
        if menu == {"splice"}:
            raise IncompatibleMenu("splice needs at least one unary transform to grow the rest of the graph")
        if not 0.0 <= self.metadata_corruption <= 1.0:
            raise ValueError("metadata corruption must lie in [0, 1]")
        if self.distractor_count < 0:
            raise ValueError("distractor count must be nonnegative")
        object.__setattr__(self, "transform_menu", menu)

    @property
    def splice(self) -> bool:
        return "splice" in self.transform_menu

    @property
    def root_count(self) -> int:
        return 2 if self.splice else 1

    def to_dict(self) -> dict:
        return {
            "graph_order": list(self.graph_order),
            "transform_menu": sorted(self.transform_menu),
            "metadata_corruption": self.metadata_corruption,
            "distractor_count": self.distractor_count,
            "seed": self.seed,
        }


@dataclass
class GeneratedCase:
    case_id: str
    assets: list[ImageAsset]
    truth: ProvenanceGraph
    query_id: str
    history: dict[str, dict] = field(default_factory=dict)
    files: dict[str, bytes] = field(default_factory=dict, repr=False)

    def asset(self, asset_id: str) -> ImageAsset:
        for a in self.assets:
            if a.id == asset_id:
                return a
        raise KeyError(asset_id)


# --------------------------------------------------------------------------
# metadata rules


def _gps(rng: np.random.Generator, limit: int) -> tuple:
    deg = int(rng.integers(0, limit))
    minute = int(rng.integers(0, 60))
    sec = int(rng.integers(0, 6000))
    return ((deg, 1), (minute, 1), (sec, 100))


def root_bundle(rng: np.random.Generator, raster: np.ndarray) -> TagBundle:
    taken = EPOCH_START + timedelta(seconds=int(rng.integers(0, EPOCH_SPAN)))
    make, model, firmware = CAMERAS[int(rng.integers(len(CAMERAS)))]
    return TagBundle(
        date_time_original=taken,
        create_date=taken,
        modify_date=taken,
        gps_latitude=_gps(rng, 90),
        gps_latitude_ref="NS"[int(rng.integers(2))],
        gps_longitude=_gps(rng, 180),
        gps_longitude_ref="EW"[int(rng.integers(2))],
        make=make,
        model=model,
        software=firmware,
        thumbnail=thumbnail_bytes(raster),
    )


def child_bundle(
    rng: np.random.Generator,
    parents: Sequence[TagBundle],
    transform: str,
    raster: np.ndarray,
) -> TagBundle:
    """Inherit from the first parent (the host), then apply the edit rules."""
    base = parents[0]
    latest = max(p.modify_date for p in parents if p.modify_date is not None)
    editor = EDITORS[int(rng.integers(len(EDITORS)))]
    changes: dict = {
        "modify_date": latest + timedelta(seconds=int(rng.integers(MIN_DELTA, MAX_DELTA + 1))),
        "software": editor,
    }
    if transform == "splice":
        changes.update(
            processing_software=editor,
            artist=ARTISTS[int(rng.integers(len(ARTISTS)))],
            gps_latitude=None,
            gps_latitude_ref=None,
            gps_longitude=None,
            gps_longitude_ref=None,
        )
        if editor.startswith("Adobe Photoshop"):
            changes["host_computer"] = HOSTS[int(rng.integers(len(HOSTS)))]
            changes["image_resources"] = b"8BIM\x04\x04\x00\x00\x00\x00\x00\x00"
    changes["thumbnail"] = thumbnail_bytes(raster) if transform in tf.GEOMETRIC else None
    return replace(base, **changes)


def _perturb(rng: np.random.Generator, name: str, value):
    if isinstance(value, datetime):
        shift = int(rng.integers(1, YEAR + 1)) * (1 if rng.random() < 0.5 else -1)
        return value + timedelta(seconds=shift)
    if name in ("gps_latitude_ref", "gps_longitude_ref"):
        return {"N": "S", "S": "N", "E": "W", "W": "E"}[value]
    if name in ("gps_latitude", "gps_longitude"):
        (d, dd), (m, md), (s, sd) = value
        return ((d, dd), (m, md), (s + int(rng.integers(1, 500)), sd))
    if isinstance(value, bytes):
        pos = int(rng.integers(len(value)))
        return value[:pos] + bytes([value[pos] ^ 0xFF]) + value[pos + 1 :]
    return value + f" ({int(rng.integers(1, 100))})"


def corrupt(bundle: TagBundle, rate: float, rng: np.random.Generator) -> TagBundle:
    """Strip or perturb each present tag with total probability ``rate``.

    Both outcomes are equally likely up to rate 0.5; above that the extra mass
    goes to stripping so that rate 1.0 leaves an all-absent bundle.
    """
    if rate <= 0.0:
        return bundle
    p_strip = rate / 2 + max(0.0, rate - 0.5)
    changes = {}
    for name in TAG_FIELDS:
        value = getattr(bundle, name)
        if value is None:
            continue
        u = rng.random()
        if u < p_strip:
            changes[name] = None
        elif u < rate:
            changes[name] = _perturb(rng, name, value)
    return replace(bundle, **changes)


# --------------------------------------------------------------------------
# case generation


def _token(rng: np.random.Generator, taken: set[str]) -> str:
    while True:
        t = f"{int(rng.integers(0, 1 << 32)):08x}"
        if t not in taken:
            taken.add(t)
            return t


def generate_case(
    spec: CaseSpec,
    roots: Sequence[np.ndarray],
    case_id: str = "case",
    rng: Optional[np.random.Generator] = None,
) -> GeneratedCase:
    """Grow a random provenance DAG from ``roots``.

    Node ids are opaque random tokens so that id order carries no hint of
    the lineage. The query is the last node created (always a leaf).
    """
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    if len(roots) < 1:
        raise RootTooSmall("need at least one root raster")
    for r in roots:
        if min(r.shape[:2]) < MIN_ROOT_SIDE:
            raise RootTooSmall(f"root raster {r.shape[1]}x{r.shape[0]} below {MIN_ROOT_SIDE}x{MIN_ROOT_SIDE}")
    order = int(rng.integers(spec.graph_order[0], spec.graph_order[1] + 1))
    splice = spec.splice
    if splice and (len(roots) < 2 or order < 3):
        raise IncompatibleMenu("splice needs two roots and a graph order of at least 3")
    n_roots = 2 if splice else 1
    unary = sorted(spec.transform_menu - {"splice"})

    taken: set[str] = set()
    ids: list[str] = []
    rasters: list[np.ndarray] = []
    bundles: list[TagBundle] = []
    lineage: list[int] = []  # which root each node descends from (-1 = both)
    edges: list[tuple[str, str]] = []
    history: dict[str, dict] = {}

    for r in range(n_roots):
        raster = np.ascontiguousarray(roots[r], dtype=np.uint8)
        ids.append(f"{case_id}-{_token(rng, taken)}")
        rasters.append(raster)
        bundles.append(root_bundle(rng, raster))
        lineage.append(r)
        history[ids[-1]] = {"transform": None, "parents": [], "params": {}}

    if splice and bundles[1].date_time_original > bundles[0].date_time_original:
        # the donor lineage is captured first, so donor edges stay date-causal
        d0 = {k: getattr(bundles[0], k) for k in ("date_time_original", "create_date", "modify_date")}
        d1 = {k: getattr(bundles[1], k) for k in d0}
        bundles[0], bundles[1] = replace(bundles[0], **d1), replace(bundles[1], **d0)

    derived = order - n_roots
    # the forced composite joins the second root's lineage into the first
    forced_at = int(rng.integers(0, derived)) if splice else -1
    for step in range(derived):
        joined = splice and step > forced_at
        if step == forced_at:
            hosts = [i for i in range(len(ids)) if lineage[i] == 0]
            donors = [i for i in range(len(ids)) if lineage[i] == 1]
            host = hosts[int(rng.integers(len(hosts)))]
            parents = [host, donors[int(rng.integers(len(donors)))]]
            name = "splice"
        else:
            pool = [i for i in range(len(ids)) if joined or lineage[i] != 1]
            name = unary[int(rng.integers(len(unary)))]
            if splice and joined and rng.random() < 0.15 and len(pool) >= 2:
                name = "splice"
            parent = pool[int(rng.integers(len(pool)))]
            parents = [parent]
            if name == "splice":
                others = [i for i in pool if i != parent]
                donor = others[int(rng.integers(len(others)))]
                if bundles[donor].date_time_original > bundles[parent].date_time_original:
                    parent, donor = donor, parent
                parents = [parent, donor]
        if name == "splice":
            img, params = tf.splice(rasters[parents[0]], rasters[parents[1]], rng)
        else:
            img, params = tf.UNARY[name](rasters[parents[0]], rng)
        bundle = child_bundle(rng, [bundles[p] for p in parents], name, img)
        ids.append(f"{case_id}-{_token(rng, taken)}")
        rasters.append(img)
        bundles.append(bundle)
        lineage.append(-1 if name == "splice" or lineage[parents[0]] == -1 else lineage[parents[0]])
        for p in parents:
            edges.append((ids[p], ids[-1]))
        history[ids[-1]] = {"transform": name, "parents": [ids[p] for p in parents], "params": params}

    final = [b if i < n_roots else corrupt(b, spec.metadata_corruption, rng) for i, b in enumerate(bundles)]
    assets = [ImageAsset(id=i, raster=r, bundle=b) for i, r, b in zip(ids, rasters, final)]
    files = {a.id: write_exif(a.bundle, a.raster) for a in assets}
    truth = ProvenanceGraph(ids, edges)
    return GeneratedCase(case_id, assets, truth, ids[-1], history, files)


def generate_distractors(count: int, rng: np.random.Generator, size: int = ROOT_SIZE) -> list[ImageAsset]:
    """Unrelated images, each an independent root with its own camera metadata,
    some passed once through a simple edit."""
    taken: set[str] = set()
    out = []
    for _ in range(count):
        img = seed_raster(rng, size)
        bundle = root_bundle(rng, img)
        if rng.random() < 0.5:
            name = tf.SIMPLE[int(rng.integers(len(tf.SIMPLE)))]
            img, _ = tf.UNARY[name](img, rng)
            bundle = child_bundle(rng, [bundle], name, img)
        out.append(ImageAsset(id=f"distractor-{_token(rng, taken)}", raster=img, bundle=bundle))
    return out


# --------------------------------------------------------------------------
# suites on disk


def case_seeds(seed: int, count: int) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(seed).spawn(count + 1)


def generate_suite_cases(
    count: int,
    spec: CaseSpec,
    root_size: int = ROOT_SIZE,
) -> tuple[list[GeneratedCase], list[ImageAsset]]:
    """``count`` cases plus ``spec.distractor_count`` distractors, all derived
    from ``spec.seed``."""
    seqs = case_seeds(spec.seed, count)
    cases = []
    for c in range(count):
        rng = np.random.default_rng(seqs[c])
        roots = [seed_raster(rng, root_size) for _ in range(spec.root_count)]
        cases.append(generate_case(spec, roots, case_id=f"case{c:03d}", rng=rng))
    distractors = generate_distractors(spec.distractor_count, np.random.default_rng(seqs[count]), root_size)
    return cases, distractors


def write_case(case: GeneratedCase, directory: Path, spec: CaseSpec) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    for a in case.assets:
        data = case.files.get(a.id) or write_exif(a.bundle, a.raster)
        (directory / f"{a.id}.tif").write_bytes(data)
    (directory / "truth.bam.json").write_text(bam_to_json(case.truth) + "\n")
    (directory / "query.txt").write_text(case.query_id + "\n")
    doc = {"case_id": case.case_id, "spec": spec.to_dict(), "history": case.history}
    (directory / "spec.json").write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def write_suite(out_dir: str | Path, count: int, spec: CaseSpec) -> Path:
    out = Path(out_dir)
    cases, distractors = generate_suite_cases(count, spec)
    for case in cases:
        write_case(case, out / case.case_id, spec)
        log.info("case=%s stage=gen nodes=%d", case.case_id, len(case.assets))
    ddir = out / "distractors"
    ddir.mkdir(parents=True, exist_ok=True)
    for a in distractors:
        (ddir / f"{a.id}.tif").write_bytes(write_exif(a.bundle, a.raster))
    manifest = {"cases": [c.case_id for c in cases], "spec": spec.to_dict(), "distractors": len(distractors)}
    (out / "suite.json").write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    return out
