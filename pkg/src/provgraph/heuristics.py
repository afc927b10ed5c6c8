"""Metadata voting between image pairs.

Each heuristic looks at two bundles ``a`` and ``b`` and returns
``(votes_ab, votes_ba)``: how much the tags support content flowing from
``a`` to ``b`` and from ``b`` to ``a``. Votes are raw integer counts; no
normalization is applied here.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Callable, Sequence

import numpy as np

from provgraph.errors import ConfigError, TooFewImages
from provgraph.matrices import VoteMatrix, default_ids
from provgraph.metadata import TagBundle

Votes = tuple[int, int]

LOCATION_FIELDS = ("gps_latitude", "gps_latitude_ref", "gps_longitude", "gps_longitude_ref")
CAMERA_FIELDS = ("make", "model", "software")
EDITING_FIELDS = ("processing_software", "artist", "host_computer", "image_resources")
DATE_FIELDS = ("date_time_original", "modify_date", "create_date")

# Highest count one direction of one pair could collect. The equal/present
# rules are exclusive, so the reachable maximum is 3 + 1 + 1 + 1 + 1 = 7.
MAX_VOTES = 11


def vote_date(a: TagBundle, b: TagBundle) -> Votes:
    ab = ba = 0
    for name in DATE_FIELDS:
        da, db = getattr(a, name), getattr(b, name)
        if da is None or db is None:
            continue
        if da <= db:
            ab += 1
        if db <= da:
            ba += 1
    return ab, ba


def _complete(bundle: TagBundle, names: Sequence[str]) -> bool:
    return all(getattr(bundle, n) is not None for n in names)


def _equal_or_present(a: TagBundle, b: TagBundle, names: Sequence[str]) -> Votes:
    full_a, full_b = _complete(a, names), _complete(b, names)
    if full_a and full_b:
        if all(getattr(a, n) == getattr(b, n) for n in names):
            return 1, 1
        return 0, 0
    return int(full_a), int(full_b)


def vote_location(a: TagBundle, b: TagBundle) -> Votes:
    return _equal_or_present(a, b, LOCATION_FIELDS)


def vote_camera(a: TagBundle, b: TagBundle) -> Votes:
    return _equal_or_present(a, b, CAMERA_FIELDS)


def vote_editing(a: TagBundle, b: TagBundle) -> Votes:
    # a vote towards whichever side shows traces of manipulation
    edited_a = any(getattr(a, n) is not None for n in EDITING_FIELDS)
    edited_b = any(getattr(b, n) is not None for n in EDITING_FIELDS)
    return int(edited_b), int(edited_a)


def vote_thumbnail(a: TagBundle, b: TagBundle) -> Votes:
    ta, tb = a.thumbnail, b.thumbnail
    if ta is not None and tb is not None:
        return (1, 1) if ta == tb else (0, 0)
    return int(ta is not None), int(tb is not None)


@dataclass(frozen=True)
class HeuristicSet:
    date: bool = True
    location: bool = True
    camera: bool = True
    editing: bool = True
    thumbnail: bool = True

    @classmethod
    def only(cls, *names: str) -> "HeuristicSet":
        unknown = set(names) - set(HEURISTICS)
        if unknown:
            raise ConfigError(f"unknown heuristics: {sorted(unknown)}")
        return cls(**{n: n in names for n in HEURISTICS})

    @classmethod
    def parse(cls, text: str) -> "HeuristicSet":
        """``"all"``, ``"none"`` or a comma list such as ``"date,thumbnail"``."""
        text = text.strip().lower()
        if text == "all":
            return cls()
        if text in ("", "none"):
            return cls.only()
        return cls.only(*(t.strip() for t in text.split(",") if t.strip()))

    def enabled(self) -> tuple[str, ...]:
        return tuple(f.name for f in fields(self) if getattr(self, f.name))

    def __str__(self) -> str:
        names = self.enabled()
        if len(names) == len(HEURISTICS):
            return "all"
        return ",".join(names) or "none"


HEURISTICS: dict[str, Callable[[TagBundle, TagBundle], Votes]] = {
    "date": vote_date,
    "location": vote_location,
    "camera": vote_camera,
    "editing": vote_editing,
    "thumbnail": vote_thumbnail,
}


def build_vote_matrix(
    bundles: Sequence[TagBundle],
    enabled: HeuristicSet | None = None,
    ids: Sequence[str] | None = None,
) -> VoteMatrix:
    """Sum the enabled heuristics over every unordered pair."""
    enabled = enabled or HeuristicSet()
    n = len(bundles)
    if n < 2:
        raise TooFewImages(f"need at least 2 images, got {n}")
    active = [HEURISTICS[name] for name in enabled.enabled()]
    if not active:
        raise ConfigError("at least one heuristic must be enabled")
    votes = np.zeros((n, n), dtype=np.int64)
    for i in range(n):
        for j in range(i + 1, n):
            for rule in active:
                ab, ba = rule(bundles[i], bundles[j])
                votes[i, j] += ab
                votes[j, i] += ba
    return VoteMatrix(tuple(ids) if ids is not None else default_ids(n), votes)
