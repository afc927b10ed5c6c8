"""Shared builders for the test suite."""

from __future__ import annotations

import string
from datetime import datetime, timedelta

import numpy as np

from provgraph.metadata import TagBundle

_TEXT = string.ascii_letters + string.digits + " .-_()/"


def random_text(rng: np.random.Generator, max_len: int = 24) -> str:
    n = int(rng.integers(1, max_len + 1))
    return "".join(_TEXT[int(i)] for i in rng.integers(0, len(_TEXT), size=n)).strip() or "x"


def random_triple(rng: np.random.Generator) -> tuple:
    return tuple((int(rng.integers(0, 1 << 31)), int(rng.integers(1, 1 << 31))) for _ in range(3))


def random_date(rng: np.random.Generator) -> datetime:
    return datetime(1990, 1, 1) + timedelta(seconds=int(rng.integers(0, 40 * 365 * 86400)))


def random_bundle(rng: np.random.Generator, p_present: float = 0.6) -> TagBundle:
    """A bundle with each field independently present."""

    def maybe(make):
        return make() if rng.random() < p_present else None

    lat = maybe(lambda: random_triple(rng))
    lon = maybe(lambda: random_triple(rng))
    return TagBundle(
        date_time_original=maybe(lambda: random_date(rng)),
        modify_date=maybe(lambda: random_date(rng)),
        create_date=maybe(lambda: random_date(rng)),
        gps_latitude=lat,
        gps_latitude_ref="NS"[int(rng.integers(2))] if lat else None,
        gps_longitude=lon,
        gps_longitude_ref="EW"[int(rng.integers(2))] if lon else None,
        make=maybe(lambda: random_text(rng)),
        model=maybe(lambda: random_text(rng)),
        software=maybe(lambda: random_text(rng)),
        processing_software=maybe(lambda: random_text(rng)),
        artist=maybe(lambda: random_text(rng)),
        host_computer=maybe(lambda: random_text(rng)),
        image_resources=maybe(lambda: rng.bytes(int(rng.integers(1, 300)))),
        thumbnail=maybe(lambda: rng.bytes(int(rng.integers(1, 5000)))),
    )


def full_bundle() -> TagBundle:
    return TagBundle(
        date_time_original=datetime(2010, 6, 1, 12, 0, 0),
        modify_date=datetime(2010, 6, 2, 8, 30, 0),
        create_date=datetime(2010, 6, 1, 12, 0, 0),
        gps_latitude=((48, 1), (51, 1), (296, 10)),
        gps_latitude_ref="N",
        gps_longitude=((2, 1), (17, 1), (402, 10)),
        gps_longitude_ref="E",
        make="Canon",
        model="Canon EOS 5D",
        software="Firmware 1.1",
        processing_software="GIMP 2.10",
        artist="someone",
        host_computer="workstation",
        image_resources=b"8BIM\x04\x04\x00\x00",
        thumbnail=b"P5\n2 2\n255\n\x00\x10\x20\x30",
    )


# one (number, title, passed, detail) entry per acceptance criterion, printed
# by the terminal summary hook in conftest
CRITERIA: list[tuple[int, str, bool, str]] = []


def criterion(number: int, title: str, passed: bool, detail: str) -> None:
    CRITERIA.append((number, title, bool(passed), detail))
    print(f"criterion {number} {'PASS' if passed else 'FAIL'}: {title} ({detail})")
    assert passed, f"criterion {number} ({title}) failed: {detail}"
