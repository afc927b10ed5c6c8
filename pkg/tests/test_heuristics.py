import itertools
from dataclasses import replace
from datetime import datetime

import numpy as np
import pytest

from provgraph.errors import ConfigError, TooFewImages
from provgraph.heuristics import (
    HEURISTICS,
    MAX_VOTES,
    HeuristicSet,
    build_vote_matrix,
    vote_camera,
    vote_date,
    vote_editing,
    vote_location,
    vote_thumbnail,
)
from provgraph.metadata import TagBundle

from helpers import full_bundle, random_bundle

D2010 = datetime(2010, 5, 5, 10, 0, 0)
D2012 = datetime(2012, 5, 5, 10, 0, 0)
GPS = dict(
    gps_latitude=((48, 1), (51, 1), (296, 10)),
    gps_latitude_ref="N",
    gps_longitude=((2, 1), (17, 1), (402, 10)),
    gps_longitude_ref="E",
)
CAM = dict(make="Canon", model="EOS", software="fw 1.0")


# --------------------------------------------------------------------------
# listed examples


def test_date_examples():
    early = TagBundle(date_time_original=D2010, modify_date=D2010, create_date=D2010)
    late = TagBundle(date_time_original=D2012, modify_date=D2012, create_date=D2012)
    assert vote_date(early, late) == (3, 0)
    assert vote_date(early, early) == (3, 3)
    assert vote_date(TagBundle(date_time_original=D2010), TagBundle(modify_date=datetime(2009, 1, 1))) == (0, 0)


def test_location_examples():
    assert vote_location(TagBundle(**GPS), TagBundle(**GPS)) == (1, 1)
    assert vote_location(TagBundle(**GPS), TagBundle()) == (1, 0)
    assert vote_location(TagBundle(), TagBundle()) == (0, 0)


def test_camera_examples():
    assert vote_camera(TagBundle(**CAM), TagBundle(**CAM)) == (1, 1)
    assert vote_camera(TagBundle(**CAM), TagBundle(make="Canon")) == (1, 0)
    assert vote_camera(TagBundle(**CAM), TagBundle(**{**CAM, "software": "GIMP"})) == (0, 0)


def test_editing_examples():
    assert vote_editing(TagBundle(), TagBundle(artist="x")) == (1, 0)
    assert vote_editing(TagBundle(processing_software="p"), TagBundle(processing_software="p")) == (1, 1)
    assert vote_editing(TagBundle(**CAM), TagBundle(**GPS)) == (0, 0)


def test_thumbnail_examples():
    t = b"\x01\x02\x03"
    assert vote_thumbnail(TagBundle(thumbnail=t), TagBundle(thumbnail=t)) == (1, 1)
    assert vote_thumbnail(TagBundle(thumbnail=t), TagBundle()) == (1, 0)
    assert vote_thumbnail(TagBundle(thumbnail=t), TagBundle(thumbnail=b"\x01\x02\x04")) == (0, 0)


# --------------------------------------------------------------------------
# exhaustive truth tables against rule semantics written out independently

# per-field relation between a and b
STATES = ("none", "a_only", "b_only", "equal", "differ")


def _pair_values(state, val_a, val_b):
    return {
        "none": (None, None),
        "a_only": (val_a, None),
        "b_only": (None, val_b),
        "equal": (val_a, val_a),
        "differ": (val_a, val_b),
    }[state]


def _group_oracle(a_vals, b_vals):
    a_full = all(v is not None for v in a_vals)
    b_full = all(v is not None for v in b_vals)
    if a_full and b_full:
        same = all(x == y for x, y in zip(a_vals, b_vals))
        return (1, 1) if same else (0, 0)
    return (int(a_full), int(b_full))


def test_location_truth_table():
    fields = ("gps_latitude", "gps_latitude_ref", "gps_longitude", "gps_longitude_ref")
    values = {
        "gps_latitude": (((1, 1), (2, 1), (3, 1)), ((1, 1), (2, 1), (4, 1))),
        "gps_latitude_ref": ("N", "S"),
        "gps_longitude": (((5, 1), (6, 1), (7, 1)), ((5, 1), (6, 1), (7, 2))),
        "gps_longitude_ref": ("E", "W"),
    }
    count = 0
    for combo in itertools.product(STATES, repeat=4):
        a_kw, b_kw = {}, {}
        for f, s in zip(fields, combo):
            a_kw[f], b_kw[f] = _pair_values(s, *values[f])
        a, b = TagBundle(**a_kw), TagBundle(**b_kw)
        # the oracle sees the bundles after the pairing rule demoted half pairs
        expected = _group_oracle([getattr(a, f) for f in fields], [getattr(b, f) for f in fields])
        assert vote_location(a, b) == expected, combo
        count += 1
    assert count == 5**4 <= 2**10


def test_camera_truth_table():
    fields = ("make", "model", "software")
    for combo in itertools.product(STATES, repeat=3):
        a_kw, b_kw = {}, {}
        for f, s in zip(fields, combo):
            a_kw[f], b_kw[f] = _pair_values(s, f + "-1", f + "-2")
        present_a = [s in ("a_only", "equal", "differ") for s in combo]
        present_b = [s in ("b_only", "equal", "differ") for s in combo]
        if all(present_a) and all(present_b):
            expected = (1, 1) if all(s == "equal" for s in combo) else (0, 0)
        else:
            expected = (int(all(present_a)), int(all(present_b)))
        assert vote_camera(TagBundle(**a_kw), TagBundle(**b_kw)) == expected, combo


def test_editing_truth_table():
    fields = ("processing_software", "artist", "host_computer", "image_resources")
    vals = {"processing_software": "p", "artist": "a", "host_computer": "h", "image_resources": b"8BIM"}
    for bits in range(2**8):
        a_on = [(bits >> i) & 1 for i in range(4)]
        b_on = [(bits >> (4 + i)) & 1 for i in range(4)]
        a = TagBundle(**{f: vals[f] if on else None for f, on in zip(fields, a_on)})
        b = TagBundle(**{f: vals[f] if on else None for f, on in zip(fields, b_on)})
        assert vote_editing(a, b) == (int(any(b_on)), int(any(a_on)))


def test_date_truth_table():
    fields = ("date_time_original", "modify_date", "create_date")
    rel = ("none", "a_only", "b_only", "lt", "eq", "gt")
    for combo in itertools.product(rel, repeat=3):
        a_kw, b_kw, ab, ba = {}, {}, 0, 0
        for f, r in zip(fields, combo):
            a_kw[f], b_kw[f] = {
                "none": (None, None),
                "a_only": (D2010, None),
                "b_only": (None, D2010),
                "lt": (D2010, D2012),
                "eq": (D2012, D2012),
                "gt": (D2012, D2010),
            }[r]
            ab += r in ("lt", "eq")
            ba += r in ("gt", "eq")
        assert vote_date(TagBundle(**a_kw), TagBundle(**b_kw)) == (ab, ba), combo


def test_thumbnail_truth_table():
    for s in STATES:
        ta, tb = _pair_values(s, b"thumb-1", b"thumb-2")
        assert vote_thumbnail(TagBundle(thumbnail=ta), TagBundle(thumbnail=tb)) == _group_oracle([ta], [tb])


# --------------------------------------------------------------------------
# matrices


def golden_case():
    """Original, cropped copy, spliced copy, stripped copy."""
    original = TagBundle(
        date_time_original=D2010, create_date=D2010, modify_date=D2010, thumbnail=b"thumb-original", **GPS, **CAM
    )
    cropped = replace(original, modify_date=datetime(2010, 5, 9, 10, 0, 0), thumbnail=b"thumb-cropped")
    spliced = replace(
        original,
        modify_date=datetime(2010, 6, 1, 9, 0, 0),
        software="Photo Editor 3",
        artist="someone",
        processing_software="Photo Editor 3",
        gps_latitude=None,
        gps_latitude_ref=None,
        gps_longitude=None,
        gps_longitude_ref=None,
        thumbnail=None,
    )
    return [original, cropped, spliced, TagBundle()]


# Worked out per heuristic by hand (row = from, column = to):
#   date      A->B 3 B->A 2 | A->C 3 C->A 2 | B->C 3 C->B 2
#   location  A<->B 1 each  | A->C, B->C, A->D, B->D 1
#   camera    A<->B 1 each  | A,B vs C software differs 0 | A->D, B->D, C->D 1
#   editing   A->C, B->C, D->C 1 (only C carries editing tags)
#   thumbnail A,B differ 0  | A->C, B->C, A->D, B->D 1
GOLDEN = np.array(
    [
        [0, 5, 6, 3],
        [4, 0, 6, 3],
        [2, 2, 0, 1],
        [0, 0, 1, 0],
    ]
)


def test_golden_four_image_case():
    m = build_vote_matrix(golden_case(), ids=["A", "B", "C", "D"])
    assert np.array_equal(m.votes, GOLDEN)
    assert m.ids == ("A", "B", "C", "D")


def test_two_empty_bundles_and_too_few():
    assert not build_vote_matrix([TagBundle(), TagBundle()]).votes.any()
    with pytest.raises(TooFewImages):
        build_vote_matrix([TagBundle()])
    with pytest.raises(ConfigError):
        build_vote_matrix([TagBundle(), TagBundle()], HeuristicSet.only())


def test_date_chain_upper_triangular():
    chain = [TagBundle(date_time_original=d, modify_date=d, create_date=d) for d in (D2010, datetime(2011, 1, 1), D2012)]
    m = build_vote_matrix(chain, HeuristicSet.only("date"))
    for i, j in itertools.permutations(range(3), 2):
        assert m.votes[i, j] == (3 if i < j else 0)


def random_collection(rng, n):
    base = [random_bundle(rng, 0.7) for _ in range(3)]
    # reuse values across bundles so equality rules fire
    return [replace(base[int(rng.integers(3))], **{"modify_date": random_bundle(rng).modify_date}) for _ in range(n)]


def test_properties_random():
    rng = np.random.default_rng(21)
    names = list(HEURISTICS)
    for _ in range(40):
        bundles = random_collection(rng, int(rng.integers(2, 7)))
        full = build_vote_matrix(bundles).votes
        singles = [build_vote_matrix(bundles, HeuristicSet.only(n)).votes for n in names]
        assert np.array_equal(full, sum(singles))
        assert (full <= MAX_VOTES).all() and (full >= 0).all() and not np.diag(full).any()
        for k in range(1, len(names)):
            subset = names[:k]
            bigger = names[: k + 1]
            assert (
                build_vote_matrix(bundles, HeuristicSet.only(*bigger)).votes
                >= build_vote_matrix(bundles, HeuristicSet.only(*subset)).votes
            ).all()
        perm = rng.permutation(len(bundles))
        permuted = build_vote_matrix([bundles[p] for p in perm]).votes
        assert np.array_equal(permuted, full[np.ix_(perm, perm)])
        assert not build_vote_matrix([b.stripped() for b in bundles]).votes.any()


def test_symmetric_rules_on_identical_bundles():
    b = full_bundle()
    for name in ("location", "camera", "thumbnail"):
        m = build_vote_matrix([b, b, b], HeuristicSet.only(name)).votes
        assert np.array_equal(m, m.T)


def test_heuristic_set_parsing():
    assert HeuristicSet.parse("all") == HeuristicSet()
    assert HeuristicSet.parse("date,thumbnail").enabled() == ("date", "thumbnail")
    assert str(HeuristicSet.parse("none")) == "none"
    with pytest.raises(ConfigError):
        HeuristicSet.parse("date,colour")
