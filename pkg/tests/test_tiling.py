"""Exact tiling certificates, composition, and sandwich witnesses."""

from fractions import Fraction

import pytest

from folnerlab.folner import make_folner
from folnerlab.groups import CyclicSum, FinSet, ZPower, ZSum
from folnerlab.tiling import (
    LatticeCenters,
    ScaleIso,
    TilingCert,
    TilingOverlapError,
    centers_from_json,
    compose,
    composed_seq_check,
    condition_b_witness,
    enumerate_tiles,
    shift_iso_compatible,
    standard_cert,
    tiles_window,
    tiles_window_report,
    window_set,
)


def _z_seq(d=1):
    return make_folner(ZPower(d), "z_boxes")


# ---------------------------------------------------------------------------
# windows


def test_window_shapes():
    assert len(window_set(ZPower(1), 12)) == 25
    assert len(window_set(ZPower(2), 5)) == 121
    # sparse groups truncate to the leading coordinates
    assert len(window_set(ZSum(), 4, max_index=3)) == 9 ** 3
    assert len(window_set(CyclicSum((2,)), 8, max_index=4)) == 2 ** 8


# ---------------------------------------------------------------------------
# exact cover checks


def test_interval_cert_tiles_window():
    seq = _z_seq()
    cert = standard_cert(seq, 3)
    ok, uncovered, multi = tiles_window_report(cert, window_set(seq.group, 12))
    assert ok and not uncovered and not multi
    assert tiles_window(cert, window_set(seq.group, 30))


def test_gapped_tile_with_offset_lattice():
    z = ZPower(1)
    tile = FinSet(z, ((0,), (2,)))
    cert = TilingCert(tile, LatticeCenters(z, (4,), ((0,), (1,))))
    assert tiles_window(cert, window_set(z, 12))


def test_bad_centers_report_uncovered_points():
    z = ZPower(1)
    tile = FinSet(z, ((0,), (2,)))
    cert = TilingCert(tile, LatticeCenters(z, (3,), ((0,),)))
    ok, uncovered, multi = tiles_window_report(cert, window_set(z, 12))
    assert not ok
    assert (1,) in uncovered
    assert not multi


def test_overlapping_centers_report_multicovered_points():
    z = ZPower(1)
    tile = FinSet(z, ((0,), (1,)))
    cert = TilingCert(tile, LatticeCenters(z, (1,), ((0,),)))
    ok, uncovered, multi = tiles_window_report(cert, window_set(z, 6))
    assert not ok and not uncovered and multi


def test_lattice_cert_dimension_two():
    seq = _z_seq(2)
    cert = standard_cert(seq, 2)
    assert tiles_window(cert, window_set(seq.group, 8))


def test_diagonal_cube_cert_tiles():
    seq = make_folner(ZSum(), "zsum_boxes")
    cert = standard_cert(seq, 2)
    assert len(cert.tile) == 4
    assert tiles_window(cert, window_set(seq.group, 4, max_index=3))


def test_prefix_cert_tiles_cyclic_window():
    grp = CyclicSum((2,))
    seq = make_folner(grp, "cyclic_prefix")
    cert = standard_cert(seq, 2)
    assert tiles_window(cert, window_set(grp, 8, max_index=4))


# ---------------------------------------------------------------------------
# self-similar composition


def test_interval_composition_is_exact():
    seq = _z_seq()
    cert = standard_cert(seq, 3)
    assert compose(cert, seq.generate(5)) == seq.generate(15)


def test_prefix_composition_adds_indices():
    grp = CyclicSum((2,))
    seq = make_folner(grp, "cyclic_prefix")
    cert = standard_cert(seq, 2)
    assert compose(cert, seq.generate(3)) == seq.generate(5)


def test_mixed_periods_have_no_shift_isomorphism():
    grp = CyclicSum((2, 3, 2, 5))
    assert not shift_iso_compatible(grp, 2)
    seq = make_folner(grp, "cyclic_prefix")
    cert = standard_cert(seq, 2)
    assert cert.iso is None
    with pytest.raises(ValueError):
        compose(cert, seq.generate(1))


def test_anchored_boxes_tile_but_do_not_compose():
    seq = make_folner(ZPower(1), "z_boxes", anchors="squares")
    cert = standard_cert(seq, 3)
    assert tiles_window(cert, window_set(seq.group, 12))
    assert cert.iso is None


def test_composition_overlap_is_an_error():
    z = ZPower(1)
    tile = FinSet(z, ((0,), (1,), (2,)))
    # scale 1 is deliberately wrong: translates of the tile collide
    fake = TilingCert(tile, LatticeCenters(z, (3,)), ScaleIso(z, (1,)))
    with pytest.raises(TilingOverlapError):
        compose(fake, FinSet(z, ((0,), (1,))))


# ---------------------------------------------------------------------------
# sandwich witnesses


def test_sandwich_witness_frozen_values():
    seq = _z_seq()
    w = condition_b_witness(seq, 3, 10)
    assert (w.n1, w.n2, w.gap, w.ok) == (4, 3, Fraction(3, 10), True)
    # p divisible by m nests exactly: no gap at all
    w = condition_b_witness(seq, 3, 9)
    assert (w.n1, w.n2, w.gap, w.ok) == (3, 3, Fraction(0, 1), True)


def test_sandwich_witness_gap_shrinks_along_sequence():
    seq = _z_seq()
    gaps = [condition_b_witness(seq, 3, p).gap for p in (10, 100, 1000)]
    assert gaps == [Fraction(3, 10), Fraction(3, 100), Fraction(3, 1000)]


def test_sandwich_witness_budget_exhaustion_is_reported():
    seq = _z_seq()
    w = condition_b_witness(seq, 3, 10, search_limit=2)
    assert not w.ok and w.n1 is None and w.n2 == 2


def test_sandwich_witness_requires_self_similar_cert():
    seq = make_folner(CyclicSum((2, 3, 2, 5)), "cyclic_prefix")
    with pytest.raises(ValueError):
        condition_b_witness(seq, 2, 3)


# ---------------------------------------------------------------------------
# tile enumeration


def test_enumerated_tiles_all_tile_the_window():
    z = ZPower(1)
    window = window_set(z, 12)
    certs = enumerate_tiles(z, 4)
    assert len(certs) == 5
    for cert in certs:
        assert tiles_window(cert, window)
    assert FinSet(z, ((0,), (2,))) in [c.tile for c in certs]


def test_enumeration_without_arithmetic_progressions():
    z = ZPower(1)
    tiles = [c.tile.elems for c in enumerate_tiles(z, 4, include_arithmetic=False)]
    assert tiles == [
        ((0,),),
        ((0,), (1,)),
        ((0,), (1,), (2,)),
        ((0,), (1,), (2,), (3,)),
    ]


def test_enumeration_is_deterministic():
    grp = CyclicSum((2,))
    a = enumerate_tiles(grp, 4, max_index=3)
    b = enumerate_tiles(grp, 4, max_index=3)
    assert [c.tile for c in a] == [c.tile for c in b]
    window = window_set(grp, 6, max_index=3)
    for cert in a:
        assert tiles_window(cert, window)


# ---------------------------------------------------------------------------
# composed subsequences


def test_composed_subsequence_stays_folner_and_tiles():
    seq = _z_seq()
    c3 = standard_cert(seq, 3)
    c9 = standard_cert(seq, 9)
    T = FinSet(seq.group, ((0,), (3,), (6,)))
    rep = composed_seq_check(c3, c9, T, seq, [1, 2, 3], radius=27)
    assert rep.tile_in_subgroup and rep.partition_ok
    assert rep.defects == (Fraction(2, 3), Fraction(1, 3), Fraction(2, 9))
    assert rep.tilings == (True, True, True)
    assert rep.ok


def test_composed_subsequence_rejects_escaping_tile():
    seq = _z_seq()
    c3 = standard_cert(seq, 3)
    c9 = standard_cert(seq, 9)
    rep = composed_seq_check(c3, c9, c3.tile, seq, [1], radius=27)
    assert not rep.tile_in_subgroup
    assert not rep.ok


# ---------------------------------------------------------------------------
# serialization


def test_cert_json_shape():
    cert = standard_cert(_z_seq(), 3)
    assert cert.to_json() == {
        "tile": [[0], [1], [2]],
        "centers": {"kind": "lattice", "moduli": [3], "offsets": [[0]]},
        "self_similar": True,
    }


def test_centers_json_roundtrip():
    z = ZPower(1)
    centers = LatticeCenters(z, (4,), ((0,), (1,)))
    assert centers_from_json(z, centers.to_json()) == centers
