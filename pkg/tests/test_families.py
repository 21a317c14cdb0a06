"""Set-indexed families: the property classifier and exact decompositions."""

import math
from fractions import Fraction

import numpy as np
import pytest

from folnerlab.families import (
    GAMMAS,
    AdditiveFamily,
    AdditivePlus,
    ConcaveCardinality,
    DerivedPrime,
    DerivedPrimeM,
    MaxOfAdditives,
    MinusCardSquared,
    Truncated,
    box_core_decomposition,
    classify,
    evaluate,
    evaluate_normalized,
    family_from_json,
    folner_core,
    indicator_decomposition_check,
    indicator_identity_holds,
    translate_multiplicity,
)
from folnerlab.folner import make_folner
from folnerlab.groups import FinSet, ZPower
from folnerlab.systems import BernoulliShift, indicator_symbol, symbol_value
from folnerlab.tiling import standard_cert


def _group():
    return ZPower(1)


def _system():
    return BernoulliShift(_group(), (0.7, 0.3), seed=5)


def _seq():
    return make_folner(_group(), "z_boxes")


def _classify(fam, trials=150, seed=2024):
    return classify(fam, _group(), _system(), trials=trials, seed=seed)


# ---------------------------------------------------------------------------
# classifier ground truths


def test_additive_family_satisfies_everything_exactly():
    rep = _classify(AdditiveFamily(symbol_value()))
    for prop in rep.verdicts:
        assert rep.passed(prop), prop
    # the additive identities hold to the last bit, not just within tolerance
    for prop in ("invariant", "bi_invariant", "subadditive",
                 "strongly_subadditive", "supadditive", "strongly_supadditive"):
        assert rep.verdicts[prop].exact_equality, prop
    assert rep.declared_ok


def test_max_of_additives_is_subadditive_but_not_strongly():
    rep = _classify(MaxOfAdditives(symbol_value(), indicator_symbol(0)))
    assert rep.passed("subadditive")
    assert rep.passed("invariant")
    assert not rep.passed("strongly_subadditive")
    cex = rep.counterexample("strongly_subadditive")
    assert cex is not None and cex["lhs"] > cex["rhs"]
    assert rep.declared_ok  # the strong property was never declared


def test_sqrt_surcharge_keeps_strong_subadditivity():
    # concave cardinality surcharges preserve the submodular inequality
    rep = _classify(AdditivePlus(symbol_value(), math.sqrt, 1.0, "sqrt"))
    assert rep.passed("subadditive")
    assert rep.passed("strongly_subadditive")
    assert not rep.passed("supadditive")


def test_ceil_half_surcharge_breaks_strong_subadditivity():
    fam = AdditivePlus(symbol_value(), GAMMAS["ceil_half"], 1.0, "ceil_half")
    rep = _classify(fam)
    assert rep.passed("subadditive")
    assert not rep.passed("strongly_subadditive")
    cex = rep.counterexample("strongly_subadditive")
    assert set(cex) >= {"lhs", "rhs", "E", "F", "g", "seed"}
    assert rep.declared_ok


def test_concave_cardinality_verdicts():
    rep = _classify(ConcaveCardinality(math.sqrt, "sqrt"))
    assert rep.passed("strongly_subadditive") and rep.passed("monotone")
    assert not rep.passed("supadditive")


def test_minus_card_squared_stays_subadditive_but_unbounded_below():
    rep = _classify(MinusCardSquared(AdditiveFamily(symbol_value())))
    assert rep.passed("subadditive")
    assert rep.passed("invariant")
    assert not rep.passed("nonnegative")
    assert not rep.passed("monotone")
    assert not rep.passed("supadditive")
    assert rep.declared_ok


def test_derived_family_of_an_additive_base_vanishes():
    fam = DerivedPrime(AdditiveFamily(symbol_value()))
    system = _system()
    seq = _seq()
    rng = np.random.default_rng(3)
    for n in (2, 5, 9):
        y = system.sample_point(rng)
        assert evaluate(fam, system, seq.generate(n), y) == 0.0
    rep = _classify(fam, trials=80)
    assert all(v.passed for v in rep.verdicts.values())


def test_classifier_is_deterministic():
    fam = MaxOfAdditives(symbol_value(), indicator_symbol(0))
    a = _classify(fam, trials=100, seed=7)
    b = _classify(fam, trials=100, seed=7)
    assert {p: v.verdict for p, v in a.verdicts.items()} == {
        p: v.verdict for p, v in b.verdicts.items()
    }
    assert a.counterexample("strongly_subadditive") == b.counterexample(
        "strongly_subadditive"
    )


def test_classifier_report_json_lists_declared():
    rep = _classify(AdditiveFamily(symbol_value()), trials=30)
    d = rep.to_json()
    assert d["declared"] == sorted(rep.declared)
    assert set(d["properties"]) == set(rep.verdicts)


# ---------------------------------------------------------------------------
# tile-indexed derived families


def test_tile_derived_family_of_additive_base_vanishes():
    cert = standard_cert(_seq(), 3)
    fam = DerivedPrimeM(AdditiveFamily(symbol_value()), cert)
    rep = _classify(fam, trials=80)
    assert rep.passed("nonnegative") and rep.passed("supadditive")
    assert rep.passed("invariant")


def test_tile_derived_family_nonzero_base_is_invariant():
    cert = standard_cert(_seq(), 2)
    base = AdditivePlus(symbol_value(), math.sqrt, 1.0, "sqrt")
    fam = DerivedPrimeM(base, cert)
    rep = _classify(fam, trials=100)
    assert rep.passed("invariant")
    assert rep.passed("nonnegative")
    assert rep.passed("supadditive")
    assert rep.declared_ok


# ---------------------------------------------------------------------------
# exact translate combinatorics


def test_translate_multiplicity_frozen():
    z = _group()
    T = FinSet(z, ((0,), (1,)))
    assert translate_multiplicity(T, T) == {(0,): 1, (1,): 2, (2,): 1}


def test_folner_core_shrinks_by_tile_width():
    z = _group()
    T = FinSet(z, ((0,), (1,)))
    core = folner_core(_seq().generate(10), T)
    assert core.elems == tuple((i,) for i in range(9))


def test_box_core_decomposition_covers_exactly():
    z = _group()
    T = FinSet(z, ((0,), (1,)))
    F = _seq().generate(10)
    terms = box_core_decomposition(F, T)
    assert len(terms) == 10
    assert all(c == Fraction(1, 2) for c, _ in terms)
    # interior translates plus one wrap-around remainder pair
    assert sorted(terms[-1][1].elems) == [(0,), (9,)]
    assert indicator_identity_holds(F, terms)


def test_box_core_decomposition_transfers_to_family_values():
    fam = AdditiveFamily(symbol_value())
    system = _system()
    F = _seq().generate(10)
    terms = box_core_decomposition(F, FinSet(_group(), ((0,), (1,))))
    out = indicator_decomposition_check(fam, system, F, terms)
    assert out["ok"] and out["max_violation"] == 0.0


def test_indicator_identity_detects_bad_terms():
    z = _group()
    F = _seq().generate(4)
    bad = [(Fraction(1, 1), FinSet(z, ((0,), (1,))))]
    assert not indicator_identity_holds(F, bad)


# ---------------------------------------------------------------------------
# truncation


def test_truncation_clips_at_linear_floor():
    system = _system()
    base = AdditivePlus(symbol_value(), lambda k: -3.0 * k, 1.0, "steep_drop")
    fam = Truncated(base, 1)
    F = _seq().generate(4)
    y = system.sample_point(np.random.default_rng(0))
    raw = evaluate(base, system, F, y)
    assert raw < -4.0
    assert evaluate(fam, system, F, y) == -4.0  # clipped at -N |F|
    loose = Truncated(base, 100)
    assert evaluate(loose, system, F, y) == raw


def test_truncation_level_must_be_positive():
    with pytest.raises(ValueError):
        Truncated(AdditiveFamily(symbol_value()), 0)


# ---------------------------------------------------------------------------
# evaluation and serialization


def test_normalized_evaluation():
    system = _system()
    fam = AdditiveFamily(symbol_value())
    F = _seq().generate(8)
    y = system.sample_point(np.random.default_rng(1))
    assert evaluate_normalized(fam, system, F, y) == evaluate(fam, system, F, y) / 8
    with pytest.raises(ValueError):
        evaluate_normalized(fam, system, FinSet(_group(), ()), y)


def test_family_json_roundtrip():
    cert = standard_cert(_seq(), 3)
    fams = [
        AdditiveFamily(symbol_value()),
        AdditivePlus(indicator_symbol(1), math.sqrt, 0.5, "sqrt"),
        ConcaveCardinality(GAMMAS["log1p"], "log1p"),
        MaxOfAdditives(symbol_value(), indicator_symbol(0)),
        Truncated(AdditiveFamily(symbol_value()), 2),
        DerivedPrime(AdditiveFamily(symbol_value())),
        MinusCardSquared(AdditiveFamily(symbol_value())),
        DerivedPrimeM(AdditiveFamily(symbol_value()), cert),
    ]
    for fam in fams:
        back = family_from_json(fam.to_json(), cert=cert)
        assert back.name == fam.name
        assert back.declared == fam.declared


def test_family_json_errors():
    with pytest.raises(ValueError):
        family_from_json({"kind": "no_such_family"})
    d = DerivedPrimeM(AdditiveFamily(symbol_value()),
                      standard_cert(_seq(), 3)).to_json()
    with pytest.raises(ValueError):
        family_from_json(d, cert=None)
