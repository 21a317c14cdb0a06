"""Folner sequences for the supported groups, with exact invariance diagnostics.

All ratios are `fractions.Fraction`, computed by explicit enumeration (no
closed forms), so the Tempelman / tempered witnesses reported here are exact
integers divided by exact integers.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence

from .groups import (
    BudgetError,
    CyclicSum,
    FinSet,
    Group,
    ZPower,
    ZSum,
    _prefix_set_cyclic,
    finset,
    inverse_set,
    product_count,
    product_set,
    symdiff,
    translate_left,
    zsum_box,
)

_CARD_CAP = 5_000_000


@dataclass(frozen=True)
class FolnerSeq:
    """A named Folner sequence; ``generate`` is exact and deterministic.

    Kinds:
      * ``z_boxes``       on ZPower: F_n = [0,n)^d, optionally translated by
                          an anchor (``anchors="squares"`` uses a_n = n^2 e_1).
      * ``cyclic_prefix`` on CyclicSum: F_n = all elements supported on the
                          first n coordinates.
      * ``zsum_boxes``    on ZSum: F_shape for tuple indices; an integer index
                          n means the diagonal shape (n, ..., n) of length n.
      * ``explicit``      a caller-provided list of finite sets.
      * ``subsequence``   subsets of a base sequence (see subsequence_folner).
    """

    group: Group
    seq_kind: str
    anchors: Optional[str] = None
    sets: Optional[tuple] = None
    base: Optional["FolnerSeq"] = None
    subset_fn: Optional[Callable] = field(default=None, compare=False)

    def generate(self, index) -> FinSet:
        if self.seq_kind == "z_boxes":
            return self._z_box(index)
        if self.seq_kind == "cyclic_prefix":
            n = int(index)
            if n < 1:
                raise ValueError("index must be >= 1")
            card = 1
            for i in range(n):
                card *= self.group.period(i)
                if card > _CARD_CAP:
                    raise BudgetError("prefix set too large")
            return _prefix_set_cyclic(self.group, n)
        if self.seq_kind == "zsum_boxes":
            shape = self._zsum_shape(index)
            card = 1
            for s in shape:
                card *= s
                if card > _CARD_CAP:
                    raise BudgetError("zsum box too large")
            return zsum_box(self.group, shape)
        if self.seq_kind == "explicit":
            n = int(index)
            if not 1 <= n <= len(self.sets):
                raise ValueError(f"index {n} out of range for explicit sequence")
            return self.sets[n - 1]
        if self.seq_kind == "subsequence":
            base_set = self.base.generate(index)
            sub = self.subset_fn(index, base_set)
            if sub.is_empty:
                raise ValueError("subsequence sets must be non-empty")
            if not set(sub.elems) <= set(base_set.elems):
                raise ValueError("subsequence sets must be subsets of the base sets")
            return sub
        raise ValueError(f"unknown sequence kind {self.seq_kind!r}")

    def _z_box(self, index) -> FinSet:
        n = int(index)
        if n < 1:
            raise ValueError("index must be >= 1")
        d = self.group.d
        if n ** d > _CARD_CAP:
            raise BudgetError("box too large")
        import itertools

        elems = tuple(sorted(itertools.product(range(n), repeat=d)))
        box = FinSet(self.group, elems)
        if self.anchors == "squares":
            shift = [0] * d
            shift[0] = n * n
            box = translate_left(tuple(shift), box)
        elif self.anchors is not None:
            raise ValueError(f"unknown anchor rule {self.anchors!r}")
        return box

    def _zsum_shape(self, index) -> tuple:
        if isinstance(index, (tuple, list)):
            shape = tuple(int(s) for s in index)
        else:
            n = int(index)
            shape = (n,) * n
        if not shape or any(s < 1 for s in shape):
            raise ValueError("zsum shape entries must be >= 1")
        return shape

    def to_json(self) -> dict:
        d = {"kind": self.seq_kind}
        if self.anchors:
            d["anchors"] = self.anchors
        return d


def make_folner(group: Group, seq_kind: str, anchors: Optional[str] = None,
                sets: Optional[Sequence[FinSet]] = None) -> FolnerSeq:
    if seq_kind == "z_boxes" and not isinstance(group, ZPower):
        raise ValueError("z_boxes requires a ZPower group")
    if seq_kind == "cyclic_prefix" and not isinstance(group, CyclicSum):
        raise ValueError("cyclic_prefix requires a CyclicSum group")
    if seq_kind == "zsum_boxes" and not isinstance(group, ZSum):
        raise ValueError("zsum_boxes requires a ZSum group")
    if seq_kind == "explicit":
        if not sets:
            raise ValueError("explicit sequence needs sets")
        return FolnerSeq(group, "explicit", sets=tuple(sets))
    return FolnerSeq(group, seq_kind, anchors=anchors)


def subsequence_folner(base: FolnerSeq, subset_fn: Callable) -> FolnerSeq:
    """Wrap a sequence by taking validated non-empty subsets E_n <= F_n."""
    return FolnerSeq(base.group, "subsequence", base=base, subset_fn=subset_fn)


# ---------------------------------------------------------------------------
# Exact diagnostics


def folner_defect(K: FinSet, F: FinSet) -> Fraction:
    """|F triangle KF| / |F|, exact."""
    if F.is_empty:
        raise ValueError("F must be non-empty")
    KF = product_set(K, F)
    return Fraction(len(symdiff(F, KF)), len(F))


def invariance_check(A: FinSet, K: FinSet, delta) -> tuple:
    """(K, delta)-invariance: |K^{-1}A  intersect  K^{-1}(complement A)| < delta |A|.

    Returns (ok, exact boundary ratio).  The intersection is finite because it
    is contained in K^{-1}A; membership is decided element by element.
    """
    if A.is_empty:
        raise ValueError("A must be non-empty")
    grp = A.group
    a_set = set(A.elems)
    boundary = 0
    for x in product_set(inverse_set(K), A).elems:
        if any(grp.mul(k, x) not in a_set for k in K.elems):
            boundary += 1
    ratio = Fraction(boundary, len(A))
    return ratio < Fraction(delta), ratio


@dataclass(frozen=True)
class GrowthReport:
    """Ratios |union_{k<=m} F_k^{-1} . target_m| / |target_m| over an index range."""

    ratios: tuple
    witness: Fraction
    ok: bool = True


def _inv_union_ratios(seq: FolnerSeq, upto: int, target_offset: int) -> list:
    inv_union = set()
    ratios = []
    for n in range(1, upto + 1):
        inv_union |= set(inverse_set(seq.generate(n)).elems)
        t = n + target_offset
        target = seq.generate(t)
        size = product_count(finset(seq.group, inv_union), target)
        ratios.append(Fraction(size, len(target)))
    return ratios


def tempelman_ratio(seq: FolnerSeq, n: int) -> Fraction:
    """|union_{k<=n} F_k^{-1} F_n| / |F_n|, exact."""
    return _inv_union_ratios(seq, n, 0)[-1]


def tempelman_report(seq: FolnerSeq, upto: int) -> GrowthReport:
    ratios = tuple(_inv_union_ratios(seq, upto, 0))
    return GrowthReport(ratios=ratios, witness=max(ratios),
                        ok=not ratios_look_divergent(ratios))


def tempelman_bound(seq: FolnerSeq, upto: int) -> Fraction:
    return tempelman_report(seq, upto).witness


def tempered_report(seq: FolnerSeq, upto: int) -> GrowthReport:
    """Ratios |union_{k<=n} F_k^{-1} F_{n+1}| / |F_{n+1}| for n < upto.

    The witness is exact at this budget; no claim is made beyond it.
    """
    if upto < 2:
        raise ValueError("need at least two indices")
    ratios = tuple(_inv_union_ratios(seq, upto - 1, 1))
    return GrowthReport(ratios=ratios, witness=max(ratios),
                        ok=not ratios_look_divergent(ratios))


def ratios_look_divergent(ratios) -> bool:
    """Heuristic divergence test for growth-ratio sequences.

    A plateauing sequence (bounded constant exists) has shrinking increments;
    exponential blow-up has growing ones.  Flag divergence only when the
    increments strictly increase over the last three steps and the final
    ratio has at least doubled -- finite data can never prove boundedness,
    so the witness is reported either way.
    """
    rs = [Fraction(r) for r in ratios]
    if len(rs) < 4:
        return False
    inc = [rs[i + 1] - rs[i] for i in range(len(rs) - 1)]
    growing = all(inc[i + 1] > inc[i] > 0 for i in range(len(inc) - 3, len(inc) - 1))
    return growing and rs[-1] > 2 * rs[0]


def tempered_check(seq: FolnerSeq, upto: int) -> tuple:
    """(ok, witness M): exact ratios up to the budget plus the divergence
    heuristic; ok=False means the sequence looks non-tempered."""
    rep = tempered_report(seq, upto)
    return (not ratios_look_divergent(rep.ratios), rep.witness)


def defect_profile(seq: FolnerSeq, indices, gens=None) -> list:
    """Per-generator defects |F triangle gF|/|F| along the sequence."""
    gens = list(gens) if gens is not None else seq.group.generators()
    out = []
    for n in indices:
        F = seq.generate(n)
        row = {"index": n, "size": len(F)}
        for i, g in enumerate(gens):
            row[f"defect_{i}"] = folner_defect(finset(seq.group, [g]), F)
        out.append(row)
    return out
