"""Small GF(2) helpers on Python-int bitsets."""

from __future__ import annotations

from typing import Iterable

__all__ = ["Eliminator", "EchelonBasis", "bits", "rank", "reduce_weight"]


def bits(v: int) -> list[int]:
    out = []
    while v:
        low = v & -v
        out.append(low.bit_length() - 1)
        v ^= low
    return out


class Eliminator:
    """Incremental row reduction that tracks row combinations.

    Rows are fed one at a time with a tag bit; a row that reduces to zero
    yields the combination of tags summing to zero (a left-null vector).
    """

    def __init__(self):
        self.pivots: dict[int, tuple[int, int]] = {}

    def add(self, row: int, tag: int) -> int | None:
        comb = tag
        piv = self.pivots
        while row:
            lead = row.bit_length() - 1
            hit = piv.get(lead)
            if hit is None:
                piv[lead] = (row, comb)
                return None
            row ^= hit[0]
            comb ^= hit[1]
        return comb

    @property
    def rank(self) -> int:
        return len(self.pivots)


class EchelonBasis:
    """Span membership test, pivot = highest set bit."""

    def __init__(self):
        self.pivots: dict[int, int] = {}

    def reduce(self, v: int) -> int:
        piv = self.pivots
        while v:
            lead = v.bit_length() - 1
            hit = piv.get(lead)
            if hit is None:
                return v
            v ^= hit
        return 0

    def add(self, v: int) -> bool:
        r = self.reduce(v)
        if r:
            self.pivots[r.bit_length() - 1] = r
            return True
        return False

    def __len__(self):
        return len(self.pivots)


def rank(vectors: Iterable[int]) -> int:
    e = EchelonBasis()
    for v in vectors:
        e.add(v)
    return len(e)


def reduce_weight(vectors: list[int]) -> list[int]:
    """Pairwise greedy weight reduction preserving the span."""
    vs = [v for v in vectors if v]
    changed = True
    while changed:
        changed = False
        vs.sort(key=lambda v: (v.bit_count(), v))
        for i in range(len(vs)):
            for j in range(len(vs)):
                if i != j:
                    w = vs[i] ^ vs[j]
                    if w.bit_count() < vs[i].bit_count():
                        vs[i] = w
                        changed = True
    return [v for v in vs if v]
