"""Support, confidence, co-agreement and rule distances over a preference database.

Every measure reduces to integer counts of agreeing pairs; probabilities are
formed by a single final division so results equal the correctly rounded
value of the exact rational.
"""

from __future__ import annotations

from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import numpy as np

from .errors import EmptyDatabase, TooFewRules
from .model import PreferenceDatabase, Rule, RuleSet, inverse


@dataclass(frozen=True)
class MeasureRecord:
    agree: int
    against: int
    total: int

    @property
    def support(self) -> float:
        if self.total == 0:
            raise EmptyDatabase("support is undefined on an empty database")
        return self.agree / self.total

    @property
    def confidence(self) -> float | None:
        """``None`` when the rule never fires in either direction."""
        seen = self.agree + self.against
        return self.agree / seen if seen else None


def _positions(bits: int) -> list[int]:
    out = []
    while bits:
        low = bits & -bits
        out.append(low.bit_length() - 1)
        bits ^= low
    return out


def popcount(bitmap: np.ndarray) -> int:
    return int(np.bitwise_count(bitmap).sum())


def agreement_bitmap(rule: Rule, db: PreferenceDatabase) -> np.ndarray:
    """Packed bitmap (one bit per pair) of the pairs agreeing with ``rule``."""
    t, u = db.side_bitmaps()
    plus = _positions(rule.plus.bits)
    minus = _positions(rule.minus.bits)
    ctx = _positions(rule.context.bits)
    acc = t[plus[0]].copy()
    for a in plus[1:] + ctx:
        np.bitwise_and(acc, t[a], out=acc)
    for a in minus + ctx:
        np.bitwise_and(acc, u[a], out=acc)
    for a in minus:
        np.bitwise_and(acc, ~t[a], out=acc)
    for a in plus:
        np.bitwise_and(acc, ~u[a], out=acc)
    return acc


def agreement_vector(rule: Rule, db: PreferenceDatabase) -> np.ndarray:
    from .model import unpack_bitmap

    return unpack_bitmap(agreement_bitmap(rule, db), len(db))


def measure(rule: Rule, db: PreferenceDatabase) -> MeasureRecord:
    cache = db.measure_cache
    rec = cache.get(rule)
    if rec is None:
        rec = MeasureRecord(
            popcount(agreement_bitmap(rule, db)),
            popcount(agreement_bitmap(inverse(rule), db)),
            len(db),
        )
        cache[rule] = rec
    return rec


def agree_count(rule: Rule, db: PreferenceDatabase) -> int:
    return measure(rule, db).agree


def against_count(rule: Rule, db: PreferenceDatabase) -> int:
    return measure(rule, db).against


def support(rule: Rule, db: PreferenceDatabase) -> float:
    return measure(rule, db).support


def confidence(rule: Rule, db: PreferenceDatabase) -> float | None:
    return measure(rule, db).confidence


def joint_count(r1: Rule, r2: Rule, db: PreferenceDatabase) -> int:
    if r1 == r2:
        return agree_count(r1, db)
    return popcount(agreement_bitmap(r1, db) & agreement_bitmap(r2, db))


def _require_pairs(db):
    if len(db) == 0:
        raise EmptyDatabase("preference database has no pairs")


def joint_prob(r1: Rule, r2: Rule, db: PreferenceDatabase) -> float:
    """Fraction of pairs agreeing with both rules."""
    _require_pairs(db)
    return joint_count(r1, r2, db) / len(db)


def distance(r1: Rule, r2: Rule, db: PreferenceDatabase) -> float:
    """Directed distance ``supp(r1) - P(r1 and r2)``."""
    _require_pairs(db)
    return (agree_count(r1, db) - joint_count(r1, r2, db)) / len(db)


def stack_bitmaps(rules: Sequence[Rule], db: PreferenceDatabase) -> np.ndarray:
    out = np.empty((len(rules), db.n_words), dtype=np.uint64)
    for i, r in enumerate(rules):
        out[i] = agreement_bitmap(r, db)
    return out


def coagreement_matrix(bitmaps: np.ndarray) -> np.ndarray:
    """Integer matrix ``C[i, j]`` = number of pairs agreeing with rules i and j."""
    n = len(bitmaps)
    out = np.empty((n, n), dtype=np.int64)
    for i in range(n):
        out[i] = np.bitwise_count(bitmaps & bitmaps[i]).sum(axis=1, dtype=np.int64)
    return out


_SIG_KEY = ("pair-signatures",)


def signature_view(db: PreferenceDatabase):
    """Distinct ``(t items, u items)`` codes with multiplicities, or None.

    Pairs with the same attribute sets agree with exactly the same rules, so
    counts over a database reduce to weighted counts over its signatures.
    Only used when the codes fit an int64 and there are at most a quarter as
    many signatures as pairs.
    """
    cache = db.measure_cache
    if _SIG_KEY in cache:
        return cache[_SIG_KEY]
    view = None
    m = db.universe.size
    n = len(db)
    if n and 2 * m <= 62:
        codes = db.item_matrix.astype(np.int64) @ (np.int64(1) << np.arange(m, dtype=np.int64))
        pc = (codes[db.preferred_index] << m) | codes[db.dominated_index]
        uniq, counts = np.unique(pc, return_counts=True)
        if len(uniq) * 4 <= n:
            view = (uniq >> m, uniq & ((1 << m) - 1), counts.astype(np.int64))
    cache[_SIG_KEY] = view
    return view


def _signature_agreement(rules: Sequence[Rule], view) -> np.ndarray:
    tc, uc, _ = view
    out = np.empty((len(rules), len(tc)), dtype=bool)
    for i, r in enumerate(rules):
        need_t = r.context.bits | r.plus.bits
        need_u = r.context.bits | r.minus.bits
        out[i] = (
            ((tc & need_t) == need_t)
            & ((uc & need_u) == need_u)
            & ((tc & r.minus.bits) == 0)
            & ((uc & r.plus.bits) == 0)
        )
    return out


def agree_counts(rules: Sequence[Rule], db: PreferenceDatabase) -> np.ndarray:
    view = signature_view(db)
    if view is not None:
        return _signature_agreement(rules, view).astype(np.int64) @ view[2]
    return np.array([popcount(agreement_bitmap(r, db)) for r in rules], dtype=np.int64)


def cross_coagreement(
    rows: Sequence[Rule], cols: Sequence[Rule], db: PreferenceDatabase, batch: int = 512
) -> np.ndarray:
    """``C[i, j]`` = number of pairs agreeing with both ``rows[i]`` and ``cols[j]``."""
    rows, cols = list(rows), list(cols)
    out = np.empty((len(rows), len(cols)), dtype=np.int64)
    view = signature_view(db)
    if view is not None:
        # float64 products are exact here: every entry is an integer below 2**53
        w = view[2].astype(np.float64)
        b = _signature_agreement(cols, view).astype(np.float64).T
        for s in range(0, len(rows), batch):
            a = _signature_agreement(rows[s : s + batch], view) * w
            out[s : s + batch] = np.rint(a @ b).astype(np.int64)
        return out
    col_bm = stack_bitmaps(cols, db)
    for s in range(0, len(rows), batch):
        row_bm = stack_bitmaps(rows[s : s + batch], db)
        for j in range(len(cols)):
            out[s : s + batch, j] = np.bitwise_count(row_bm & col_bm[j]).sum(axis=1, dtype=np.int64)
    return out


def distance_numerator(agree: np.ndarray, co: np.ndarray) -> int:
    """Sum over ordered pairs i != j of ``agree[i] - co[i, j]`` (pair counts)."""
    n = len(agree)
    return int((n - 1) * int(agree.sum()) - (int(co.sum()) - int(np.trace(co))))


def avg_internal_distance(rules: RuleSet | Sequence[Rule], db: PreferenceDatabase) -> float:
    rules = list(rules)
    n = len(rules)
    if n < 2:
        raise TooFewRules("average internal distance needs at least two rules")
    _require_pairs(db)
    co = cross_coagreement(rules, rules, db)
    agree = np.diag(co).copy()
    return distance_numerator(agree, co) / (len(db) * n * (n - 1))


def canonical_key(rule: Rule, support_value: float, universe) -> tuple:
    return (-support_value, *rule.slots(universe))


def canonical_sort(rules: Iterable[Rule], db: PreferenceDatabase) -> RuleSet:
    """Descending support, then lexicographic on the slot serialisation."""
    u = db.universe
    rules = list(dict.fromkeys(rules))
    return RuleSet(
        tuple(sorted(rules, key=lambda r: (-agree_count(r, db), *r.slots(u))))
    )


def canonical_sort_by(rules: Iterable[Rule], supports: dict, universe) -> RuleSet:
    rules = list(dict.fromkeys(rules))
    return RuleSet(tuple(sorted(rules, key=lambda r: canonical_key(r, supports[r], universe))))
