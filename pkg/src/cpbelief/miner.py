"""Contextual preference rule mining under support/confidence thresholds.

A rule ``P > M | X`` is generated by a pair ``<t, u>`` exactly when
``X ⊆ t∩u``, ``P ⊆ t∖u`` and ``M ⊆ u∖t``, i.e. when the pair agrees with it.
The candidate pool (union over pairs) is therefore the set of size-capped
rules with at least one agreeing pair.  Instead of walking pairs one by one
the search runs level-wise over per-attribute pair bitmaps, pruning on the
anti-monotonicity of the agree count in every slot.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import EmptyDatabase, ModelError
from .measures import MeasureRecord
from .model import Itemset, PreferenceDatabase, Rule, RuleSet

log = logging.getLogger(__name__)

_SMALL_DB = 4096  # pairs; below this bitmaps are Python ints


@dataclass(frozen=True)
class MinerConfig:
    min_support: float = 0.01
    min_confidence: float = 0.7
    max_context_len: int = 2
    max_side_len: int = 1

    def __post_init__(self):
        if not 0 < self.min_support:
            raise ModelError("min_support must be positive")
        if not 0 < self.min_confidence <= 1:
            raise ModelError("min_confidence must lie in (0, 1]")
        if self.max_side_len < 1 or self.max_context_len < 0:
            raise ModelError("max_side_len >= 1 and max_context_len >= 0 required")


def _frequent_sides(atoms, frequent, max_len):
    """Itemsets (as sorted position tuples) whose AND-ed atom bitmap is frequent."""
    out = []
    level = []
    for a in range(len(atoms)):
        if frequent(atoms[a]):
            level.append(((a,), atoms[a]))
    out.extend(level)
    for _ in range(1, max_len):
        nxt = []
        for items, bm in level:
            for a in range(items[-1] + 1, len(atoms)):
                cand = bm & atoms[a]
                if frequent(cand):
                    nxt.append((items + (a,), cand))
        out.extend(nxt)
        level = nxt
    return out


def _mask(positions):
    bits = 0
    for p in positions:
        bits |= 1 << p
    return bits


def enumerate_rules(db: PreferenceDatabase, cfg: MinerConfig) -> RuleSet:
    n = len(db)
    if n == 0:
        raise EmptyDatabase("cannot mine an empty preference database")
    m = db.universe.size
    t, u = db.side_bitmaps()
    if n <= _SMALL_DB:
        # per-call numpy overhead dominates on short bitmaps; big ints are faster
        t = [int.from_bytes(row.tobytes(), "little") for row in t]
        u = [int.from_bytes(row.tobytes(), "little") for row in u]
        only_t = [a & ~b for a, b in zip(t, u)]
        only_u = [b & ~a for a, b in zip(t, u)]
        both = [a & b for a, b in zip(t, u)]

        def count(bm):
            return bm.bit_count()

    else:
        only_t = t & ~u
        only_u = u & ~t
        both = t & u

        def count(bm):
            return int(np.bitwise_count(bm).sum())

    # thresholds compared exactly against the float's rational value
    sup = Fraction(cfg.min_support)
    min_count = max(1, math.ceil(sup * n))
    conf_num, conf_den = Fraction(cfg.min_confidence).as_integer_ratio()

    def frequent(bm):
        return count(bm) >= min_count

    plus_sides = _frequent_sides(only_t, frequent, cfg.max_side_len)
    minus_sides = _frequent_sides(only_u, frequent, cfg.max_side_len)

    found = []  # (agree, rule)

    def inverse_count(p_items, m_items, ctx):
        # inverse rule M > P | X: M only in t, P only in u, X in both
        bm = _and_all(only_t, m_items)
        bm = bm & _and_all(only_u, p_items)
        for x in ctx:
            bm = bm & both[x]
        return count(bm)

    def emit(p_items, m_items, ctx, agree):
        against = inverse_count(p_items, m_items, ctx)
        if agree * conf_den < conf_num * (agree + against):
            return
        rule = Rule(
            Itemset(_mask(p_items), m),
            Itemset(_mask(m_items), m),
            Itemset(_mask(ctx), m),
        )
        db.measure_cache.setdefault(rule, MeasureRecord(agree, against, n))
        found.append((agree, rule))

    def grow(p_items, m_items, ctx, bm, used):
        if len(ctx) >= cfg.max_context_len:
            return
        start = ctx[-1] + 1 if ctx else 0
        for x in range(start, m):
            if x in used:
                continue
            cand = bm & both[x]
            c = count(cand)
            if c >= min_count:
                new_ctx = ctx + (x,)
                emit(p_items, m_items, new_ctx, c)
                grow(p_items, m_items, new_ctx, cand, used)

    for p_items, p_bm in plus_sides:
        for m_items, m_bm in minus_sides:
            if set(p_items) & set(m_items):
                continue
            bm = p_bm & m_bm
            c = count(bm)
            if c < min_count:
                continue
            emit(p_items, m_items, (), c)
            grow(p_items, m_items, (), bm, set(p_items) | set(m_items))

    u_ = db.universe
    found.sort(key=lambda ar: (-ar[0], *ar[1].slots(u_)))
    log.debug("mined %d rules from %d pairs", len(found), n)
    return RuleSet(tuple(r for _, r in found))


def _and_all(atoms, items):
    bm = atoms[items[0]]
    for a in items[1:]:
        bm = bm & atoms[a]
    return bm


def mine_consensus(merged: PreferenceDatabase, cfg: MinerConfig) -> RuleSet:
    """Consensus candidate pool: the rules of the merged database under the
    (high) consensus thresholds."""
    return enumerate_rules(merged, cfg)
