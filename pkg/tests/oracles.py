"""Independent reference implementations used as test oracles.

Everything here works on plain Python sets of attribute names and exact
Fractions, sharing no code with the bitmap implementations under test.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np


class ORule:
    """Rule as three frozensets of names."""

    __slots__ = ("plus", "minus", "ctx")

    def __init__(self, plus, minus, ctx=()):
        self.plus, self.minus, self.ctx = frozenset(plus), frozenset(minus), frozenset(ctx)

    def key(self):
        return (tuple(sorted(self.plus)), tuple(sorted(self.minus)), tuple(sorted(self.ctx)))

    def __eq__(self, other):
        return self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    def __repr__(self):
        ctx = ",".join(sorted(self.ctx)) or "NULL"
        return f"{','.join(sorted(self.plus))} > {','.join(sorted(self.minus))} | {ctx}"


def of(rule, universe) -> ORule:
    names = universe.names
    return ORule(
        [names[i] for i in rule.plus.positions()],
        [names[i] for i in rule.minus.positions()],
        [names[i] for i in rule.context.positions()],
    )


def agrees(r: ORule, t: frozenset, u: frozenset) -> bool:
    return (
        r.ctx <= t
        and r.ctx <= u
        and r.plus <= t
        and r.minus <= u
        and not (r.minus & t)
        and not (r.plus & u)
    )


def inverse(r: ORule) -> ORule:
    return ORule(r.minus, r.plus, r.ctx)


def agree_count(r, pairs):
    return sum(agrees(r, t, u) for t, u in pairs)


def support(r, pairs) -> Fraction:
    return Fraction(agree_count(r, pairs), len(pairs))


def confidence(r, pairs):
    a = agree_count(r, pairs)
    b = agree_count(inverse(r), pairs)
    return None if a + b == 0 else Fraction(a, a + b)


def joint(r1, r2, pairs) -> Fraction:
    return Fraction(sum(agrees(r1, t, u) and agrees(r2, t, u) for t, u in pairs), len(pairs))


def distance(r1, r2, pairs) -> Fraction:
    return support(r1, pairs) - joint(r1, r2, pairs)


def avgdis(rules, pairs) -> Fraction:
    n = len(rules)
    total = Fraction(0)
    for i in range(n):
        for j in range(n):
            if i != j:
                total += distance(rules[i], rules[j], pairs)
    return total / (n * (n - 1))


def _subsets(items, max_len, min_len=0):
    items = sorted(items)
    for k in range(min_len, min(max_len, len(items)) + 1):
        yield from itertools.combinations(items, k)


def mine_pair_driven(pairs, min_support, min_confidence, max_ctx, max_side):
    """Candidates generated pair by pair, then filtered on exact measures."""
    cands = set()
    for t, u in pairs:
        for p in _subsets(t - u, max_side, 1):
            for m in _subsets(u - t, max_side, 1):
                for x in _subsets(t & u, max_ctx):
                    cands.add(ORule(p, m, x))
    out = set()
    for r in cands:
        s = support(r, pairs)
        c = confidence(r, pairs)
        if s >= Fraction(min_support) and c is not None and c >= Fraction(min_confidence):
            out.add(r)
    return out


def canonical(rules, pairs):
    def key(r):
        ctx = ",".join(sorted(r.ctx)) or "NULL"
        return (-agree_count(r, pairs), ",".join(sorted(r.plus)), ",".join(sorted(r.minus)), ctx)

    return sorted(rules, key=key)


def pra_naive(rules, pairs, mindis):
    """Greedy aggregation recomputing avgdis from scratch at every step."""
    order = canonical(rules, pairs)
    best, seed = None, None
    for i in range(len(order)):
        for j in range(i + 1, len(order)):
            d = avgdis([order[i], order[j]], pairs)
            if d > mindis and (best is None or d > best):
                best, seed = d, [order[i], order[j]]
    if seed is None:
        return [], []
    chosen = list(seed)
    steps = []
    while len(chosen) < len(order):
        cand_best, cand = None, None
        for r in order:
            if r in chosen:
                continue
            d = avgdis(chosen + [r], pairs)
            if cand_best is None or d > cand_best:
                cand_best, cand = d, r
        if not cand_best > mindis:
            break
        chosen.append(cand)
        steps.append((cand, cand_best))
    return chosen, steps


def indicator(r, pairs) -> np.ndarray:
    return np.array([agrees(r, t, u) for t, u in pairs], dtype=float)


def pearson_abs(x: np.ndarray, y: np.ndarray, ddof: int = 0) -> float:
    if x.std() == 0 or y.std() == 0:
        return 0.0
    cov = ((x - x.mean()) * (y - y.mean())).sum() / (len(x) - ddof)
    return abs(cov / (x.std(ddof=ddof) * y.std(ddof=ddof)))


def plain_cosine(r1: ORule, r2: ORule, names) -> float:
    def vec(r):
        return np.array(
            [n in r.plus for n in names] + [n in r.minus for n in names] + [n in r.ctx for n in names],
            dtype=float,
        )

    a, b = vec(r1), vec(r2)
    return float(a @ b / (math.sqrt(a @ a) * math.sqrt(b @ b)))


def verdicts(rules, pairs):
    out = []
    for t, u in pairs:
        f = any(agrees(r, t, u) for r in rules)
        b = any(agrees(r, u, t) for r in rules)
        out.append("Both" if f and b else "Agree" if f else "Reverse" if b else "None")
    return out
