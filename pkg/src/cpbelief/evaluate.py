"""Recall, precision, F1 and favoritism of rule sets on held-out pairs, plus
the Top-K comparison harness."""

from __future__ import annotations

import enum
import math
import zlib
from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from .belief import RankKey, ScoredRule, rank_topk
from .errors import EmptyDatabase, MissingSplit
from .measures import agreement_bitmap
from .model import (
    PreferenceDatabase,
    PreferencePair,
    Rule,
    inverse,
    rule_agrees,
    unpack_bitmap,
)


class Verdict(str, enum.Enum):
    AGREE = "Agree"
    REVERSE = "Reverse"
    BOTH = "Both"
    NONE = "None"


def ruleset_predicts(rules: Sequence[Rule], pair: PreferencePair, db: PreferenceDatabase) -> Verdict:
    fwd = any(rule_agrees(r, pair, db) for r in rules)
    swapped = PreferencePair(pair[1], pair[0])
    rev = any(rule_agrees(r, swapped, db) for r in rules)
    if fwd and rev:
        return Verdict.BOTH
    if fwd:
        return Verdict.AGREE
    if rev:
        return Verdict.REVERSE
    return Verdict.NONE


def coverage(rules: Sequence[Rule], db: PreferenceDatabase) -> tuple[np.ndarray, np.ndarray]:
    """Boolean masks over pairs: (some rule agrees, some rule agrees with the swap)."""
    fwd = np.zeros(db.n_words, dtype=np.uint64)
    rev = np.zeros(db.n_words, dtype=np.uint64)
    if len(db):
        for r in rules:
            fwd |= agreement_bitmap(r, db)
            rev |= agreement_bitmap(inverse(r), db)
    n = len(db)
    return unpack_bitmap(fwd, n), unpack_bitmap(rev, n)


@dataclass(frozen=True)
class EvalReport:
    recall: float
    precision: float | None
    f1: float | None
    favoritism: float | None
    covered_agree: int
    covered_any: int
    total: int

    @property
    def standard_f1(self) -> float | None:
        if not self.covered_any:
            return None
        return 2 * self.covered_agree / (self.total + self.covered_any)


def f1(precision: float | None, recall: float | None) -> float | None:
    """``P*R / (P+R)``, which is half the usual harmonic-mean F1."""
    if precision is None or recall is None or precision + recall == 0:
        return None
    return precision * recall / (precision + recall)


def standard_f1(precision: float | None, recall: float | None) -> float | None:
    v = f1(precision, recall)
    return None if v is None else 2 * v


def evaluate(rules: Sequence[Rule], db: PreferenceDatabase) -> EvalReport:
    n = len(db)
    if n == 0:
        raise EmptyDatabase("cannot evaluate on an empty database")
    fwd, rev = coverage(list(rules), db)
    agree = int(fwd.sum())
    anyc = int((fwd | rev).sum())
    rec = agree / n
    prec = agree / anyc if anyc else None
    # P*R/(P+R) with P = a/c and R = a/n simplifies to a/(n+c)
    half_f1 = agree / (n + anyc) if anyc else None
    fav = None
    if agree:
        fav = mean_rating_gap(db, fwd)
    return EvalReport(rec, prec, half_f1, fav, agree, anyc, n)


def _decimal_scale(ratings: np.ndarray, max_digits: int = 6) -> int | None:
    for k in range(max_digits + 1):
        scaled = ratings * 10**k
        if np.all(np.abs(scaled - np.round(scaled)) < 1e-6):
            return k
    return None


def mean_rating_gap(db: PreferenceDatabase, mask: np.ndarray) -> float:
    """Mean |t.rating - u.rating| over the masked pairs.

    Ratings with a short decimal expansion are summed as scaled integers so
    the mean is the correctly rounded exact value.
    """
    r = db.ratings
    a = r[db.preferred_index[mask]]
    b = r[db.dominated_index[mask]]
    k = _decimal_scale(np.concatenate([a, b]))
    if k is None:
        return math.fsum(np.abs(a - b).tolist()) / len(a)
    scale = 10**k
    ai = np.round(a * scale).astype(np.int64)
    bi = np.round(b * scale).astype(np.int64)
    return int(np.abs(ai - bi).sum()) / (len(a) * scale)


def recall(rules, db) -> float:
    return evaluate(rules, db).recall


def precision(rules, db) -> float | None:
    n = len(db)
    if n == 0:
        raise EmptyDatabase("cannot evaluate on an empty database")
    return evaluate(rules, db).precision


def favoritism(rules, db) -> float | None:
    return evaluate(rules, db).favoritism


RAW = "raw"
EXPERIMENT_KEYS = (RankKey.ETA.value, RankKey.BELIEF.value, RankKey.ABS_DEVIATION.value, RAW)


def raw_order(scored: Sequence[ScoredRule], user: str, seed: int) -> list[ScoredRule]:
    """Unsorted baseline: a seeded permutation, reproducible per user."""
    rng = np.random.default_rng([seed, zlib.crc32(str(user).encode())])
    return [scored[i] for i in rng.permutation(len(scored))]


def select(scored: Sequence[ScoredRule], key: str, k: int, user: str = "", seed: int = 0) -> list[ScoredRule]:
    if key == RAW:
        return raw_order(scored, user, seed)[:k]
    return rank_topk(scored, k, key)


def _mean(values):
    vals = [v for v in values if v is not None]
    return math.fsum(vals) / len(vals) if vals else float("nan")


def topk_experiment(
    scored_per_user: Mapping[str, Sequence[ScoredRule]],
    ks: Sequence[int],
    test: Mapping[str, PreferenceDatabase],
    train: Mapping[str, PreferenceDatabase] | None = None,
    seed: int = 0,
    keys: Sequence[str] = EXPERIMENT_KEYS,
    standard: bool = False,
) -> list[tuple[str, int, str, float]]:
    """Macro-averaged Top-K metrics per ranking key.

    Recall/precision/F1 come from each user's test pairs; favoritism from the
    training pairs when ``train`` is given.  Users whose metric is undefined
    (nothing covered) are left out of that metric's mean.
    """
    users = sorted(scored_per_user)
    for u in users:
        if u not in test or (train is not None and u not in train):
            raise MissingSplit(f"no held-out split for user {u!r}")
    rows = []
    for key in keys:
        for k in ks:
            acc = {"recall": [], "precision": [], "f1": [], "favoritism": []}
            if standard:
                acc["f1_standard"] = []
            for u in users:
                top = [s.rule for s in select(scored_per_user[u], key, k, u, seed)]
                if len(test[u]) == 0:
                    continue
                rep = evaluate(top, test[u])
                acc["recall"].append(rep.recall)
                acc["precision"].append(rep.precision)
                acc["f1"].append(rep.f1)
                if standard:
                    acc["f1_standard"].append(rep.standard_f1)
                fav_db = train[u] if train is not None else test[u]
                acc["favoritism"].append(evaluate(top, fav_db).favoritism if len(fav_db) else None)
            for metric, vals in acc.items():
                rows.append((key, k, metric, _mean(vals)))
    return rows
