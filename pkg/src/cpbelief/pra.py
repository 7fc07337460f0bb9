"""Greedy preference-rule aggregation (PRA).

Starting from the most distant pair of rules, PRA keeps adding the rule that
maximises the average internal distance of the growing set, for as long as
that distance stays strictly above ``mindis``.

All distances are tracked as integer pair counts: for a set ``SA`` of ``k``
rules the numerator ``sum_{i != j} (agree_i - co_ij)`` is updated in O(1) per
candidate from per-candidate column sums, so every comparison is exact and
matches the naive formula bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyDatabase, EmptyRuleset, TooFewRules
from .measures import canonical_sort, cross_coagreement, support
from .model import PreferenceDatabase, Rule, RuleSet

AUTO = "auto"


@dataclass(frozen=True)
class PraConfig:
    mindis: float | str = AUTO
    auto_factor: float = 1.5

    def __post_init__(self):
        if self.mindis != AUTO and (not isinstance(self.mindis, (int, float)) or self.mindis < 0):
            raise ValueError(f"mindis must be a non-negative number or {AUTO!r}")


@dataclass(frozen=True)
class PraTrace:
    mindis: float
    seed_pair: tuple[Rule, Rule] | None = None
    seed_avgdis: float | None = None
    additions: tuple[tuple[Rule, float], ...] = field(default=())

    @property
    def final_avgdis(self) -> float | None:
        if self.additions:
            return self.additions[-1][1]
        return self.seed_avgdis

    @property
    def empty(self) -> bool:
        return self.seed_pair is None

    def to_dict(self, universe) -> dict:
        return {
            "mindis": self.mindis,
            "seed_pair": [r.text(universe) for r in self.seed_pair] if self.seed_pair else None,
            "seed_avgdis": self.seed_avgdis,
            "additions": [
                {"rule": r.text(universe), "avgdis": d} for r, d in self.additions
            ],
            "final_avgdis": self.final_avgdis,
            "no_seed": self.empty,
        }


def resolve_mindis(rules: RuleSet, db: PreferenceDatabase, cfg: PraConfig) -> float:
    if len(rules) == 0:
        raise EmptyRuleset("cannot resolve mindis for an empty rule set")
    if cfg.mindis != AUTO:
        return float(cfg.mindis)
    return cfg.auto_factor * sum(support(r, db) for r in rules) / len(rules)


def pra_aggregate(
    rules: RuleSet, db: PreferenceDatabase, cfg: PraConfig = PraConfig()
) -> tuple[RuleSet, PraTrace]:
    if len(rules) < 2:
        raise TooFewRules("PRA needs at least two rules")
    if len(db) == 0:
        raise EmptyDatabase("PRA needs a non-empty preference database")
    mindis = resolve_mindis(rules, db, cfg)
    ordered = canonical_sort(rules, db).rules
    n_pairs = len(db)
    co = cross_coagreement(ordered, ordered, db)
    agree = np.diag(co).copy()
    n = len(ordered)

    # seed: ordered scan over i < j keeping the first strict maximum
    pair_num = agree[:, None] + agree[None, :] - 2 * co
    upper = np.triu(np.ones((n, n), dtype=bool), k=1)
    scores = np.where(upper, pair_num, -1)
    flat = int(np.argmax(scores))
    i, j = divmod(flat, n)
    seed_avg = int(scores[i, j]) / (2 * n_pairs)
    if not scores[i, j] >= 0 or not seed_avg > mindis:
        return RuleSet(), PraTrace(mindis)

    chosen = [i, j]
    in_set = np.zeros(n, dtype=bool)
    in_set[chosen] = True
    num = int(pair_num[i, j])
    agree_sum = int(agree[i] + agree[j])
    colsum = co[i] + co[j]
    additions = []
    while not in_set.all():
        k = len(chosen)
        cand_num = num + agree_sum + k * agree - 2 * colsum
        cand_num = np.where(in_set, np.iinfo(np.int64).min, cand_num)
        best = int(np.argmax(cand_num))
        best_avg = int(cand_num[best]) / (n_pairs * (k + 1) * k)
        if not best_avg > mindis:
            break
        chosen.append(best)
        in_set[best] = True
        num = int(cand_num[best])
        agree_sum += int(agree[best])
        colsum = colsum + co[best]
        additions.append((ordered[best], best_avg))

    kept = RuleSet(tuple(ordered[x] for x in sorted(chosen)))
    trace = PraTrace(mindis, (ordered[i], ordered[j]), seed_avg, tuple(additions))
    return kept, trace
