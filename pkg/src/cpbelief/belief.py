"""Belief system, rule-to-rule belief functions and interestingness scoring.

A rule is scored against a belief system ``S`` (the aggregated consensus
rules) through a pluggable belief function ``f``:

* belief     = max_i f(r, s_i)
* deviation  = mean_i f(r, s_i) - 1
* eta        = belief when belief >= |deviation|, otherwise deviation

New belief functions are added by subclassing :class:`BeliefFunction` and
registering them with :func:`register`; the scoring code never changes.
"""

from __future__ import annotations

import enum
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BeliefError,
    DatabaseTooSmall,
    EmptySystem,
    UnknownBeliefFunction,
    ZeroNorm,
)
from .measures import (
    agree_counts,
    agreement_bitmap,
    cross_coagreement,
    measure,
    stack_bitmaps,
)
from .model import PreferenceDatabase, Rule, RuleSet, _bits_to_bool

DEFAULT_WEIGHTS = (1.2, 1.5, 0.6)
DEFAULT_EMPTY_CONTEXT_WEIGHTS = (1.5, 1.5, 0.0)


def cosine_belief(
    r1: Rule,
    r2: Rule,
    weights: Sequence[float] = DEFAULT_WEIGHTS,
    empty_context_weights: Sequence[float] | None = DEFAULT_EMPTY_CONTEXT_WEIGHTS,
) -> float:
    """Slot-weighted cosine similarity of two rule bit-vectors.

    ``empty_context_weights`` replaces ``weights`` when both contexts are
    empty; pass ``None`` to always use ``weights``.  The result is not
    renormalised, so self-similarity equals ``(k1*|+| + k2*|-| + k3*|X|) / |r|``.
    """
    n1 = r1.bits.bit_count()
    n2 = r2.bits.bit_count()
    if n1 == 0 or n2 == 0:
        raise ZeroNorm("rule without set bits")
    if empty_context_weights is not None and not r1.context and not r2.context:
        k1, k2, k3 = empty_context_weights
    else:
        k1, k2, k3 = weights
    num = (
        k1 * (r1.plus.bits & r2.plus.bits).bit_count()
        + k2 * (r1.minus.bits & r2.minus.bits).bit_count()
        + k3 * (r1.context.bits & r2.context.bits).bit_count()
    )
    return num / (math.sqrt(n1) * math.sqrt(n2))


def correlation_from_counts(n: int, a1: int, a2: int, both: int) -> float:
    """|Pearson| of two 0/1 indicator vectors given their counts.

    Zero when either vector is constant.
    """
    v1 = a1 * (n - a1)
    v2 = a2 * (n - a2)
    if v1 == 0 or v2 == 0:
        return 0.0
    num = abs(n * both - a1 * a2)
    d2 = v1 * v2
    root = math.isqrt(d2)
    den = root if root * root == d2 else math.sqrt(d2)
    return min(1.0, num / den)


def correlation_belief(r1: Rule, r2: Rule, db: PreferenceDatabase) -> float:
    n = len(db)
    if n < 2:
        raise DatabaseTooSmall("correlation needs at least two pairs")
    b1 = agreement_bitmap(r1, db)
    b2 = b1 if r1 == r2 else agreement_bitmap(r2, db)
    a1 = int(np.bitwise_count(b1).sum())
    a2 = int(np.bitwise_count(b2).sum())
    both = int(np.bitwise_count(b1 & b2).sum())
    return correlation_from_counts(n, a1, a2, both)


class BeliefSystem:
    """Immutable set of consensus rules with cached agreement statistics over
    the consensus database."""

    def __init__(self, rules: RuleSet | Sequence[Rule], db: PreferenceDatabase):
        rules = RuleSet.from_rules(rules)
        if len(rules) == 0:
            raise EmptySystem("belief system needs at least one rule")
        self._rules = rules
        self._db = db
        self._bitmaps = None
        self._agree = None

    @property
    def rules(self) -> RuleSet:
        return self._rules

    @property
    def db(self) -> PreferenceDatabase:
        return self._db

    def __len__(self):
        return len(self._rules)

    @property
    def bitmaps(self) -> np.ndarray:
        if self._bitmaps is None:
            bm = stack_bitmaps(self._rules.rules, self._db)
            bm.setflags(write=False)
            self._bitmaps = bm
        return self._bitmaps

    @property
    def agree(self) -> np.ndarray:
        if self._agree is None:
            a = agree_counts(self._rules.rules, self._db)
            a.setflags(write=False)
            self._agree = a
        return self._agree


class BeliefFunction:
    """Rule-to-rule belief ``f(r1, r2, db) -> float``.

    Subclasses implement :meth:`pair`; :meth:`matrix` may be overridden with
    a vectorised version returning ``f(rules[i], system.rules[j])``.
    """

    name = ""
    parameters: tuple[str, ...] = ()

    def __init__(self, **params):
        unknown = set(params) - set(self.parameters)
        if unknown:
            raise BeliefError(f"{self.name}: unknown parameters {sorted(unknown)}")

    def settings(self) -> dict[str, float]:
        """Effective parameter values, defaults included."""
        return {}

    def pair(self, r1: Rule, r2: Rule, db: PreferenceDatabase) -> float:
        raise NotImplementedError

    def matrix(self, rules: Sequence[Rule], system: BeliefSystem) -> np.ndarray:
        out = np.empty((len(rules), len(system)))
        for i, r in enumerate(rules):
            for j, s in enumerate(system.rules):
                out[i, j] = self.pair(r, s, system.db)
        return out


_REGISTRY: dict[str, type[BeliefFunction]] = {}


def register(*names):
    def deco(cls):
        for n in names:
            _REGISTRY[n] = cls
        return cls

    return deco


def registered_functions() -> list[str]:
    return sorted(_REGISTRY)


@register("cos", "cosine", "imcos")
class CosineBelief(BeliefFunction):
    name = "cos"
    parameters = ("k1", "k2", "k3", "k1_empty", "k2_empty", "k3_empty")

    def __init__(self, k1=1.2, k2=1.5, k3=0.6, k1_empty=1.5, k2_empty=1.5, k3_empty=0.0):
        self.weights = (float(k1), float(k2), float(k3))
        self.empty_weights = (float(k1_empty), float(k2_empty), float(k3_empty))
        if min(self.weights) <= 0 or min(self.empty_weights) < 0:
            raise BeliefError("cosine weights must be positive")

    def settings(self):
        return dict(zip(self.parameters, self.weights + self.empty_weights))

    def pair(self, r1, r2, db=None):
        return cosine_belief(r1, r2, self.weights, self.empty_weights)

    def matrix(self, rules, system):
        if not rules:
            return np.empty((0, len(system)))
        w = rules[0].width

        def slots(rs):
            return [
                _bits_to_bool([getattr(r, s).bits for r in rs], w).astype(np.float64)
                for s in ("plus", "minus", "context")
            ]

        p1, m1, x1 = slots(rules)
        p2, m2, x2 = slots(system.rules.rules)
        dots = [p1 @ p2.T, m1 @ m2.T, x1 @ x2.T]
        norm1 = np.sqrt(p1.sum(1) + m1.sum(1) + x1.sum(1))
        norm2 = np.sqrt(p2.sum(1) + m2.sum(1) + x2.sum(1))
        if not (norm1.all() and norm2.all()):
            raise ZeroNorm("rule without set bits")
        empty = (x1.sum(1) == 0)[:, None] & (x2.sum(1) == 0)[None, :]
        k = np.where(empty[..., None], self.empty_weights, self.weights)
        num = k[..., 0] * dots[0] + k[..., 1] * dots[1] + k[..., 2] * dots[2]
        return num / (norm1[:, None] * norm2[None, :])


@register("cov", "correlation", "imcov")
class CorrelationBelief(BeliefFunction):
    name = "cov"

    def pair(self, r1, r2, db):
        return correlation_belief(r1, r2, db)

    def matrix(self, rules, system, batch=256):
        n = len(system.db)
        if n < 2:
            raise DatabaseTooSmall("correlation needs at least two pairs")
        a2 = system.agree.astype(np.float64)
        v2 = a2 * (n - a2)
        out = np.empty((len(rules), len(system)))
        for start in range(0, len(rules), batch):
            chunk = rules[start : start + batch]
            a1 = agree_counts(chunk, system.db)
            both = cross_coagreement(chunk, system.rules.rules, system.db)
            a1f = a1.astype(np.float64)[:, None]
            v1 = a1f * (n - a1f)
            num = np.abs(n * both.astype(np.float64) - a1f * a2[None, :])
            den = np.sqrt(v1 * v2[None, :])
            with np.errstate(divide="ignore", invalid="ignore"):
                vals = np.where(den > 0, num / den, 0.0)
            # identical indicator vectors: exactly one
            same = (both == a1[:, None]) & (both == system.agree[None, :]) & (den > 0)
            vals[same] = 1.0
            out[start : start + len(chunk)] = np.minimum(vals, 1.0)
        return out


@dataclass(frozen=True)
class BeliefFunctionSpec:
    name: str
    parameters: Mapping[str, float] = field(default_factory=dict)

    def build(self) -> BeliefFunction:
        try:
            cls = _REGISTRY[self.name]
        except KeyError:
            raise UnknownBeliefFunction(
                f"unknown belief function {self.name!r}; known: {registered_functions()}"
            ) from None
        try:
            return cls(**dict(self.parameters))
        except TypeError as exc:
            raise BeliefError(f"{self.name}: {exc}") from None


def _as_function(f) -> BeliefFunction:
    if isinstance(f, BeliefFunction):
        return f
    if isinstance(f, BeliefFunctionSpec):
        return f.build()
    if isinstance(f, str):
        return BeliefFunctionSpec(f).build()
    raise BeliefError(f"not a belief function: {f!r}")


class Branch(str, enum.Enum):
    GENERALIZED = "Generalized"
    PERSONALIZED = "Personalized"


DEVIATION_MODES = ("mean", "literal")


def _deviation(beliefs: np.ndarray, mode: str):
    n = beliefs.shape[-1]
    if mode == "mean":
        return beliefs.sum(axis=-1) / n - 1.0
    if mode == "literal":
        return (beliefs.sum(axis=-1) - 1.0) / n
    raise BeliefError(f"unknown deviation mode {mode!r}")


def _check_system(system):
    if system is None or len(system) == 0:
        raise EmptySystem("belief system is empty")


def belief_to_system(r0: Rule, system: BeliefSystem, f) -> float:
    _check_system(system)
    return float(_as_function(f).matrix([r0], system)[0].max())


def deviation_to_system(r0: Rule, system: BeliefSystem, f, mode: str = "mean") -> float:
    """Mean belief minus one (``mode="literal"`` gives ``(sum - 1) / n``)."""
    _check_system(system)
    return float(_deviation(_as_function(f).matrix([r0], system)[0], mode))


def interestingness(belief: float, deviation: float) -> tuple[float, Branch]:
    if belief >= abs(deviation):
        return belief, Branch.GENERALIZED
    return deviation, Branch.PERSONALIZED


@dataclass(frozen=True)
class ScoredRule:
    rule: Rule
    slots: tuple[str, str, str]
    support: float
    confidence: float | None
    belief: float
    deviation: float
    eta: float
    branch: Branch

    @property
    def text(self) -> str:
        return f"{self.slots[0]} > {self.slots[1]} | {self.slots[2]}"


def score_ruleset(
    rules: RuleSet | Sequence[Rule],
    system: BeliefSystem,
    f,
    db: PreferenceDatabase | None = None,
    deviation_mode: str = "mean",
) -> list[ScoredRule]:
    """Score every rule against the system, preserving input order.

    ``db`` is the database the rules were mined from and only feeds the
    reported support/confidence; belief functions that look at data use the
    system's consensus database.
    """
    _check_system(system)
    rules = list(rules)
    if not rules:
        return []
    fn = _as_function(f)
    db = system.db if db is None else db
    beliefs = fn.matrix(rules, system)
    belief = beliefs.max(axis=1)
    dev = _deviation(beliefs, deviation_mode)
    universe = db.universe
    out = []
    for r, b, d in zip(rules, belief.tolist(), dev.tolist()):
        eta, branch = interestingness(b, d)
        rec = measure(r, db)
        out.append(
            ScoredRule(r, r.slots(universe), rec.support, rec.confidence, b, d, eta, branch)
        )
    return out


class RankKey(str, enum.Enum):
    ETA = "eta"
    BELIEF = "belief"
    ABS_DEVIATION = "dev"


_KEY_VALUE = {
    RankKey.ETA: lambda s: abs(s.eta),
    RankKey.BELIEF: lambda s: s.belief,
    RankKey.ABS_DEVIATION: lambda s: abs(s.deviation),
}


def rank_topk(scored: Sequence[ScoredRule], k: int, key: RankKey | str = RankKey.ETA) -> list[ScoredRule]:
    """Descending by the key, ties by support then canonical rule order."""
    if k < 1:
        raise ValueError("k must be at least 1")
    value = _KEY_VALUE[RankKey(key)]
    ordered = sorted(scored, key=lambda s: (-value(s), -s.support, s.slots))
    return ordered[:k]
