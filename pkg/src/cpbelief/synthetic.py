"""Planted-rule preference generator for end-to-end checks.

Every user draws pairs from a handful of shared rules, one rule of their own
and a share of random noise pairs.  Pairs agreeing with a planted rule
``P > M | X`` are built as ``t = X ∪ P ∪ fill``, ``u = X ∪ M ∪ fill'`` with
sparse fillers that never touch ``P`` or ``M``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .artifacts import TEST, TRAIN, Snapshot
from .ingest import IngestConfig, split_indices
from .model import (
    AttributeUniverse,
    Itemset,
    PreferenceDatabase,
    Rule,
    Transaction,
    make_rule,
)

HIGH_RATINGS = (4.0, 4.5, 5.0)
LOW_RATINGS = (1.0, 1.5, 2.0, 2.5, 3.0)

# (plus, minus, context) over attribute indices; the 4/5 pair only holds in
# opposite contexts, so its context-free form is not confident
SHARED_RULES = (
    (0, 1, ()),
    (2, 3, ()),
    (4, 5, (8,)),
    (5, 4, (9,)),
    (6, 7, ()),
)


@dataclass(frozen=True)
class PlantedConfig:
    n_users: int = 200
    n_attributes: int = 12
    pairs_per_user: int = 60
    noise: float = 0.10
    filler_prob: float = 0.05
    noise_density: float = 0.25
    max_unique_share: int = 2  # users per unique rule
    split_ratio: float = 0.8
    seed: int = 0


@dataclass(frozen=True)
class PlantedFixture:
    snapshot: Snapshot
    shared: tuple[Rule, ...]
    unique: dict[str, Rule]


def attribute_names(n: int) -> list[str]:
    return [f"a{k:02d}" for k in range(n)]


def _rule(universe, p, m, ctx) -> Rule:
    names = universe.names
    return make_rule([names[p]], [names[m]], [names[x] for x in ctx], universe)


def _unique_pool(n_attr: int) -> list[tuple[int, int]]:
    taken = set()
    for p, m, _ in SHARED_RULES:
        taken |= {(p, m), (m, p)}
    return [(p, m) for p in range(n_attr) for m in range(n_attr) if p != m and (p, m) not in taken]


def _bits(positions) -> int:
    b = 0
    for x in positions:
        b |= 1 << int(x)
    return b


def generate(cfg: PlantedConfig = PlantedConfig()) -> PlantedFixture:
    m = cfg.n_attributes
    if m < 10:
        raise ValueError("the shared rules need at least 10 attributes")
    universe = AttributeUniverse.from_names(attribute_names(m))
    rng = np.random.default_rng([cfg.seed, 0])
    pool = _unique_pool(m)
    slots = [pm for pm in pool for _ in range(cfg.max_unique_share)]
    if len(slots) < cfg.n_users:
        raise ValueError("not enough distinct unique rules for this many users")
    order = rng.permutation(len(slots))[: cfg.n_users]
    users = [f"u{k:03d}" for k in range(cfg.n_users)]
    unique = {u: slots[i] for u, i in zip(users, order.tolist())}

    txs: list[Transaction] = []
    pref, dom, pair_user, split = [], [], [], []
    icfg = IngestConfig(split_ratio=cfg.split_ratio, seed=cfg.seed)
    n_noise = int(round(cfg.noise * cfg.pairs_per_user))
    n_planted = cfg.pairs_per_user - n_noise
    for k, user in enumerate(users):
        urng = np.random.default_rng([cfg.seed, 1, k])
        rules = list(SHARED_RULES) + [(*unique[user], ())]
        kinds = [rules[j % len(rules)] for j in range(n_planted)] + [None] * n_noise
        kinds = [kinds[j] for j in urng.permutation(len(kinds))]
        for j, spec in enumerate(kinds):
            if spec is None:
                t = u = 0
                while not t or not u:
                    t = _bits(np.nonzero(urng.random(m) < cfg.noise_density)[0])
                    u = _bits(np.nonzero(urng.random(m) < cfg.noise_density)[0])
            else:
                p, mi, ctx = spec
                free = [x for x in range(m) if x not in (p, mi)]
                fill_t = [x for x in free if urng.random() < cfg.filler_prob]
                fill_u = [x for x in free if urng.random() < cfg.filler_prob]
                t = _bits([p, *ctx, *fill_t])
                u = _bits([mi, *ctx, *fill_u])
            hi = float(urng.choice(HIGH_RATINGS))
            lo = float(urng.choice(LOW_RATINGS))
            pref.append(len(txs))
            txs.append(Transaction(f"{user}:{2 * j}", user, Itemset(t, m), hi))
            dom.append(len(txs))
            txs.append(Transaction(f"{user}:{2 * j + 1}", user, Itemset(u, m), lo))
        labels = np.full(len(kinds), TEST, dtype=np.int8)
        train_idx, _ = split_indices(len(kinds), icfg, user)
        labels[train_idx] = TRAIN
        pair_user.extend([user] * len(kinds))
        split.append(labels)

    db = PreferenceDatabase.from_indices(universe, txs, pref, dom)
    snap = Snapshot(db, np.array(pair_user, dtype=str), np.concatenate(split))
    shared = tuple(_rule(universe, p, mi, ctx) for p, mi, ctx in SHARED_RULES)
    uniq = {u: _rule(universe, p, mi, ()) for u, (p, mi) in unique.items()}
    return PlantedFixture(snap, shared, uniq)
