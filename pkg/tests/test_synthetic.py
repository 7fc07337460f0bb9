import numpy as np
import pytest

from cpbelief.measures import agree_count, confidence
from cpbelief.synthetic import HIGH_RATINGS, PlantedConfig, generate

CFG = PlantedConfig(n_users=20, pairs_per_user=30, seed=5)


@pytest.fixture(scope="module")
def fx():
    return generate(CFG)


def test_shape(fx):
    snap = fx.snapshot
    assert snap.users() == [f"u{k:03d}" for k in range(20)]
    assert len(snap.db) == 20 * 30
    assert snap.universe.size == 12
    assert set(fx.unique) == set(snap.users())


def test_rating_conventions(fx):
    db = fx.snapshot.db
    t = db.ratings[db.preferred_index]
    u = db.ratings[db.dominated_index]
    assert np.all(t >= min(HIGH_RATINGS))
    assert np.all(t - u > 0.5)


def test_planted_rules_hold(fx):
    per_user = fx.snapshot.per_user("all")
    for user, db in per_user.items():
        for rule in fx.shared + (fx.unique[user],):
            assert agree_count(rule, db) >= 4
            assert confidence(rule, db) >= 0.8


def test_unique_rules_not_shared_widely(fx):
    counts = {}
    for rule in fx.unique.values():
        counts[rule] = counts.get(rule, 0) + 1
    assert max(counts.values()) <= CFG.max_unique_share
    assert not set(counts) & set(fx.shared)


def test_split_per_user(fx):
    snap = fx.snapshot
    for user, db in snap.per_user("train").items():
        assert len(db) == 24


def test_deterministic():
    a, b = generate(CFG), generate(CFG)
    assert a.snapshot.db.pairs == b.snapshot.db.pairs
    assert a.snapshot.db.transaction_list == b.snapshot.db.transaction_list
    assert generate(PlantedConfig(n_users=20, pairs_per_user=30, seed=6)).snapshot.db.transaction_list != a.snapshot.db.transaction_list


def test_too_many_users_rejected():
    with pytest.raises(ValueError):
        generate(PlantedConfig(n_users=10, n_attributes=8))
