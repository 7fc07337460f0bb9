from fractions import Fraction

import numpy as np
import oracles as O
import pytest
from conftest import db_sets, random_instance, random_rule
from hypothesis import given, settings
from hypothesis import strategies as st

from cpbelief.errors import EmptyDatabase, EmptyRuleset, TooFewRules
from cpbelief.measures import avg_internal_distance, support
from cpbelief.model import PreferenceDatabase, RuleSet, make_rule
from cpbelief.pra import AUTO, PraConfig, pra_aggregate, resolve_mindis


@pytest.fixture
def three(abcde):
    return RuleSet.from_rules([
        make_rule(["D"], ["E"], ["B"], abcde),
        make_rule(["D"], ["C"], [], abcde),
        make_rule(["A"], ["C"], ["B"], abcde),
    ])


def test_three_rules_all_kept(toy, three, abcde):
    kept, trace = pra_aggregate(three, toy, PraConfig(0.25))
    assert set(kept) == set(three)
    assert {r.text(abcde) for r in trace.seed_pair} == {"D > E | B", "D > C | NULL"}
    assert trace.seed_avgdis == 0.4
    ((added, d),) = trace.additions
    assert added.text(abcde) == "A > C | B"
    assert d == float(Fraction(4, 15))
    assert round(d, 4) == 0.2667


def test_three_rules_extension_rejected(toy, three, abcde):
    kept, trace = pra_aggregate(three, toy, PraConfig(0.3))
    assert sorted(r.text(abcde) for r in kept) == ["D > C | NULL", "D > E | B"]
    assert trace.additions == ()
    assert trace.final_avgdis == 0.4


def test_unsatisfiable_threshold(toy, three):
    kept, trace = pra_aggregate(three, toy, PraConfig(0.9))
    assert len(kept) == 0
    assert trace.empty and trace.to_dict(toy.universe)["no_seed"]


def test_output_in_canonical_order(toy, three, abcde):
    kept, _ = pra_aggregate(three, toy, PraConfig(0.25))
    assert [r.text(abcde) for r in kept] == ["D > C | NULL", "A > C | B", "D > E | B"]


def test_resolve_mindis(toy, three):
    assert resolve_mindis(three, toy, PraConfig(0.25)) == 0.25
    mean = sum(support(r, toy) for r in three) / 3
    assert resolve_mindis(three, toy, PraConfig(AUTO)) == pytest.approx(1.5 * mean)
    assert resolve_mindis(three, toy, PraConfig(AUTO, auto_factor=1.0)) == pytest.approx(mean)
    with pytest.raises(EmptyRuleset):
        resolve_mindis(RuleSet(), toy, PraConfig())


def test_errors(toy, three, abcde):
    with pytest.raises(TooFewRules):
        pra_aggregate(RuleSet(three.rules[:1]), toy)
    empty = PreferenceDatabase(abcde, toy.transaction_list, [])
    with pytest.raises(EmptyDatabase):
        pra_aggregate(three, empty, PraConfig(0.1))
    with pytest.raises(ValueError):
        PraConfig(-1)


def _random_case(seed):
    rng = np.random.default_rng(seed)
    u, db = random_instance(rng, max_attrs=7, max_pairs=40, max_txs=20)
    rules = RuleSet.from_rules(r for r in (random_rule(rng, u, 1, 1) for _ in range(10)) if r)
    mindis = float(rng.choice([0.0, 0.01, 0.05, 0.1]))
    return u, db, rules, mindis


def check_against_naive(seed):
    u, db, rules, mindis = _random_case(seed)
    if len(rules) < 2:
        return
    kept, trace = pra_aggregate(rules, db, PraConfig(mindis))
    pairs = db_sets(db)
    chosen, steps = O.pra_naive([O.of(r, u) for r in rules], pairs, Fraction(mindis))
    assert {O.of(r, u) for r in kept} == set(chosen)
    assert [(O.of(r, u), d) for r, d in trace.additions] == [(r, float(d)) for r, d in steps]
    recorded = ([trace.seed_avgdis] if trace.seed_avgdis is not None else []) + [d for _, d in trace.additions]
    assert all(d > mindis for d in recorded)
    if len(kept) >= 2:
        assert avg_internal_distance(kept, db) == trace.final_avgdis


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_greedy_matches_naive_recomputation(seed):
    check_against_naive(seed)
