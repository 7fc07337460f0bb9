from __future__ import annotations

import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from cpbelief.model import (
    AttributeUniverse,
    PreferenceDatabase,
    PreferencePair,
    Transaction,
    encode_itemset,
)

ROOT = Path(__file__).resolve().parents[1]
CACHE = ROOT / "tests" / ".cache"

TOY_ITEMS = {
    "t1": ("ABD", 9.5),
    "t2": ("BCE", 7.4),
    "t3": ("BC", 6.4),
    "t4": ("DE", 8.6),
    "t5": ("BE", 7.9),
}
TOY_PAIRS = [("t1", "t2"), ("t1", "t3"), ("t1", "t5"), ("t4", "t2"), ("t4", "t3")]


@pytest.fixture(scope="session")
def abcde():
    return AttributeUniverse.from_names("ABCDE")


def toy_transactions(universe):
    return [
        Transaction(tid, "1", encode_itemset(list(items), universe), rating, item=tid)
        for tid, (items, rating) in TOY_ITEMS.items()
    ]


@pytest.fixture
def toy(abcde):
    txs = toy_transactions(abcde)
    return PreferenceDatabase(abcde, txs, [PreferencePair(*p) for p in TOY_PAIRS])


@pytest.fixture
def toy_sets():
    sets = {tid: frozenset(items) for tid, (items, _) in TOY_ITEMS.items()}
    return [(sets[t], sets[u]) for t, u in TOY_PAIRS]


@pytest.fixture(scope="session")
def toy_files(tmp_path_factory):
    d = tmp_path_factory.mktemp("toy")
    ratings = d / "ratings.csv"
    items = d / "items.csv"
    ratings.write_text(
        "user,item,rating\n" + "".join(f"1,{tid},{r}\n" for tid, (_, r) in TOY_ITEMS.items())
    )
    items.write_text(
        "item,attributes\n" + "".join(f"{tid},{'|'.join(a)}\n" for tid, (a, _) in TOY_ITEMS.items())
    )
    return ratings, items


@pytest.fixture(scope="session")
def ml100k():
    """MovieLens-100K as (ratings.dat, movies.dat), fetched once into tests/.cache."""
    dest = CACHE / "ml100k"
    ratings, movies = dest / "ratings.dat", dest / "movies.dat"
    if not (ratings.exists() and movies.exists()):
        try:
            subprocess.run(
                [sys.executable, str(ROOT / "scripts" / "fetch_ml100k.py"), str(dest)],
                check=True,
                capture_output=True,
                timeout=600,
            )
        except (subprocess.SubprocessError, OSError) as exc:
            pytest.skip(f"MovieLens-100K unavailable: {exc}")
    return ratings, movies


def random_instance(rng: np.random.Generator, max_attrs=8, max_pairs=50, max_txs=30):
    """Random universe, transaction table and pair list."""
    m = int(rng.integers(2, max_attrs + 1))
    universe = AttributeUniverse.from_names([f"x{i}" for i in range(m)])
    n_tx = int(rng.integers(2, max_txs + 1))
    txs = []
    for i in range(n_tx):
        mask = rng.random(m) < rng.uniform(0.2, 0.7)
        names = [universe.names[k] for k in np.nonzero(mask)[0]]
        txs.append(Transaction(f"t{i}", "u", encode_itemset(names, universe), float(rng.integers(1, 6))))
    n_pairs = int(rng.integers(1, max_pairs + 1))
    pref = rng.integers(0, n_tx, n_pairs)
    dom = (pref + rng.integers(1, n_tx, n_pairs)) % n_tx
    db = PreferenceDatabase.from_indices(universe, txs, pref, dom)
    return universe, db


def db_sets(db):
    """Pairs as (frozenset t, frozenset u) of attribute names."""
    names = db.universe.names
    out = []
    for t, u in (db.resolve(p) for p in db.pairs):
        out.append((
            frozenset(names[i] for i in t.items.positions()),
            frozenset(names[i] for i in u.items.positions()),
        ))
    return out


def random_rule(rng, universe, max_side=2, max_ctx=2):
    from cpbelief.model import Itemset, Rule

    m = universe.size
    if m < 2:
        return None
    perm = rng.permutation(m)
    np_ = int(rng.integers(1, min(max_side, m - 1) + 1))
    nm = int(rng.integers(1, min(max_side, m - np_) + 1))
    rest = m - np_ - nm
    nx = int(rng.integers(0, min(max_ctx, rest) + 1))

    def bits(idx):
        return Itemset(sum(1 << int(i) for i in idx), m)

    return Rule(bits(perm[:np_]), bits(perm[np_ : np_ + nm]), bits(perm[np_ + nm : np_ + nm + nx]))


# -- acceptance summary ------------------------------------------------------

ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record(criterion: int, passed: bool, detail: str = "") -> None:
    ACCEPTANCE[criterion] = (passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
