"""Rating-data ingestion and preference-database construction.

Ratings and item files may be MovieLens ``::`` records, tab-separated
(``u.data`` style) or plain CSV (``user,item,rating[,timestamp]`` and
``item[,title],attr|attr|...``).
"""

from __future__ import annotations

import csv
import io
import math
import os
import zlib
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import IngestError, MalformedRow, UniverseMismatch, UnknownItem
from .model import AttributeUniverse, PreferenceDatabase, Transaction, encode_itemset

NO_GENRES = "(no genres listed)"
_ITEM_HEADERS = {"item", "itemid", "item_id", "movieid", "movie_id", "id"}
_EPS = 1e-9  # rating arithmetic tolerance


@dataclass(frozen=True)
class IngestConfig:
    high_rating_threshold: float = 4.0
    min_gap: float = 0.5
    max_pairs_per_user: int | None = None
    split_ratio: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if not self.min_gap > 0:
            raise IngestError("min_gap must be positive")
        if not 0 < self.split_ratio < 1:
            raise IngestError("split_ratio must lie strictly between 0 and 1")
        if self.max_pairs_per_user is not None and self.max_pairs_per_user < 1:
            raise IngestError("max_pairs_per_user must be positive or None")


@dataclass(frozen=True)
class UserPreferenceSet:
    user: str
    db: PreferenceDatabase


def _open_lines(source) -> list[str]:
    if source is None:
        return []
    if isinstance(source, (str, os.PathLike)):
        path = Path(source)
        if not path.exists():
            raise IngestError(f"input file not found: {path}")
        raw = path.read_bytes()
        try:
            text = raw.decode("utf-8")
        except UnicodeDecodeError:
            text = raw.decode("latin-1")
        return text.splitlines()
    if isinstance(source, io.IOBase) or hasattr(source, "read"):
        return source.read().splitlines()
    return list(source)


def _split(line: str) -> list[str]:
    if "::" in line:
        return line.split("::")
    if "\t" in line:
        return line.split("\t")
    return next(csv.reader([line]))


def _parse_items(lines: Sequence[str]) -> dict[str, list[str]]:
    items: dict[str, list[str]] = {}
    for no, line in enumerate(lines, start=1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = [p.strip() for p in _split(line)]
        if len(parts) < 2:
            raise MalformedRow(no, "expected item id and attribute list")
        if no == 1 and parts[0].lower() in _ITEM_HEADERS:
            continue
        attrs = [a.strip() for a in parts[-1].split("|")]
        items[parts[0]] = sorted({a for a in attrs if a and a != NO_GENRES})
    return items


def _parse_ratings(lines: Sequence[str]):
    """Yield (row_no, user, item, rating, timestamp)."""
    for no, line in enumerate(lines, start=1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = [p.strip() for p in _split(line)]
        if len(parts) < 3:
            raise MalformedRow(no, "expected user, item, rating")
        try:
            rating = float(parts[2])
        except ValueError:
            if no == 1:
                continue  # header row
            raise MalformedRow(no, f"rating {parts[2]!r} is not a number") from None
        if not math.isfinite(rating):
            raise MalformedRow(no, "rating is not finite")
        ts = 0.0
        if len(parts) > 3 and parts[3]:
            try:
                ts = float(parts[3])
            except ValueError:
                raise MalformedRow(no, f"timestamp {parts[3]!r} is not a number") from None
        yield no, parts[0], parts[1], rating, ts


def load_transactions(
    ratings_source, items_source, universe_policy: str = "items"
) -> tuple[AttributeUniverse, list[Transaction]]:
    """One transaction per (user, item) rating event; the latest timestamp
    wins for repeated ratings.  ``universe_policy`` is ``"items"`` (every
    attribute of the item file) or ``"rated"`` (attributes of rated items)."""
    items = _parse_items(_open_lines(items_source))
    kept: dict[tuple[str, str], tuple[float, int, float]] = {}
    user_order: dict[str, int] = {}
    for no, user, item, rating, ts in _parse_ratings(_open_lines(ratings_source)):
        if item not in items:
            raise UnknownItem(item)
        user_order.setdefault(user, len(user_order))
        key = (user, item)
        prev = kept.get(key)
        if prev is None or (ts, no) >= (prev[0], prev[1]):
            kept[key] = (ts, no, rating)
    if universe_policy == "items":
        names = {a for attrs in items.values() for a in attrs}
    elif universe_policy == "rated":
        names = {a for (_, item) in kept for a in items[item]}
    else:
        raise IngestError(f"unknown universe policy {universe_policy!r}")
    universe = AttributeUniverse.from_names(names)
    ordered = sorted(kept.items(), key=lambda kv: (user_order[kv[0][0]], kv[1][1]))
    txs = [
        Transaction(
            id=f"{user}:{item}",
            user=user,
            items=encode_itemset(items[item], universe),
            rating=rating,
            item=item,
        )
        for (user, item), (_, _, rating) in ordered
    ]
    return universe, txs


def _user_rng(seed: int, user: str, stream: int) -> np.random.Generator:
    return np.random.default_rng(
        [seed & 0xFFFFFFFFFFFFFFFF, zlib.crc32(str(user).encode()), stream]
    )


def user_pairs(ratings: np.ndarray, cfg: IngestConfig, user: str = "") -> tuple[np.ndarray, np.ndarray]:
    """Index pairs (t, u) with t rated high and beating u by more than the gap."""
    r = np.asarray(ratings, dtype=np.float64)
    high = r >= cfg.high_rating_threshold - _EPS
    ok = high[:, None] & (r[:, None] - r[None, :] > cfg.min_gap + _EPS)
    t, u = np.nonzero(ok)
    cap = cfg.max_pairs_per_user
    if cap is not None and len(t) > cap:
        keep = np.sort(_user_rng(cfg.seed, user, 0).choice(len(t), size=cap, replace=False))
        t, u = t[keep], u[keep]
    return t, u


def build_preferences(
    transactions: Iterable[Transaction], cfg: IngestConfig, universe: AttributeUniverse
) -> list[UserPreferenceSet]:
    by_user: dict[str, list[Transaction]] = {}
    for t in transactions:
        by_user.setdefault(t.user, []).append(t)
    out = []
    for user, txs in by_user.items():
        ratings = np.array([t.rating for t in txs])
        t_idx, u_idx = user_pairs(ratings, cfg, user)
        out.append(UserPreferenceSet(user, PreferenceDatabase.from_indices(universe, txs, t_idx, u_idx)))
    return out


def merge_users(sets: Sequence[UserPreferenceSet]) -> PreferenceDatabase:
    if not sets:
        raise IngestError("nothing to merge")
    universe = sets[0].db.universe
    txs: list[Transaction] = []
    pos: dict[str, int] = {}
    prefs, doms = [], []
    for s in sets:
        if s.db.universe != universe:
            raise UniverseMismatch(f"user {s.user!r} uses a different attribute universe")
        local = s.db.transaction_list
        remap = np.empty(len(local), dtype=np.int64)
        for i, t in enumerate(local):
            j = pos.get(t.id)
            if j is None:
                j = pos[t.id] = len(txs)
                txs.append(t)
            elif txs[j] != t:
                raise IngestError(f"conflicting transactions share id {t.id!r}")
            remap[i] = j
        prefs.append(remap[s.db.preferred_index])
        doms.append(remap[s.db.dominated_index])
    return PreferenceDatabase.from_indices(
        universe, txs, np.concatenate(prefs), np.concatenate(doms)
    )


def split_indices(n: int, cfg: IngestConfig, user: str = "") -> tuple[np.ndarray, np.ndarray]:
    n_train = math.ceil(cfg.split_ratio * n - _EPS)
    perm = _user_rng(cfg.seed, user, 1).permutation(n)
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def split(pref_set: UserPreferenceSet, cfg: IngestConfig) -> tuple[PreferenceDatabase, PreferenceDatabase]:
    """Disjoint train/test partition of the user's pairs; train gets ceil(r*n)."""
    train_idx, test_idx = split_indices(len(pref_set.db), cfg, pref_set.user)
    return pref_set.db.subset(train_idx), pref_set.db.subset(test_idx)
