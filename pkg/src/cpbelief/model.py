"""Core domain types: attribute universe, bit-vector itemsets, transactions,
preference databases and contextual preference rules.

Itemsets are plain Python integers used as bit-vectors: bit ``k`` stands for
the ``k``-th attribute of the universe.  When rendered as a string the first
attribute is the leftmost character, so ``{A, B, D}`` over ``A..E`` reads
``11010``.
"""

from __future__ import annotations

import threading
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import NamedTuple

import numpy as np

from .errors import (
    DanglingPair,
    DuplicateRule,
    MalformedRule,
    ModelError,
    UniverseMismatch,
    UnknownAttribute,
)

NULL_CONTEXT = "NULL"
_RESERVED = (",", ">", "|")


@dataclass(frozen=True)
class AttributeUniverse:
    """Lexicographically ordered attribute names; position = bit index."""

    names: tuple[str, ...]
    index: Mapping[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        names = tuple(self.names)
        if list(names) != sorted(set(names)):
            raise ModelError("universe names must be unique and sorted")
        for name in names:
            if not name or name != name.strip() or name == NULL_CONTEXT:
                raise ModelError(f"invalid attribute name {name!r}")
            if any(ch in name for ch in _RESERVED):
                raise ModelError(f"attribute name {name!r} contains a reserved character")
        object.__setattr__(self, "names", names)
        object.__setattr__(
            self, "index", MappingProxyType({n: i for i, n in enumerate(names)})
        )

    @classmethod
    def from_names(cls, names: Iterable[str]) -> AttributeUniverse:
        return cls(tuple(sorted(set(names))))

    @property
    def size(self) -> int:
        return len(self.names)

    def __len__(self):
        return len(self.names)

    def __contains__(self, name):
        return name in self.index


@dataclass(frozen=True, slots=True)
class Itemset:
    bits: int
    width: int

    def __post_init__(self):
        if self.bits < 0 or self.bits >> self.width:
            raise ModelError(f"bits {self.bits:#x} do not fit in width {self.width}")

    @classmethod
    def empty(cls, width: int) -> Itemset:
        return cls(0, width)

    def __len__(self):
        return self.bits.bit_count()

    def __bool__(self):
        return self.bits != 0

    def __and__(self, other: Itemset) -> Itemset:
        return Itemset(self.bits & other.bits, self.width)

    def __or__(self, other: Itemset) -> Itemset:
        return Itemset(self.bits | other.bits, self.width)

    def issubset(self, other: Itemset) -> bool:
        return self.bits & other.bits == self.bits

    def isdisjoint(self, other: Itemset) -> bool:
        return self.bits & other.bits == 0

    def positions(self) -> list[int]:
        return [k for k in range(self.width) if self.bits >> k & 1]

    def to_string(self) -> str:
        return "".join("1" if self.bits >> k & 1 else "0" for k in range(self.width))

    def __str__(self):
        return self.to_string()


def encode_itemset(names: Iterable[str], universe: AttributeUniverse) -> Itemset:
    bits = 0
    for name in names:
        try:
            bits |= 1 << universe.index[name]
        except KeyError:
            raise UnknownAttribute(name) from None
    return Itemset(bits, universe.size)


def decode_itemset(itemset: Itemset, universe: AttributeUniverse) -> list[str]:
    if itemset.width != universe.size:
        raise UniverseMismatch("itemset width differs from universe size")
    return [universe.names[k] for k in itemset.positions()]


def format_itemset(itemset: Itemset, universe: AttributeUniverse) -> str:
    return ",".join(decode_itemset(itemset, universe))


def parse_itemset(text: str, universe: AttributeUniverse) -> Itemset:
    text = text.strip()
    if not text or text == NULL_CONTEXT:
        return Itemset.empty(universe.size)
    return encode_itemset((s.strip() for s in text.split(",")), universe)


@dataclass(frozen=True, slots=True)
class Transaction:
    id: str
    user: str
    items: Itemset
    rating: float
    item: str = ""


class PreferencePair(NamedTuple):
    """``preferred`` is strictly preferred to ``dominated`` (both transaction ids)."""

    preferred: str
    dominated: str


@dataclass(frozen=True, slots=True)
class Rule:
    """Contextual preference rule ``plus > minus | context``."""

    plus: Itemset
    minus: Itemset
    context: Itemset

    def __post_init__(self):
        w = self.plus.width
        if self.minus.width != w or self.context.width != w:
            raise MalformedRule("rule slots use different widths")
        if not self.plus or not self.minus:
            raise MalformedRule("plus and minus itemsets must be non-empty")
        if (
            self.plus.bits & self.minus.bits
            or self.plus.bits & self.context.bits
            or self.minus.bits & self.context.bits
        ):
            raise MalformedRule("plus, minus and context must be pairwise disjoint")

    @property
    def width(self) -> int:
        return self.plus.width

    @property
    def bits(self) -> int:
        return self.plus.bits | self.minus.bits | self.context.bits

    def text(self, universe: AttributeUniverse) -> str:
        ctx = format_itemset(self.context, universe) or NULL_CONTEXT
        return (
            f"{format_itemset(self.plus, universe)} > "
            f"{format_itemset(self.minus, universe)} | {ctx}"
        )

    def slots(self, universe: AttributeUniverse) -> tuple[str, str, str]:
        return (
            format_itemset(self.plus, universe),
            format_itemset(self.minus, universe),
            format_itemset(self.context, universe) or NULL_CONTEXT,
        )


def make_rule(plus, minus, context, universe: AttributeUniverse) -> Rule:
    """Build a rule from attribute-name iterables (or comma strings)."""

    def enc(v):
        if isinstance(v, str):
            return parse_itemset(v, universe)
        return encode_itemset(v, universe)

    return Rule(enc(plus), enc(minus), enc(context))


def parse_rule(text: str, universe: AttributeUniverse) -> Rule:
    """Parse the canonical ``i+ > i- | X`` form (context ``NULL`` when empty)."""
    if " | " in text:
        head, ctx = text.rsplit(" | ", 1)
    else:
        head, ctx = text, ""
    parts = head.split(" > ")
    if len(parts) != 2:
        raise MalformedRule(f"cannot parse rule {text!r}")
    return Rule(
        parse_itemset(parts[0], universe),
        parse_itemset(parts[1], universe),
        parse_itemset(ctx, universe),
    )


def inverse(rule: Rule) -> Rule:
    return Rule(rule.minus, rule.plus, rule.context)


@dataclass(frozen=True)
class RuleSet:
    """Ordered, duplicate-free collection of rules."""

    rules: tuple[Rule, ...] = ()

    def __post_init__(self):
        rules = tuple(self.rules)
        if len(set(rules)) != len(rules):
            raise DuplicateRule("rule set contains duplicates")
        object.__setattr__(self, "rules", rules)

    @classmethod
    def from_rules(cls, rules: Iterable[Rule]) -> RuleSet:
        return cls(tuple(dict.fromkeys(rules)))

    def __iter__(self):
        return iter(self.rules)

    def __len__(self):
        return len(self.rules)

    def __getitem__(self, i):
        return self.rules[i]

    def __contains__(self, rule):
        return rule in self.rules


def _bits_to_bool(bit_values: Sequence[int], width: int) -> np.ndarray:
    n = len(bit_values)
    nbytes = max(1, (width + 7) // 8)
    if n == 0:
        return np.zeros((0, width), dtype=bool)
    raw = b"".join(b.to_bytes(nbytes, "little") for b in bit_values)
    arr = np.frombuffer(raw, dtype=np.uint8).reshape(n, nbytes)
    return np.unpackbits(arr, axis=1, bitorder="little")[:, :width].astype(bool)


def pack_columns(matrix: np.ndarray) -> np.ndarray:
    """Pack a (rows, cols) bool matrix into (cols, words) uint64 bitmaps over rows."""
    rows, cols = matrix.shape
    words = max(1, (rows + 63) // 64)
    padded = np.zeros((cols, words * 64), dtype=bool)
    padded[:, :rows] = matrix.T
    packed = np.packbits(padded, axis=1, bitorder="little")
    return np.ascontiguousarray(packed).view("<u8")


def unpack_bitmap(bitmap: np.ndarray, length: int) -> np.ndarray:
    return np.unpackbits(bitmap.view(np.uint8), bitorder="little")[:length].astype(bool)


class PreferenceDatabase:
    """A set of preference pairs over an indexed transaction table.

    Pairs are held as index arrays into the transaction table so that
    databases with millions of pairs stay cheap; ``pairs`` materialises the
    id-level view on demand.  Instances are immutable once built.
    """

    def __init__(
        self,
        universe: AttributeUniverse,
        transactions: Iterable[Transaction],
        pairs: Iterable[PreferencePair] = (),
    ):
        txs = tuple(transactions)
        pos = self._index(txs, universe)
        pref, dom = [], []
        for p in pairs:
            try:
                pref.append(pos[p[0]])
                dom.append(pos[p[1]])
            except KeyError as exc:
                raise DanglingPair(f"pair {tuple(p)} references unknown id {exc}") from None
        self._setup(universe, txs, pos, np.array(pref, dtype=np.int64), np.array(dom, dtype=np.int64))

    @classmethod
    def from_indices(cls, universe, transactions, preferred, dominated) -> PreferenceDatabase:
        self = cls.__new__(cls)
        txs = tuple(transactions)
        pos = cls._index(txs, universe)
        preferred = np.asarray(preferred, dtype=np.int64).ravel()
        dominated = np.asarray(dominated, dtype=np.int64).ravel()
        if preferred.shape != dominated.shape:
            raise ModelError("preferred/dominated arrays differ in length")
        if len(preferred) and (
            min(preferred.min(), dominated.min()) < 0
            or max(preferred.max(), dominated.max()) >= len(txs)
        ):
            raise DanglingPair("pair index outside the transaction table")
        self._setup(universe, txs, pos, preferred, dominated)
        return self

    @staticmethod
    def _index(txs, universe):
        pos = {}
        for i, t in enumerate(txs):
            if t.items.width != universe.size:
                raise UniverseMismatch(f"transaction {t.id!r} has width {t.items.width}")
            if t.id in pos:
                raise ModelError(f"duplicate transaction id {t.id!r}")
            pos[t.id] = i
        return pos

    def _setup(self, universe, txs, pos, pref, dom):
        if np.any(pref == dom):
            raise ModelError("a pair cannot prefer a transaction to itself")
        pref.setflags(write=False)
        dom.setflags(write=False)
        self._universe = universe
        self._txs = txs
        self._pos = pos
        self._pref = pref
        self._dom = dom
        self._pairs = None
        self._items = None
        self._ratings = None
        self._bitmaps = None
        self._lock = threading.Lock()
        self.measure_cache: dict = {}

    # -- basic views -------------------------------------------------------
    @property
    def universe(self) -> AttributeUniverse:
        return self._universe

    @property
    def transactions(self) -> Mapping[str, Transaction]:
        return MappingProxyType({t.id: t for t in self._txs})

    @property
    def transaction_list(self) -> tuple[Transaction, ...]:
        return self._txs

    @property
    def preferred_index(self) -> np.ndarray:
        return self._pref

    @property
    def dominated_index(self) -> np.ndarray:
        return self._dom

    @property
    def pairs(self) -> tuple[PreferencePair, ...]:
        if self._pairs is None:
            ids = [t.id for t in self._txs]
            self._pairs = tuple(
                PreferencePair(ids[a], ids[b])
                for a, b in zip(self._pref.tolist(), self._dom.tolist())
            )
        return self._pairs

    def __len__(self):
        return len(self._pref)

    def __repr__(self):
        return (
            f"PreferenceDatabase(|universe|={self._universe.size}, "
            f"transactions={len(self._txs)}, pairs={len(self)})"
        )

    def transaction(self, tid: str) -> Transaction:
        try:
            return self._txs[self._pos[tid]]
        except KeyError:
            raise DanglingPair(f"unknown transaction id {tid!r}") from None

    def resolve(self, pair: PreferencePair) -> tuple[Transaction, Transaction]:
        return self.transaction(pair[0]), self.transaction(pair[1])

    @property
    def item_matrix(self) -> np.ndarray:
        """(n_transactions, m) bool matrix of attribute membership."""
        if self._items is None:
            m = _bits_to_bool([t.items.bits for t in self._txs], self._universe.size)
            m.setflags(write=False)
            self._items = m
        return self._items

    @property
    def ratings(self) -> np.ndarray:
        if self._ratings is None:
            r = np.array([t.rating for t in self._txs], dtype=np.float64)
            r.setflags(write=False)
            self._ratings = r
        return self._ratings

    @property
    def n_words(self) -> int:
        return max(1, (len(self) + 63) // 64)

    def side_bitmaps(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-attribute pair bitmaps ``(T, U)``, each shaped (m, words).

        ``T[a]`` has bit ``j`` set when attribute ``a`` is in the preferred
        transaction of pair ``j``; ``U`` is the same for the dominated side.
        """
        if self._bitmaps is None:
            with self._lock:
                if self._bitmaps is None:
                    items = self.item_matrix
                    t = pack_columns(items[self._pref])
                    u = pack_columns(items[self._dom])
                    t.setflags(write=False)
                    u.setflags(write=False)
                    self._bitmaps = (t, u)
        return self._bitmaps

    def valid_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_words, dtype=np.uint64)
        n = len(self)
        full, rest = divmod(n, 64)
        mask[:full] = np.uint64(0xFFFFFFFFFFFFFFFF)
        if rest:
            mask[full] = np.uint64((1 << rest) - 1)
        return mask

    def users(self) -> list[str]:
        seen = dict.fromkeys(self._txs[i].user for i in self._pref.tolist())
        return list(seen)

    def subset(self, pair_indices) -> PreferenceDatabase:
        """Database restricted to the given pair positions (same transaction table)."""
        idx = np.asarray(pair_indices, dtype=np.int64)
        sub = PreferenceDatabase.__new__(PreferenceDatabase)
        sub._setup(self._universe, self._txs, self._pos, self._pref[idx].copy(), self._dom[idx].copy())
        sub._items = self.item_matrix
        sub._ratings = self.ratings
        return sub


def rule_agrees(rule: Rule, pair: PreferencePair, db: PreferenceDatabase) -> bool:
    """Whether the pair ``<t, u>`` supports ``rule``: context and plus in t,
    context and minus in u, minus absent from t, plus absent from u."""
    t, u = db.resolve(pair)
    return _agrees_bits(rule, t.items.bits, u.items.bits)


def _agrees_bits(rule: Rule, t: int, u: int) -> bool:
    need_t = rule.context.bits | rule.plus.bits
    need_u = rule.context.bits | rule.minus.bits
    return (
        t & need_t == need_t
        and u & need_u == need_u
        and not t & rule.minus.bits
        and not u & rule.plus.bits
    )
