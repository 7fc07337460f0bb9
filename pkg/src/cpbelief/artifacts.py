"""Serialized stage artifacts.

The preference database travels as a ``.npz`` snapshot (written with a fixed
zip timestamp so reruns are byte-identical); everything else is flat CSV or
JSON.  Every artifact carries the schema version and the digest of the
configuration that produced it.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import zipfile
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .belief import ScoredRule
from .errors import MissingArtifact, SchemaMismatch
from .measures import MeasureRecord
from .model import (
    NULL_CONTEXT,
    AttributeUniverse,
    Itemset,
    PreferenceDatabase,
    Rule,
    Transaction,
    make_rule,
)

SCHEMA_VERSION = 1
_ZIP_EPOCH = (1980, 1, 1, 0, 0, 0)

TRAIN, TEST = 0, 1
PARTS = ("train", "test", "all")

RULE_COLUMNS = ("i_plus", "i_minus", "context", "support", "confidence")
SCORE_COLUMNS = ("i_plus", "i_minus", "context", "support", "confidence",
                 "belief", "deviation", "eta", "branch", "rank")
MEASURE_COLUMNS = ("i_plus", "i_minus", "context", "agree", "against", "total",
                   "support", "confidence")
EVAL_COLUMNS = ("key", "K", "metric", "value")


def config_digest(params) -> str:
    blob = json.dumps(params, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def fmt(value) -> str:
    """Round-trippable text for a number; empty for undefined."""
    if value is None:
        return ""
    if isinstance(value, float):
        if value != value:
            return ""
        return repr(value)
    return str(value)


def _num(text: str) -> float | None:
    return float(text) if text != "" else None


def _require(path) -> Path:
    p = Path(path)
    if not p.exists():
        raise MissingArtifact(f"artifact not found: {p}")
    return p


# -- preference snapshot -----------------------------------------------------


@dataclass
class Snapshot:
    """A preference database plus per-pair user and train/test labels.

    A transactions-only snapshot (output of ``ingest``) has zero pairs.
    """

    db: PreferenceDatabase
    pair_user: np.ndarray
    pair_split: np.ndarray
    digest: str = ""
    kind: str = "prefs"

    @property
    def universe(self) -> AttributeUniverse:
        return self.db.universe

    def users(self) -> list[str]:
        return sorted(set(self.pair_user.tolist()))

    def _mask(self, part: str) -> np.ndarray:
        if part == "all":
            return np.ones(len(self.db), dtype=bool)
        if part not in PARTS:
            raise ValueError(f"unknown split part {part!r}")
        return self.pair_split == (TRAIN if part == "train" else TEST)

    def merged(self, part: str = "all") -> PreferenceDatabase:
        return self.db.subset(np.nonzero(self._mask(part))[0])

    def per_user(self, part: str = "all") -> dict[str, PreferenceDatabase]:
        mask = self._mask(part)
        order = np.argsort(self.pair_user, kind="stable")
        users, starts = np.unique(self.pair_user[order], return_index=True)
        bounds = list(starts) + [len(order)]
        out = {}
        for k, user in enumerate(users):
            idx = np.sort(order[bounds[k]:bounds[k + 1]])
            out[str(user)] = self.db.subset(idx[mask[idx]])
        return out


def _str_array(values: Sequence[str]) -> np.ndarray:
    return np.array(list(values), dtype=str) if len(values) else np.zeros(0, dtype="<U1")


def write_snapshot(path, snap: Snapshot) -> None:
    db = snap.db
    txs = db.transaction_list
    header = {
        "schema": SCHEMA_VERSION,
        "kind": snap.kind,
        "config": snap.digest,
        "universe": list(db.universe.names),
    }
    arrays = {
        "header": np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8),
        "tx_id": _str_array([t.id for t in txs]),
        "tx_user": _str_array([t.user for t in txs]),
        "tx_item": _str_array([t.item for t in txs]),
        "tx_items": db.item_matrix.astype(bool),
        "tx_rating": db.ratings.astype(np.float64),
        "pair_pref": db.preferred_index.astype(np.int64),
        "pair_dom": db.dominated_index.astype(np.int64),
        "pair_user": _str_array(list(snap.pair_user)),
        "pair_split": np.asarray(snap.pair_split, dtype=np.int8),
    }
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w", zipfile.ZIP_DEFLATED) as zf:
        for name, arr in arrays.items():
            info = zipfile.ZipInfo(name + ".npy", date_time=_ZIP_EPOCH)
            info.compress_type = zipfile.ZIP_DEFLATED
            info.external_attr = 0o644 << 16
            out = io.BytesIO()
            np.lib.format.write_array(out, np.ascontiguousarray(arr), allow_pickle=False)
            zf.writestr(info, out.getvalue())
    Path(path).write_bytes(buf.getvalue())


def read_snapshot(path, kind: str | None = None) -> Snapshot:
    p = _require(path)
    with np.load(p, allow_pickle=False) as z:
        try:
            header = json.loads(bytes(z["header"]).decode())
        except KeyError:
            raise SchemaMismatch(f"{p} is not a preference snapshot") from None
        if header.get("schema") != SCHEMA_VERSION:
            raise SchemaMismatch(f"{p}: schema {header.get('schema')} != {SCHEMA_VERSION}")
        if kind is not None and header.get("kind") != kind:
            raise SchemaMismatch(f"{p}: expected a {kind} snapshot, found {header.get('kind')}")
        data = {k: z[k] for k in z.files}
    universe = AttributeUniverse(tuple(header["universe"]))
    width = universe.size
    packed = np.packbits(data["tx_items"].astype(bool), axis=1, bitorder="little")
    txs = []
    for i in range(len(data["tx_id"])):
        bits = int.from_bytes(packed[i].tobytes(), "little")
        txs.append(Transaction(
            id=str(data["tx_id"][i]),
            user=str(data["tx_user"][i]),
            items=Itemset(bits, width),
            rating=float(data["tx_rating"][i]),
            item=str(data["tx_item"][i]),
        ))
    db = PreferenceDatabase.from_indices(universe, txs, data["pair_pref"], data["pair_dom"])
    return Snapshot(
        db,
        data["pair_user"].astype(str),
        data["pair_split"].astype(np.int8),
        header.get("config", ""),
        header["kind"],
    )


# -- CSV ---------------------------------------------------------------------


def _write_csv(path_or_stream, kind: str, digest: str, columns, rows) -> None:
    out = io.StringIO()
    out.write(f"# schema={SCHEMA_VERSION} kind={kind} config={digest}\n")
    w = csv.writer(out, lineterminator="\n")
    w.writerow(columns)
    w.writerows(rows)
    text = out.getvalue()
    if hasattr(path_or_stream, "write"):
        path_or_stream.write(text)
    else:
        Path(path_or_stream).write_text(text, encoding="utf-8")


def _read_csv(path, kind: str):
    p = _require(path)
    lines = p.read_text(encoding="utf-8").splitlines()
    meta = {}
    if lines and lines[0].startswith("#"):
        for tok in lines[0][1:].split():
            k, _, v = tok.partition("=")
            meta[k] = v
        lines = lines[1:]
    if not meta and kind == "rules":
        # plain hand-made ruleset tables (no provenance line) are accepted as input
        return "", list(csv.DictReader(lines))
    if meta.get("schema") != str(SCHEMA_VERSION):
        raise SchemaMismatch(f"{p}: missing or unsupported schema header")
    if meta.get("kind") != kind:
        raise SchemaMismatch(f"{p}: expected {kind} CSV, found {meta.get('kind')}")
    rows = list(csv.DictReader(lines))
    return meta.get("config", ""), rows


def _rule_cells(rule: Rule, universe) -> list[str]:
    return list(rule.slots(universe))


def _parse_rule_cells(row, universe) -> Rule:
    ctx = row["context"]
    return make_rule(
        row["i_plus"].split(","),
        row["i_minus"].split(","),
        [] if ctx in ("", NULL_CONTEXT) else ctx.split(","),
        universe,
    )


def write_rules(path, rules: Iterable[Rule], records, universe, digest: str = "",
                users: Sequence[str] | None = None) -> None:
    """Ruleset CSV; ``records`` are MeasureRecords aligned with ``rules``.

    With ``users`` given a leading ``user`` column is added (per-user rules).
    """
    cols = (("user",) if users is not None else ()) + RULE_COLUMNS
    rows = []
    for i, (rule, rec) in enumerate(zip(rules, records)):
        row = _rule_cells(rule, universe) + [fmt(rec.support), fmt(rec.confidence)]
        rows.append(([users[i]] if users is not None else []) + row)
    _write_csv(path, "rules" if users is None else "user_rules", digest, cols, rows)


def read_rules(path, universe, per_user: bool = False):
    """Return ``(digest, rows)`` with rows ``(user|None, rule, support, confidence)``."""
    digest, rows = _read_csv(path, "user_rules" if per_user else "rules")
    out = []
    for row in rows:
        out.append((
            row.get("user") if per_user else None,
            _parse_rule_cells(row, universe),
            _num(row["support"]),
            _num(row["confidence"]),
        ))
    return digest, out


def write_measures(path, rules: Sequence[Rule], records: Sequence[MeasureRecord], universe,
                   digest: str = "") -> None:
    rows = [
        _rule_cells(r, universe)
        + [rec.agree, rec.against, rec.total, fmt(rec.support), fmt(rec.confidence)]
        for r, rec in zip(rules, records)
    ]
    _write_csv(path, "measures", digest, MEASURE_COLUMNS, rows)


def write_scores(path, scored: Sequence[tuple[str, ScoredRule, int]], digest: str = "") -> None:
    """Scored-rule CSV; rows are ``(user, scored_rule, rank)``."""
    rows = []
    for user, s, rank in scored:
        rows.append([user, *s.slots, fmt(s.support), fmt(s.confidence), fmt(s.belief),
                     fmt(s.deviation), fmt(s.eta), s.branch.value, rank])
    _write_csv(path, "scores", digest, ("user",) + SCORE_COLUMNS, rows)


def read_scores(path, universe):
    """Return ``(digest, {user: [(ScoredRule, rank), ...]})`` in file order."""
    from .belief import Branch

    digest, rows = _read_csv(path, "scores")
    out: dict[str, list] = {}
    for row in rows:
        rule = _parse_rule_cells(row, universe)
        s = ScoredRule(
            rule=rule,
            slots=(row["i_plus"], row["i_minus"], row["context"]),
            support=float(row["support"]),
            confidence=_num(row["confidence"]),
            belief=float(row["belief"]),
            deviation=float(row["deviation"]),
            eta=float(row["eta"]),
            branch=Branch(row["branch"]),
        )
        out.setdefault(row["user"], []).append((s, int(row["rank"])))
    return digest, out


def write_eval(path, rows, digest: str = "") -> None:
    _write_csv(path, "eval", digest, EVAL_COLUMNS, [[k, K, m, fmt(v)] for k, K, m, v in rows])


def read_eval(path):
    digest, rows = _read_csv(path, "eval")
    return digest, [(r["key"], int(r["K"]), r["metric"], _num(r["value"])) for r in rows]


def write_json(path, payload) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_json(path):
    return json.loads(_require(path).read_text(encoding="utf-8"))
