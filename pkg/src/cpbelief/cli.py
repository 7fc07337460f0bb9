"""Command-line driver.

Each stage reads its upstream artifacts from files and writes one artifact;
``pipeline`` runs the same stage functions in order, so a pipeline run and a
hand-composed sequence of stage runs produce identical files.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import platform
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from . import artifacts as art
from .belief import (
    DEVIATION_MODES,
    BeliefFunctionSpec,
    BeliefSystem,
    RankKey,
    rank_topk,
    registered_functions,
    score_ruleset,
)
from .config import DEFAULT_KS, RunConfig
from .config import load as load_config
from .errors import CPBeliefError, IngestError, MissingArtifact
from .evaluate import EXPERIMENT_KEYS, topk_experiment
from .ingest import (
    IngestConfig,
    build_preferences,
    load_transactions,
    merge_users,
    split_indices,
)
from .measures import measure
from .miner import MinerConfig, enumerate_rules
from .model import PreferenceDatabase, RuleSet
from .pra import AUTO, PraConfig, pra_aggregate
from .synthetic import PlantedConfig, generate

log = logging.getLogger("cpbelief")

STDOUT = "-"


def _map(fn, items, jobs: int):
    if jobs <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _out(path):
    return sys.stdout if path in (None, STDOUT) else path


def _records(rules, db):
    return [measure(r, db) for r in rules]


# -- stages ------------------------------------------------------------------


def stage_ingest(ratings, items, out, universe_policy: str = "items") -> str:
    universe, txs = load_transactions(ratings, items, universe_policy)
    digest = art.config_digest({
        "stage": "ingest",
        "universe_policy": universe_policy,
        "ratings": art.file_digest(ratings),
        "items": art.file_digest(items),
    })
    db = PreferenceDatabase.from_indices(universe, txs, [], [])
    snap = art.Snapshot(db, np.zeros(0, dtype=str), np.zeros(0, dtype=np.int8), digest, "transactions")
    art.write_snapshot(out, snap)
    log.info("ingest: %d transactions, %d attributes", len(txs), universe.size)
    return digest


def stage_prefs(transactions, out, cfg: IngestConfig) -> str:
    src = art.read_snapshot(transactions, kind="transactions")
    digest = art.config_digest({
        "stage": "prefs",
        "upstream": src.digest,
        "high": float(cfg.high_rating_threshold),
        "gap": float(cfg.min_gap),
        "max_pairs": cfg.max_pairs_per_user,
        "split": float(cfg.split_ratio),
        "seed": cfg.seed,
    })
    sets = [s for s in build_preferences(src.db.transaction_list, cfg, src.universe) if len(s.db)]
    if sets:
        merged = merge_users(sets)
    else:
        merged = PreferenceDatabase.from_indices(src.universe, src.db.transaction_list, [], [])
    users, labels = [], []
    for s in sets:
        lab = np.full(len(s.db), art.TEST, dtype=np.int8)
        lab[split_indices(len(s.db), cfg, s.user)[0]] = art.TRAIN
        labels.append(lab)
        users.extend([s.user] * len(s.db))
    split = np.concatenate(labels) if labels else np.zeros(0, dtype=np.int8)
    art.write_snapshot(out, art.Snapshot(merged, np.array(users, dtype=str), split, digest, "prefs"))
    log.info("prefs: %d pairs over %d users", len(merged), len(sets))
    return digest


def stage_mine(prefs, out, cfg: MinerConfig, scope: str = "consensus", part: str = "train",
               jobs: int = 1) -> str:
    snap = art.read_snapshot(prefs, kind="prefs")
    digest = art.config_digest({
        "stage": "mine",
        "upstream": snap.digest,
        "scope": scope,
        "part": part,
        "min_support": float(cfg.min_support),
        "min_confidence": float(cfg.min_confidence),
        "max_context": cfg.max_context_len,
        "max_side": cfg.max_side_len,
    })
    universe = snap.universe
    if scope == "consensus":
        db = snap.merged(part)
        rules = enumerate_rules(db, cfg)
        art.write_rules(_out(out), rules, _records(rules, db), universe, digest)
        log.info("mine: %d consensus rules", len(rules))
        return digest
    if scope != "users":
        raise ValueError(f"unknown mining scope {scope!r}")
    per_user = [(u, db) for u, db in snap.per_user(part).items() if len(db)]

    def one(item):
        user, db = item
        rules = enumerate_rules(db, cfg)
        return user, rules, _records(rules, db)

    all_rules, all_recs, all_users = [], [], []
    for user, rules, recs in _map(one, per_user, jobs):
        all_rules.extend(rules)
        all_recs.extend(recs)
        all_users.extend([user] * len(rules))
    art.write_rules(_out(out), all_rules, all_recs, universe, digest, users=all_users)
    log.info("mine: %d rules over %d users", len(all_rules), len(per_user))
    return digest


def stage_pra(prefs, rules, out, cfg: PraConfig, trace=None, part: str = "train") -> str:
    snap = art.read_snapshot(prefs, kind="prefs")
    rules_digest, rows = art.read_rules(rules, snap.universe)
    digest = art.config_digest({
        "stage": "pra",
        "upstream": [snap.digest, rules_digest],
        "part": part,
        "mindis": cfg.mindis if cfg.mindis == AUTO else float(cfg.mindis),
        "auto_factor": float(cfg.auto_factor),
    })
    db = snap.merged(part)
    kept, tr = pra_aggregate(RuleSet.from_rules(r for _, r, _, _ in rows), db, cfg)
    art.write_rules(_out(out), kept, _records(kept, db), snap.universe, digest)
    if trace is not None:
        payload = tr.to_dict(snap.universe)
        payload.update({"schema": art.SCHEMA_VERSION, "config": digest,
                        "input_rules": len(rows), "output_rules": len(kept)})
        art.write_json(trace, payload)
    log.info("pra: kept %d of %d rules (mindis %.6g)", len(kept), len(rows), tr.mindis)
    return digest


def _read_any_rules(path, universe):
    """Per-user or plain ruleset CSV as ``(digest, {user: [rule, ...]})``."""
    try:
        digest, rows = art.read_rules(path, universe, per_user=True)
    except MissingArtifact:
        raise
    except CPBeliefError:
        digest, rows = art.read_rules(path, universe)
    grouped: dict[str, list] = {}
    for user, rule, _, _ in rows:
        grouped.setdefault(user or "", []).append(rule)
    return digest, grouped


def stage_rank(prefs, system, rules, out, spec: BeliefFunctionSpec, key: str = "eta",
               top: int | None = None, consensus_on: str = "train", user_part: str = "train",
               deviation: str = "mean", jobs: int = 1) -> str:
    snap = art.read_snapshot(prefs, kind="prefs")
    universe = snap.universe
    sys_digest, sys_rows = art.read_rules(system, universe)
    rules_digest, grouped = _read_any_rules(rules, universe)
    fn = spec.build()
    digest = art.config_digest({
        "stage": "rank",
        "upstream": [snap.digest, sys_digest, rules_digest],
        "belief_fn": fn.name,
        "parameters": fn.settings(),
        "key": key,
        "top": top,
        "consensus_on": consensus_on,
        "user_part": user_part,
        "deviation": deviation,
    })
    bs = BeliefSystem(RuleSet.from_rules(r for _, r, _, _ in sys_rows), snap.merged(consensus_on))
    bs.agree  # materialise before worker threads share the system
    user_dbs = snap.per_user(user_part)

    def one(user):
        db = user_dbs.get(user) if user else snap.merged(user_part)
        if db is None or len(db) == 0:
            db = bs.db
        scored = score_ruleset(grouped[user], bs, fn, db=db, deviation_mode=deviation)
        position = {id(s): i + 1 for i, s in enumerate(rank_topk(scored, max(1, len(scored)), key))}
        return [(user, s, position[id(s)]) for s in scored if top is None or position[id(s)] <= top]

    rows = [row for chunk in _map(one, sorted(grouped), jobs) for row in chunk]
    art.write_scores(_out(out), rows, digest)
    log.info("rank: scored %d rules with %s", len(rows), spec.name)
    return digest


def stage_eval(prefs, scores, out, ks=DEFAULT_KS, seed: int = 0, keys=EXPERIMENT_KEYS,
               standard_f1: bool = False) -> str:
    snap = art.read_snapshot(prefs, kind="prefs")
    scores_digest, scored = art.read_scores(scores, snap.universe)
    digest = art.config_digest({
        "stage": "eval",
        "upstream": [snap.digest, scores_digest],
        "ks": list(ks),
        "keys": list(keys),
        "seed": seed,
        "standard_f1": standard_f1,
    })
    per_user = {u: [s for s, _ in rows] for u, rows in scored.items()}
    rows = topk_experiment(per_user, list(ks), snap.per_user("test"), snap.per_user("train"),
                           seed=seed, keys=list(keys), standard=standard_f1)
    art.write_eval(_out(out), rows, digest)
    log.info("eval: %d users, %d rows", len(per_user), len(rows))
    return digest


def stage_measures(prefs, rules, out, part: str = "train") -> str:
    snap = art.read_snapshot(prefs, kind="prefs")
    rules_digest, rows = art.read_rules(rules, snap.universe)
    digest = art.config_digest({"stage": "measures", "upstream": [snap.digest, rules_digest], "part": part})
    db = snap.merged(part)
    rs = [r for _, r, _, _ in rows]
    art.write_measures(_out(out), rs, _records(rs, db), snap.universe, digest)
    return digest


def stage_synth(out, n_users: int = 200, n_attributes: int = 12, pairs_per_user: int = 60,
                noise: float = 0.1, split: float = 0.8, seed: int = 0) -> str:
    cfg = PlantedConfig(n_users=n_users, n_attributes=n_attributes, pairs_per_user=pairs_per_user,
                        noise=noise, split_ratio=split, seed=seed)
    fx = generate(cfg)
    digest = art.config_digest({"stage": "synth", **dataclasses.asdict(cfg)})
    fx.snapshot.digest = digest
    art.write_snapshot(out, fx.snapshot)
    return digest


# -- pipeline ----------------------------------------------------------------

ARTIFACTS = {
    "transactions": "transactions.npz",
    "prefs": "prefs.npz",
    "consensus": "consensus_rules.csv",
    "system": "belief_system.csv",
    "trace": "pra_trace.json",
    "user_rules": "user_rules.csv",
}


def run_pipeline(cfg: RunConfig, config_path=None) -> dict:
    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "failure.json").unlink(missing_ok=True)
    written: list[Path] = []
    stage = "setup"
    inputs = {}

    def path(name):
        p = outdir / name
        written.append(p)
        return p

    try:
        if cfg.input.prefs is not None:
            stage = "prefs"
            if not Path(cfg.input.prefs).exists():
                raise MissingArtifact(f"prefs snapshot not found: {cfg.input.prefs}")
            prefs = Path(cfg.input.prefs)
            inputs["prefs"] = art.file_digest(prefs)
        else:
            stage = "ingest"
            for key in ("ratings", "items"):
                p = getattr(cfg.input, key)
                if p is None or not Path(p).exists():
                    raise IngestError(f"{key} input not found: {p}")
                inputs[key] = art.file_digest(p)
            tx = path(ARTIFACTS["transactions"])
            stage_ingest(cfg.input.ratings, cfg.input.items, tx, cfg.input.universe_policy)
            stage = "prefs"
            prefs = path(ARTIFACTS["prefs"])
            stage_prefs(tx, prefs, cfg.ingest_config())

        on = cfg.consensus.part
        stage = "mine"
        consensus = path(ARTIFACTS["consensus"])
        stage_mine(prefs, consensus, cfg.consensus_miner(), "consensus", on, cfg.jobs)
        stage = "pra"
        system = path(ARTIFACTS["system"])
        stage_pra(prefs, consensus, system, cfg.pra_config(), path(ARTIFACTS["trace"]), on)
        stage = "mine"
        user_rules = path(ARTIFACTS["user_rules"])
        stage_mine(prefs, user_rules, cfg.user_miner(), "users", "train", cfg.jobs)
        for spec in cfg.belief_specs():
            stage = "rank"
            scores = path(f"scores_{spec.name}.csv")
            stage_rank(prefs, system, user_rules, scores, spec, cfg.eval.key, None, on, "train",
                       cfg.belief.deviation, cfg.jobs)
            stage = "eval"
            stage_eval(prefs, scores, path(f"eval_{spec.name}.csv"), cfg.eval.ks, cfg.seed,
                       EXPERIMENT_KEYS, cfg.eval.standard_f1)
    except CPBeliefError as exc:
        for p in written:
            p.unlink(missing_ok=True)
        record = _error_record(exc, stage)
        art.write_json(outdir / "failure.json", record)
        raise

    manifest = {
        "schema": art.SCHEMA_VERSION,
        "config": cfg.to_dict(),
        "config_file": str(config_path) if config_path else None,
        "config_digest": art.config_digest(_result_settings(cfg)),
        "inputs": inputs,
        "artifacts": {p.name: art.file_digest(p) for p in sorted(set(written))},
        "versions": {
            "cpbelief": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
    }
    art.write_json(outdir / "manifest.json", manifest)
    return manifest


def _result_settings(cfg: RunConfig) -> dict:
    """Config keys that can change the results (not where or how fast they are written)."""
    doc = cfg.to_dict()
    doc.pop("output_dir")
    doc.pop("jobs")
    return doc


def _error_record(exc: BaseException, stage: str) -> dict:
    return {
        "stage": stage,
        "error": type(exc).__name__,
        "message": str(exc),
        "exit_code": getattr(exc, "exit_code", 1),
    }


# -- argument parsing --------------------------------------------------------


def _ks(text: str) -> list[int]:
    try:
        ks = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad K list {text!r}") from None
    if not ks or min(ks) < 1:
        raise argparse.ArgumentTypeError("K values must be positive")
    return ks


def _mindis(text: str):
    if text == AUTO:
        return AUTO
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError("mindis must be a number or 'auto'") from None


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="cpbelief",
        description="Mine contextual preference rules, aggregate a consensus belief system and rank "
        "each user's rules against it.",
    )
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("--jobs", type=int, default=1, help="worker threads for per-user work")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse ratings and items into a transaction snapshot")
    p.add_argument("--ratings", required=True)
    p.add_argument("--items", required=True)
    p.add_argument("--universe-policy", choices=("items", "rated"), default="items")
    p.add_argument("-o", "--out", required=True)

    p = sub.add_parser("prefs", help="build per-user preference pairs and the train/test split")
    p.add_argument("--transactions", required=True)
    p.add_argument("--high", type=float, default=4.0)
    p.add_argument("--gap", type=float, default=0.5)
    p.add_argument("--max-pairs", type=int, default=None)
    p.add_argument("--split", type=float, default=0.8)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("-o", "--out", required=True)

    p = sub.add_parser("synth", help="write a planted-rule preference snapshot")
    p.add_argument("--users", type=int, default=200)
    p.add_argument("--attributes", type=int, default=12)
    p.add_argument("--pairs-per-user", type=int, default=60)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--split", type=float, default=0.8)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("-o", "--out", required=True)

    p = sub.add_parser("mine", help="mine contextual preference rules")
    p.add_argument("--prefs", required=True)
    p.add_argument("--scope", choices=("consensus", "users"), default="consensus")
    p.add_argument("--part", choices=art.PARTS, default="train")
    p.add_argument("--min-supp", type=float, default=0.01)
    p.add_argument("--min-conf", type=float, default=0.7)
    p.add_argument("--max-ctx", type=int, default=2)
    p.add_argument("--max-side", type=int, default=1)
    p.add_argument("-o", "--out", default=STDOUT)

    p = sub.add_parser("pra", help="aggregate a ruleset with PRA")
    p.add_argument("--prefs", required=True)
    p.add_argument("--rules", required=True)
    p.add_argument("--part", choices=art.PARTS, default="train")
    p.add_argument("--mindis", type=_mindis, default=AUTO)
    p.add_argument("--auto-factor", type=float, default=1.5)
    p.add_argument("--trace", default=None, help="write the JSON trace here")
    p.add_argument("-o", "--out", default=STDOUT)

    p = sub.add_parser("rank", help="score rules against a belief system")
    p.add_argument("--prefs", required=True)
    p.add_argument("--system", required=True)
    p.add_argument("--rules", required=True)
    p.add_argument("--belief-fn", choices=registered_functions(), default="cov")
    p.add_argument("--k1", type=float, default=None)
    p.add_argument("--k2", type=float, default=None)
    p.add_argument("--k3", type=float, default=None)
    p.add_argument("--key", choices=[k.value for k in RankKey], default="eta")
    p.add_argument("--top", type=int, default=None)
    p.add_argument("--consensus-on", choices=("train", "all"), default="train")
    p.add_argument("--deviation", choices=DEVIATION_MODES, default="mean")
    p.add_argument("-o", "--out", default=STDOUT)

    p = sub.add_parser("eval", help="Top-K evaluation of scored rules")
    p.add_argument("--prefs", required=True)
    p.add_argument("--scores", required=True)
    p.add_argument("--ks", type=_ks, default=list(DEFAULT_KS))
    p.add_argument("--keys", default=",".join(EXPERIMENT_KEYS))
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--standard-f1", action="store_true")
    p.add_argument("-o", "--out", default=STDOUT)

    p = sub.add_parser("measures", help="per-rule measure records")
    p.add_argument("action", choices=("dump",))
    p.add_argument("--prefs", required=True)
    p.add_argument("--rules", required=True)
    p.add_argument("--part", choices=art.PARTS, default="train")
    p.add_argument("-o", "--out", default=STDOUT)

    p = sub.add_parser("pipeline", help="run every stage from a config file")
    p.add_argument("config")
    p.add_argument("--output-dir", default=None)
    return ap


def _dispatch(args) -> None:
    cmd = args.command
    if cmd == "ingest":
        stage_ingest(args.ratings, args.items, args.out, args.universe_policy)
    elif cmd == "prefs":
        cfg = IngestConfig(args.high, args.gap, args.max_pairs, args.split, args.seed)
        stage_prefs(args.transactions, args.out, cfg)
    elif cmd == "synth":
        stage_synth(args.out, args.users, args.attributes, args.pairs_per_user, args.noise,
                    args.split, args.seed)
    elif cmd == "mine":
        cfg = MinerConfig(args.min_supp, args.min_conf, args.max_ctx, args.max_side)
        stage_mine(args.prefs, args.out, cfg, args.scope, args.part, args.jobs)
    elif cmd == "pra":
        stage_pra(args.prefs, args.rules, args.out, PraConfig(args.mindis, args.auto_factor),
                  args.trace, args.part)
    elif cmd == "rank":
        params = {k: getattr(args, k) for k in ("k1", "k2", "k3") if getattr(args, k) is not None}
        if params and args.belief_fn not in ("cos", "cosine", "imcos"):
            raise SystemExit("--k1/--k2/--k3 only apply to the cosine belief function")
        stage_rank(args.prefs, args.system, args.rules, args.out,
                   BeliefFunctionSpec(args.belief_fn, params), args.key, args.top,
                   args.consensus_on, "train", args.deviation, args.jobs)
    elif cmd == "eval":
        keys = [k for k in args.keys.split(",") if k]
        bad = set(keys) - set(EXPERIMENT_KEYS)
        if bad:
            raise SystemExit(f"unknown ranking key(s): {sorted(bad)}")
        stage_eval(args.prefs, args.scores, args.out, args.ks, args.seed, keys, args.standard_f1)
    elif cmd == "measures":
        stage_measures(args.prefs, args.rules, args.out, args.part)
    elif cmd == "pipeline":
        cfg = load_config(args.config)
        overrides = {}
        if args.output_dir is not None:
            overrides["output_dir"] = args.output_dir
        if args.jobs != 1:
            overrides["jobs"] = args.jobs
        if overrides:
            cfg = dataclasses.replace(cfg, **overrides)
        run_pipeline(cfg, args.config)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        _dispatch(args)
    except CPBeliefError as exc:
        print(json.dumps(_error_record(exc, args.command)), file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
