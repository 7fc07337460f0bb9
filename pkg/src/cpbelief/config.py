"""Pipeline run configuration.

A run is described by one YAML (or JSON) document; any key can be overridden
from the environment as ``CPB_<SECTION>_<KEY>`` (or ``CPB_<KEY>`` for
top-level keys), with values parsed as YAML scalars.
"""

from __future__ import annotations

import dataclasses
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .belief import DEVIATION_MODES, BeliefFunctionSpec, RankKey, registered_functions
from .errors import ConfigError
from .ingest import IngestConfig
from .miner import MinerConfig
from .pra import AUTO, PraConfig

log = logging.getLogger(__name__)

ENV_PREFIX = "CPB_"
DEFAULT_KS = tuple(range(5, 55, 5))


@dataclass(frozen=True)
class InputSection:
    ratings: str | None = None
    items: str | None = None
    prefs: str | None = None  # pre-built snapshot; skips ingest/prefs
    universe_policy: str = "items"


@dataclass(frozen=True)
class IngestSection:
    high: float = 4.0
    gap: float = 0.5
    max_pairs: int | None = None
    split: float = 0.8


@dataclass(frozen=True)
class MineSection:
    min_support: float = 0.01
    min_confidence: float = 0.7
    max_context: int = 2
    max_side: int = 1


@dataclass(frozen=True)
class ConsensusSection(MineSection):
    part: str = "train"  # which pairs feed consensus mining, PRA and the system


@dataclass(frozen=True)
class PraSection:
    mindis: float | str = AUTO
    auto_factor: float = 1.5


@dataclass(frozen=True)
class BeliefSection:
    functions: tuple[str, ...] = ("cov", "cos")
    k1: float = 1.2
    k2: float = 1.5
    k3: float = 0.6
    deviation: str = "mean"


@dataclass(frozen=True)
class EvalSection:
    ks: tuple[int, ...] = DEFAULT_KS
    key: str = "eta"
    standard_f1: bool = False


@dataclass(frozen=True)
class RunConfig:
    seed: int
    output_dir: str = "out"
    jobs: int = 1
    input: InputSection = field(default_factory=InputSection)
    ingest: IngestSection = field(default_factory=IngestSection)
    consensus: ConsensusSection = field(default_factory=lambda: ConsensusSection(min_support=0.01))
    user_mining: MineSection = field(default_factory=lambda: MineSection(min_support=0.005))
    pra: PraSection = field(default_factory=PraSection)
    belief: BeliefSection = field(default_factory=BeliefSection)
    eval: EvalSection = field(default_factory=EvalSection)

    # typed views onto the library configs
    def ingest_config(self) -> IngestConfig:
        i = self.ingest
        return IngestConfig(i.high, i.gap, i.max_pairs, i.split, self.seed)

    def consensus_miner(self) -> MinerConfig:
        c = self.consensus
        return MinerConfig(c.min_support, c.min_confidence, c.max_context, c.max_side)

    def user_miner(self) -> MinerConfig:
        c = self.user_mining
        return MinerConfig(c.min_support, c.min_confidence, c.max_context, c.max_side)

    def pra_config(self) -> PraConfig:
        return PraConfig(self.pra.mindis, self.pra.auto_factor)

    def belief_specs(self) -> list[BeliefFunctionSpec]:
        b = self.belief
        out = []
        for name in b.functions:
            params = {"k1": b.k1, "k2": b.k2, "k3": b.k3} if name in ("cos", "cosine", "imcos") else {}
            out.append(BeliefFunctionSpec(name, params))
        return out

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_SECTIONS = ("input", "ingest", "consensus", "user_mining", "pra", "belief", "eval")
_TOP = ("seed", "output_dir", "jobs")


def _env_overrides(doc: dict, environ) -> dict:
    doc = {k: (dict(v) if isinstance(v, dict) else v) for k, v in doc.items()}
    for var, raw in sorted(environ.items()):
        if not var.startswith(ENV_PREFIX):
            continue
        key = var[len(ENV_PREFIX):].lower()
        value = yaml.safe_load(raw) if raw != "" else None
        if key in _TOP:
            doc[key] = value
            continue
        for section in sorted(_SECTIONS, key=len, reverse=True):
            if key.startswith(section + "_"):
                doc.setdefault(section, {})
                doc[section][key[len(section) + 1:]] = value
                break
        else:
            raise ConfigError(f"environment variable {var} names no config key")
    return doc


def _build_section(name, base, values) -> object:
    if values is None:
        values = {}
    if not isinstance(values, dict):
        raise ConfigError(f"section {name!r} must be a mapping")
    known = {f.name for f in dataclasses.fields(base)}
    extra = {str(k) for k in values if k not in known}
    if extra:
        raise ConfigError(f"unknown key(s) in {name!r}: {', '.join(sorted(extra))}")
    v = dict(values)
    for k in ("functions", "ks"):
        if k in v and isinstance(v[k], (list, tuple)):
            v[k] = tuple(v[k])
        elif k in v and isinstance(v[k], (str, int)):
            v[k] = tuple(str(v[k]).replace(" ", "").split(",")) if k == "functions" else (int(v[k]),)
    return dataclasses.replace(base, **v)


def from_dict(doc: dict, environ=None) -> RunConfig:
    doc = _env_overrides(doc or {}, os.environ if environ is None else environ)
    extra = {str(k) for k in doc if k not in _SECTIONS and k not in _TOP}
    if extra:
        raise ConfigError(f"unknown top-level key(s): {', '.join(sorted(extra))}")
    if doc.get("seed") is None:
        raise ConfigError("a seed is required")
    try:
        defaults = RunConfig(seed=0)
        kwargs = {name: _build_section(name, getattr(defaults, name), doc.get(name)) for name in _SECTIONS}
        cfg = RunConfig(
            seed=int(doc["seed"]),
            output_dir=str(doc.get("output_dir", "out")),
            jobs=int(doc.get("jobs", 1)),
            **kwargs,
        )
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    validate(cfg)
    return cfg


def load(path, environ=None) -> RunConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        doc = yaml.safe_load(p.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {p}: {exc}") from None
    if doc is not None and not isinstance(doc, dict):
        raise ConfigError("config must be a mapping")
    return from_dict(doc or {}, environ)


def validate(cfg: RunConfig) -> None:
    """Build every sub-config once so invalid values fail before any work."""
    try:
        cfg.ingest_config()
        cfg.consensus_miner()
        cfg.user_miner()
        cfg.pra_config()
        for spec in cfg.belief_specs():
            spec.build()
    except ConfigError:
        raise
    except Exception as exc:
        raise ConfigError(str(exc)) from None
    if cfg.consensus.part not in ("train", "all"):
        raise ConfigError("consensus.part must be 'train' or 'all'")
    if cfg.belief.deviation not in DEVIATION_MODES:
        raise ConfigError(f"belief.deviation must be one of {DEVIATION_MODES}")
    unknown = [f for f in cfg.belief.functions if f not in registered_functions()]
    if unknown or not cfg.belief.functions:
        raise ConfigError(f"unknown belief function(s): {unknown}")
    if cfg.eval.key not in [k.value for k in RankKey]:
        raise ConfigError(f"eval.key must be one of {[k.value for k in RankKey]}")
    if not cfg.eval.ks or any(k < 1 for k in cfg.eval.ks):
        raise ConfigError("eval.ks must be positive counts")
    if cfg.jobs < 1:
        raise ConfigError("jobs must be at least 1")
    if cfg.input.prefs is None and cfg.input.ratings is None:
        raise ConfigError("input needs either prefs or ratings (+ items)")
    if cfg.consensus.min_support < cfg.user_mining.min_support:
        log.warning(
            "consensus min_support %.4g is below the per-user %.4g",
            cfg.consensus.min_support,
            cfg.user_mining.min_support,
        )
