"""Line-oriented ``key = value`` run configs with ``[section]`` headers."""
from __future__ import annotations

import configparser
import dataclasses
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

from pointsea.pcdata import DatasetConfig
from pointsea.searchopt import EvalConfig, SearchConfig
from pointsea.seaconv import ConvConfig
from pointsea.supernet import NetConfig

# desk-scale defaults: small enough that a search plus retrain fits on one core
DESK_CONV = ConvConfig(levels=2, nodes=4, width=4, mlp_width=4)
DESK_NET = NetConfig(cells=2, channels=32, k=9, num_classes=4, conv=DESK_CONV)
DESK_EVAL = EvalConfig(cells=4, k=9)

ABLATION_ROWS = {
    "A": ("e1",),
    "B": ("e1", "e2"),
    "C": ("e1", "e3"),
    "D": ("e1", "e2", "e3"),
    "E": ("e1", "e2", "e3", "e4"),
    "F": ("e1", "e2", "e3", "e4", "e5"),
    "G": ("e1", "e2", "e3", "e4", "e5"),
}
GREEDY_ROWS = ("G",)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class AblateConfig:
    rows: tuple = tuple(ABLATION_ROWS)
    seeds: tuple = (0, 1, 2)
    # extra full-EA epsilon-greedy searches, one per value; empty skips the sweep
    epsilons: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(self.rows))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        object.__setattr__(self, "epsilons", tuple(float(e) for e in self.epsilons))
        if any(not 0.0 <= e <= 1.0 for e in self.epsilons):
            raise ConfigError(f"sweep epsilons must lie in [0, 1], got {self.epsilons}")
        bad = [r for r in self.rows if r not in ABLATION_ROWS]
        if bad:
            raise ConfigError(f"unknown ablation rows {bad}; choose from {list(ABLATION_ROWS)}")
        if not self.seeds:
            raise ConfigError("ablation needs at least one seed")


@dataclass(frozen=True)
class RunConfig:
    seed: int | None = None
    dataset: DatasetConfig = DatasetConfig()
    net: NetConfig = DESK_NET
    search: SearchConfig = SearchConfig()
    eval: EvalConfig = DESK_EVAL
    ablate: AblateConfig = field(default_factory=AblateConfig)

    def resolved(self) -> "RunConfig":
        """Seed pushed into the search and eval stages; class count from the dataset."""
        if self.seed is None:
            raise ConfigError("a seed is mandatory: set [run] seed or pass --seed")
        net = self.net.replace(num_classes=len(self.dataset.classes))
        return dataclasses.replace(
            self, net=net,
            search=dataclasses.replace(self.search, seed=self.seed),
            eval=dataclasses.replace(self.eval, seed=self.seed),
        )

    def with_overrides(self, **kw) -> "RunConfig":
        """Apply flag overrides; ``None`` values are ignored."""
        cfg = self
        if kw.get("seed") is not None:
            cfg = dataclasses.replace(cfg, seed=int(kw["seed"]))
        if kw.get("epsilon") is not None:
            cfg = dataclasses.replace(cfg, search=dataclasses.replace(cfg.search, epsilon=float(kw["epsilon"])))
        conv = {}
        if kw.get("ea_subset") is not None:
            conv["ea_subset"] = kw["ea_subset"]
        for key in ("levels", "nodes"):
            if kw.get(key) is not None:
                conv[key] = int(kw[key])
        if conv:
            cfg = dataclasses.replace(cfg, net=cfg.net.replace(conv=cfg.net.conv.replace(**conv)))
        stage = kw.get("stage", "search")
        for key in ("cells", "k"):
            if kw.get(key) is None:
                continue
            if stage == "eval":
                cfg = dataclasses.replace(cfg, eval=dataclasses.replace(cfg.eval, **{key: int(kw[key])}))
            else:
                cfg = dataclasses.replace(cfg, net=cfg.net.replace(**{key: int(kw[key])}))
        return cfg

    def canonical(self) -> str:
        return dumps(self)

    def config_hash(self) -> str:
        """sha256 over the sections that shape a search (seed, data, network,
        search); retraining settings are left out so eval overrides keep the hash."""
        keep = [f"[{name}]\n" + "".join(f"{k} = {_format(v)}\n" for k, v in items)
                for name, items in _sections(self) if name in HASHED_SECTIONS]
        return hashlib.sha256("\n".join(keep).encode()).hexdigest()


HASHED_SECTIONS = ("run", "dataset", "net", "conv", "search")
_NET_DERIVED = {"conv", "num_classes"}
_CONV_DERIVED = {"in_features", "out_features", "preset"}


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return "none"
    if isinstance(v, (tuple, list)):
        return ", ".join(_format(x) for x in v)
    if hasattr(v, "label"):
        return v.label
    return repr(v) if isinstance(v, float) else str(v)


_NULLABLE = {"mlp_width", "seed"}


def _parse(raw: str, default, key: str):
    raw = raw.strip()
    if raw.lower() == "none" and key.split()[-1] in _NULLABLE:
        return None
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if default is None:
            return None if raw.lower() == "none" else int(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            parts = tuple(p.strip() for p in raw.split(",") if p.strip())
            if default and isinstance(default[0], float):
                return tuple(float(p) for p in parts)
            if default and isinstance(default[0], int) and not hasattr(default[0], "label"):
                return tuple(int(p) for p in parts)
            return parts
        return raw
    except ValueError:
        raise ConfigError(f"bad value {raw!r} for {key}") from None


def _section_items(obj, skip=()) -> list[tuple[str, object]]:
    return [(f.name, getattr(obj, f.name)) for f in dataclasses.fields(obj) if f.name not in skip]


def _sections(cfg: RunConfig) -> list[tuple[str, list[tuple[str, object]]]]:
    return [
        ("run", [("seed", cfg.seed)]),
        ("dataset", _section_items(cfg.dataset)),
        ("net", _section_items(cfg.net, _NET_DERIVED)),
        ("conv", _section_items(cfg.net.conv, _CONV_DERIVED)),
        ("search", _section_items(cfg.search, {"seed"})),
        ("eval", _section_items(cfg.eval, {"seed"})),
        ("ablate", _section_items(cfg.ablate)),
    ]


def dumps(cfg: RunConfig) -> str:
    out = []
    for name, items in _sections(cfg):
        out.append(f"[{name}]")
        out.extend(f"{k} = {_format(v)}" for k, v in items)
        out.append("")
    return "\n".join(out)


def loads(text: str, base: RunConfig | None = None) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"), inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as e:
        raise ConfigError(f"unparseable config: {' '.join(str(e).split())}") from None
    cfg = base or RunConfig()
    known = dict(_sections(cfg))
    unknown = [s for s in parser.sections() if s not in known]
    if unknown:
        raise ConfigError(f"unknown config sections {unknown}")
    values = {}
    for sec in parser.sections():
        defaults = dict(known[sec])
        if sec == "run":
            defaults = {"seed": None}
        for key, raw in parser.items(sec):
            if key not in defaults:
                raise ConfigError(f"unknown key {key!r} in [{sec}]")
            values[(sec, key)] = _parse(raw, defaults[key], f"[{sec}] {key}")

    def pick(sec):
        return {k: v for (s, k), v in values.items() if s == sec}

    try:
        seed = pick("run").get("seed", cfg.seed)
        conv = cfg.net.conv.replace(**pick("conv"))
        net = cfg.net.replace(conv=conv, **pick("net"))
        return RunConfig(
            seed=seed,
            dataset=dataclasses.replace(cfg.dataset, **pick("dataset")),
            net=net,
            search=dataclasses.replace(cfg.search, **pick("search")),
            eval=dataclasses.replace(cfg.eval, **pick("eval")),
            ablate=dataclasses.replace(cfg.ablate, **pick("ablate")),
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from None


def load(path) -> RunConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file {p} not found")
    return loads(p.read_text())
