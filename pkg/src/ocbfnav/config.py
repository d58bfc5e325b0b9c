"""Versioned YAML run configuration with line-precise validation errors.

Every section mirrors the keyword arguments of the object it builds, so the
defaults live in one place (the dataclasses themselves).
"""

from __future__ import annotations

import dataclasses
import inspect
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Sequence

import yaml

from .certificates import CertificateModel
from .controller import ControllerConfig
from .dynamics import ControlGrid
from .environments import EnvConfig
from .simulate import SimConfig
from .training import TrainConfig

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Invalid configuration; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: Optional[int] = None, source: str = "<config>"):
        self.line = line
        self.source = source
        where = f"{source}:{line}" if line is not None else source
        super().__init__(f"{where}: {message}")


def _dataclass_defaults(cls, skip=()) -> Dict[str, Any]:
    out = {}
    for f in dataclasses.fields(cls):
        if not f.init or f.name in skip:
            continue
        if f.default is not dataclasses.MISSING:
            out[f.name] = f.default
    return out


def _signature_defaults(fn, skip=()) -> Dict[str, Any]:
    return {k: p.default for k, p in inspect.signature(fn).parameters.items()
            if p.default is not inspect.Parameter.empty and k not in skip}


def default_sections() -> Dict[str, Dict[str, Any]]:
    return {
        "model": _signature_defaults(CertificateModel.init, skip=("seed",)),
        "controller": {**_dataclass_defaults(ControllerConfig, skip=("grid",)),
                       **_signature_defaults(ControlGrid.uniform)},
        "sim": _dataclass_defaults(SimConfig, skip=("n_rays",)),  # ray count lives in model
        "env": _dataclass_defaults(EnvConfig),
        "train": {**_dataclass_defaults(TrainConfig, skip=("seed",)), "n_envs": 15},
        "verify": {"samples": 100_000, "n_envs": 50},
        "bench": {"n_envs": 500, "workers": 1, "policy": "hybrid"},
        "bugtrap": {"episodes": 20, "max_time": 60.0},
    }


@dataclass
class RunConfig:
    seed: int = 0
    sections: Dict[str, Dict[str, Any]] = field(default_factory=default_sections)

    def __getitem__(self, name: str) -> Dict[str, Any]:
        return self.sections[name]

    # builders -----------------------------------------------------------

    def model_kwargs(self) -> dict:
        return dict(self["model"])

    def controller(self) -> ControllerConfig:
        c = dict(self["controller"])
        grid_keys = _signature_defaults(ControlGrid.uniform)
        grid = ControlGrid.uniform(**{k: c.pop(k) for k in grid_keys})
        return ControllerConfig(grid=grid, **c)

    def sim(self, max_time: Optional[float] = None) -> SimConfig:
        s = dict(self["sim"], n_rays=self["model"]["n_rays"])
        if max_time is not None:
            s["max_time"] = max_time
        return SimConfig(**s)

    def env(self) -> EnvConfig:
        return EnvConfig(**self["env"])

    def train(self) -> TrainConfig:
        t = {k: v for k, v in self["train"].items() if k != "n_envs"}
        return TrainConfig(seed=self.seed, **t)

    def to_dict(self) -> dict:
        return {"version": SCHEMA_VERSION, "seed": self.seed,
                **{k: {kk: list(vv) if isinstance(vv, tuple) else vv for kk, vv in v.items()}
                   for k, v in self.sections.items()}}

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True)


# ------------------------------------------------------------------ validation


def _line(node) -> Optional[int]:
    return node.start_mark.line + 1 if node is not None else None


def _coerce(value, default, where: str, line, source):
    def bad(expect):
        raise ConfigError(f"{where}: expected {expect}, got {value!r}", line, source)

    if isinstance(default, bool):
        if not isinstance(value, bool):
            bad("true or false")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            bad("an integer")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            bad("a number")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            bad("a string")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, list) or len(value) != len(default):
            bad(f"a list of {len(default)} numbers")
        return tuple(_coerce(v, d, where, line, source) for v, d in zip(value, default))
    if default is None:
        return value
    raise ConfigError(f"{where}: unsupported setting", line, source)


def _mapping_items(node):
    return {k.value: (k, v) for k, v in node.value}


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    """Validate YAML text against the schema; unknown keys and wrong types are errors."""
    try:
        root = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        raise ConfigError(f"YAML syntax error: {getattr(e, 'problem', e)}",
                          mark.line + 1 if mark else None, source) from None
    cfg = RunConfig()
    if root is None:
        return cfg
    if not isinstance(root, yaml.MappingNode) or not isinstance(data, dict):
        raise ConfigError("top level must be a mapping", _line(root), source)
    nodes = _mapping_items(root)
    lines: Dict[str, int] = {}
    version = data.get("version")
    if version != SCHEMA_VERSION:
        line = _line(nodes["version"][1]) if "version" in nodes else 1
        raise ConfigError(f"unsupported or missing version {version!r} (expected {SCHEMA_VERSION})",
                          line, source)
    for key, value in data.items():
        knode, vnode = nodes[key]
        if key == "version":
            continue
        if key == "seed":
            cfg.seed = _coerce(value, 0, "seed", _line(vnode), source)
            continue
        if key not in cfg.sections:
            raise ConfigError(f"unknown section {key!r}", _line(knode), source)
        if not isinstance(value, dict):
            raise ConfigError(f"section {key!r} must be a mapping", _line(vnode), source)
        inner = _mapping_items(vnode)
        lines[key] = _line(knode)
        section = cfg.sections[key]
        for name, v in value.items():
            kn, vn = inner[name]
            if name not in section:
                raise ConfigError(f"unknown key {key}.{name}", _line(kn), source)
            section[name] = _coerce(v, section[name], f"{key}.{name}", _line(vn), source)
    _check_ranges(cfg, source, lines)
    return cfg


def _check_ranges(cfg: RunConfig, source: str, lines: Optional[Dict[str, int]] = None) -> None:
    lines = lines or {}
    # build every object once so their own validation reports inconsistent values
    for name, build in (("controller", cfg.controller), ("sim", cfg.sim), ("env", cfg.env),
                        ("train", cfg.train)):
        try:
            build()
        except (TypeError, ValueError) as e:
            raise ConfigError(f"section {name!r}: {e}", lines.get(name), source) from None
    if cfg["bench"]["policy"] not in ("hybrid", "clf_greedy"):
        raise ConfigError("bench.policy must be hybrid or clf_greedy", lines.get("bench"), source)


def load_config(path) -> RunConfig:
    with open(path) as f:
        return parse_config(f.read(), str(path))


def apply_overrides(cfg: RunConfig, pairs: Sequence[str]) -> RunConfig:
    """Apply ``section.key=value`` strings (values parsed as YAML scalars)."""
    for pair in pairs:
        if "=" not in pair or "." not in pair.split("=", 1)[0]:
            raise ConfigError(f"override {pair!r} must look like section.key=value", None, "--set")
        dotted, raw = pair.split("=", 1)
        section, key = dotted.split(".", 1)
        if section not in cfg.sections or key not in cfg.sections[section]:
            raise ConfigError(f"unknown key {dotted}", None, "--set")
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError:
            raise ConfigError(f"cannot parse value {raw!r}", None, "--set") from None
        cfg.sections[section][key] = _coerce(value, cfg.sections[section][key], dotted, None, "--set")
    _check_ranges(cfg, "--set")
    return cfg
