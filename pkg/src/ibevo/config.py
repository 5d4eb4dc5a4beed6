"""Experiment configuration: dataclass tree, presets, YAML loading.

An empty config reproduces the full-scale protocol (100 gamma values x 8
seeds, 795-point frontier). The "desk" preset keeps n = 100 but scales the
sweep down to 10 gamma values x 2 seeds and a 200-point frontier.
"""

from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass, field, fields

import numpy as np
import yaml

from .baselines import NK99Params
from .domain import DomainParams
from .dynamics import SimConfig


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


@dataclass(frozen=True)
class GammaGrid:
    count: int = 100
    lo: float = 1e-8
    hi: float = 10.0

    def __post_init__(self):
        if self.count < 1 or self.lo <= 0 or self.hi < self.lo:
            raise ConfigError(f"bad gamma grid: {self}")

    def values(self) -> np.ndarray:
        return np.logspace(np.log10(self.lo), np.log10(self.hi), self.count)


@dataclass(frozen=True)
class IBGrid:
    beta_count: int = 795
    beta_lo: float = 1.0
    beta_hi: float = 1e7
    tol: float = 1e-10
    max_rounds: int = 5000
    stationary_tol: float = 1e-4

    def __post_init__(self):
        if self.beta_count < 1 or self.beta_lo < 1.0 or self.beta_hi < self.beta_lo:
            raise ConfigError(f"bad beta grid: {self}")
        if self.tol <= 0 or self.max_rounds < 1 or self.stationary_tol <= 0:
            raise ConfigError(f"bad solver tolerances: {self}")

    def schedule(self) -> np.ndarray:
        return np.logspace(np.log10(self.beta_lo), np.log10(self.beta_hi), self.beta_count)


@dataclass(frozen=True)
class TauGrid:
    count: int = 100
    lo: float = 1.0
    hi: float = 1000.0

    def __post_init__(self):
        if self.count < 1 or self.lo <= 0 or self.hi < self.lo:
            raise ConfigError(f"bad tau grid: {self}")

    def values(self) -> np.ndarray:
        return np.logspace(np.log10(self.lo), np.log10(self.hi), self.count)


@dataclass(frozen=True)
class BaselinesConfig:
    tau_grid: TauGrid = field(default_factory=TauGrid)
    nk99: NK99Params = field(default_factory=NK99Params)


@dataclass(frozen=True)
class ExperimentConfig:
    master_seed: int = 0
    domain: DomainParams = field(default_factory=DomainParams)
    gamma_grid: GammaGrid = field(default_factory=GammaGrid)
    seeds: tuple[int, ...] = tuple(range(8))
    sim: SimConfig = field(default_factory=SimConfig)
    ib: IBGrid = field(default_factory=IBGrid)
    baselines: BaselinesConfig = field(default_factory=BaselinesConfig)
    output_dir: str = "out"

    def __post_init__(self):
        if not self.seeds:
            raise ConfigError("seeds list must be non-empty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct")


PRESETS = ("paper", "desk")


def preset_config(name: str) -> ExperimentConfig:
    if name == "paper":
        return ExperimentConfig()
    if name == "desk":
        return ExperimentConfig(
            gamma_grid=GammaGrid(count=10),
            seeds=(0, 1),
            ib=IBGrid(beta_count=200),
        )
    raise ConfigError(f"unknown preset {name!r}; expected one of {PRESETS}")


# ---------------------------------------------------------------------------
# Mapping-to-dataclass plumbing with strict key checking.
# ---------------------------------------------------------------------------

def _coerce(value, typ, path):
    if typing.get_origin(typ) is tuple:
        if not isinstance(value, (list, tuple)) or not all(
            isinstance(v, int) and not isinstance(v, bool) for v in value
        ):
            raise ConfigError(f"{path}: expected a list of integers")
        return tuple(value)
    if dataclasses.is_dataclass(typ):
        if not isinstance(value, dict):
            raise ConfigError(f"{path}: expected a mapping")
        return _build_dataclass(typ, value, path)
    if typ is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number")
        return float(value)
    if typ is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer")
        return value
    if typ is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string")
        return value
    raise ConfigError(f"{path}: unsupported schema type {typ!r}")


def _build_dataclass(cls, data: dict, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping")
    hints = typing.get_type_hints(cls)
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
    kwargs = {
        name: _coerce(value, hints[name], f"{path}.{name}")
        for name, value in data.items()
    }
    try:
        return cls(**kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def config_from_mapping(data: dict | None) -> ExperimentConfig:
    """Build a config from a parsed YAML mapping; missing keys take defaults."""
    if data is None:
        data = {}
    return _build_dataclass(ExperimentConfig, data, "config")


def merge_preset(base: ExperimentConfig, data: dict | None) -> ExperimentConfig:
    """Overlay a (possibly partial) config mapping onto a preset config."""
    if not data:
        return base
    merged = config_to_mapping(base)
    _deep_update(merged, data)
    return config_from_mapping(merged)


def _deep_update(target: dict, src: dict) -> None:
    for k, v in src.items():
        if isinstance(v, dict) and isinstance(target.get(k), dict):
            _deep_update(target[k], v)
        else:
            target[k] = v


def config_to_mapping(cfg: ExperimentConfig) -> dict:
    """Plain-scalar mapping echo of a config (manifest- and YAML-friendly)."""
    def convert(obj):
        if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
            return {f.name: convert(getattr(obj, f.name)) for f in fields(obj)}
        if isinstance(obj, tuple):
            return [convert(v) for v in obj]
        return obj
    return convert(cfg)


def load_config(path, preset: str = "paper") -> ExperimentConfig:
    """Read a YAML config file over the given preset's defaults."""
    with open(path) as fh:
        try:
            data = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if data is not None and not isinstance(data, dict):
        raise ConfigError(f"{path}: config document must be a mapping")
    return merge_preset(preset_config(preset), data)
