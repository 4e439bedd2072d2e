"""Run configuration: a YAML file whose bare defaults reproduce the reference setup."""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .channel import NoiseModel
from .cvtmap import MaintenanceConfig, compute_thresholds
from .scenario import ScenarioConfig
from .tpf import TpfConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    noise: NoiseModel = field(default_factory=NoiseModel)
    maintenance: MaintenanceConfig = field(default_factory=MaintenanceConfig)
    tpf: TpfConfig = field(default_factory=TpfConfig)
    densities: tuple[int, ...] = (1, 2, 4, 8, 12, 16, 24)
    slots: int = 300
    slot_duration: float = 0.1
    seeds: tuple[int, ...] = (0,)
    output: str = "out"
    sweep_gaps: tuple[float, ...] = (6.0, 24.0, 60.0, math.inf)
    sweep_densities: tuple[int, ...] = (1, 2, 4)
    derive_thresholds: bool = False
    max_range: float = 100.0
    threshold_sigmas: float = 2.0
    jobs: int = 1

    def __post_init__(self):
        if not self.seeds:
            raise ConfigError("seeds must not be empty")
        if any(d < 1 for d in self.densities) or any(d < 1 for d in self.sweep_densities):
            raise ConfigError("densities must be >= 1")
        if self.slots < 1:
            raise ConfigError("slots must be >= 1")
        if self.slot_duration <= 0:
            raise ConfigError("slot_duration must be positive")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        if self.tpf.ue_height != self.scenario.ue_height:
            object.__setattr__(self, "tpf", dataclasses.replace(self.tpf, ue_height=self.scenario.ue_height))
        if self.derive_thresholds:
            la, lm = compute_thresholds(self.max_range, self.threshold_sigmas,
                                        self.noise.sigma_d, self.noise.sigma_angle)
            object.__setattr__(self, "maintenance", dataclasses.replace(
                self.maintenance, assoc_threshold=la, merge_threshold=lm))

    def replace(self, **kw) -> "RunConfig":
        return dataclasses.replace(self, **kw)


# Angles live in degrees in the file, radians in code.
_DEGREE_KEYS = {"sigma_angle": "sigma_angle_deg", "sigma_omega": "sigma_omega_deg"}


def _num(v):
    if isinstance(v, str) and v.strip().lower() in ("inf", "infinity", ".inf"):
        return math.inf
    return v


def _section(cls, data: dict | None, name: str):
    data = dict(data or {})
    kwargs = {}
    known = {f.name for f in dataclasses.fields(cls)}
    for key, value in data.items():
        if cls is NoiseModel and key in _DEGREE_KEYS.values():
            rad = next(k for k, v in _DEGREE_KEYS.items() if v == key)
            kwargs[rad] = math.radians(float(value))
            continue
        if key not in known:
            raise ConfigError(f"unknown key {name}.{key}")
        if isinstance(value, list):
            value = tuple(_num(v) for v in value)
        kwargs[key] = _num(value)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid [{name}] section: {exc}") from exc


def from_dict(data: dict[str, Any]) -> RunConfig:
    data = dict(data or {})
    sections = {
        "scenario": ScenarioConfig,
        "noise": NoiseModel,
        "maintenance": MaintenanceConfig,
        "tpf": TpfConfig,
    }
    kwargs: dict[str, Any] = {}
    for name, cls in sections.items():
        kwargs[name] = _section(cls, data.pop(name, None), name)
    top = {f.name for f in dataclasses.fields(RunConfig)} - set(sections)
    for key, value in data.items():
        if key not in top:
            raise ConfigError(f"unknown key {key}")
        if isinstance(value, list):
            value = tuple(_num(v) for v in value)
        kwargs[key] = _num(value)
    try:
        return RunConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load(path: str | Path) -> RunConfig:
    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if data is not None and not isinstance(data, dict):
        raise ConfigError("config file must hold a mapping")
    return from_dict(data or {})


def _plain(v):
    if isinstance(v, tuple):
        return [_plain(x) for x in v]
    if isinstance(v, float) and math.isinf(v):
        return "inf"
    return v


def to_dict(cfg: RunConfig) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if dataclasses.is_dataclass(v):
            sec = {}
            for g in dataclasses.fields(v):
                x = getattr(v, g.name)
                if isinstance(v, NoiseModel) and g.name in _DEGREE_KEYS:
                    sec[_DEGREE_KEYS[g.name]] = round(math.degrees(x), 12)
                else:
                    sec[g.name] = _plain(x)
            out[f.name] = sec
        else:
            out[f.name] = _plain(v)
    return out


def dump(cfg: RunConfig) -> str:
    return yaml.safe_dump(to_dict(cfg), sort_keys=False)
