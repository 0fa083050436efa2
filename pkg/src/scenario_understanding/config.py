"""Run configuration: every threshold used by derivation, anticipation, scoring and decisions.

The config file is JSON in the same canonical form as scenario files.  A
partial file overrides only the keys it names; everything else keeps its
default.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field
from typing import Any, Dict, Mapping, Optional

from .geometry import GeometryParams
from .physics import AnticipationParams, PhysicsParams
from .temporal import TemporalParams

CONFIG_ENV = "SCENARIO_UNDERSTANDING_CONFIG"


@dataclass(frozen=True)
class ScoringParams:
    distance_tol: float = 0.5  # m, credit for distance_to_ego
    event_time_tol: float = 1.0  # s, window for matching predicted events
    interval_iou: float = 0.5  # overlap needed to match a state interval
    match_radius: float = 2.0  # m, proximity matching of renamed elements
    weights: Mapping[str, float] = field(
        default_factory=lambda: {"semantic": 1.0, "spatial": 1.0, "temporal": 1.0, "physical": 1.0}
    )


@dataclass(frozen=True)
class DecisionParams:
    corridor_length: float = 15.0  # m ahead of the ego front
    corridor_margin: float = 0.5  # m added on each side of the ego width


@dataclass(frozen=True)
class RunConfig:
    geometry: GeometryParams = GeometryParams()
    temporal: TemporalParams = TemporalParams()
    physics: PhysicsParams = PhysicsParams()
    scoring: ScoringParams = ScoringParams()
    decision: DecisionParams = DecisionParams()
    horizon: float = 6.0  # s
    dt: float = 0.1  # s
    snapshot_period: float = 1.0  # s between semantic/spatial snapshots

    @property
    def anticipation(self) -> AnticipationParams:
        return AnticipationParams(self.geometry, self.temporal, self.physics)


class ConfigError(ValueError):
    pass


def config_to_tree(cfg: RunConfig) -> Dict[str, Any]:
    def plain(value):
        if dataclasses.is_dataclass(value):
            return {f.name: plain(getattr(value, f.name)) for f in dataclasses.fields(value)}
        if isinstance(value, Mapping):
            return {str(k): plain(v) for k, v in sorted(value.items())}
        return value

    return plain(cfg)


def _merge(cls, base, overrides: Mapping[str, Any], path: str):
    if not isinstance(overrides, Mapping):
        raise ConfigError(f"{path}: expected an object")
    names = {f.name: f for f in dataclasses.fields(cls)}
    changes = {}
    for key, value in overrides.items():
        if key not in names:
            raise ConfigError(f"{path}.{key}: unknown setting")
        current = getattr(base, key)
        if dataclasses.is_dataclass(current):
            changes[key] = _merge(type(current), current, value, f"{path}.{key}")
        elif isinstance(current, Mapping):
            if not isinstance(value, Mapping):
                raise ConfigError(f"{path}.{key}: expected an object")
            merged = dict(current)
            merged.update({str(k): _positive(v, f"{path}.{key}.{k}") for k, v in value.items()})
            changes[key] = merged
        else:
            changes[key] = _positive(value, f"{path}.{key}")
    return dataclasses.replace(base, **changes)


def _positive(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not value > 0:
        raise ConfigError(f"{path}: must be a positive number")
    return float(value)


def config_from_tree(tree: Mapping[str, Any], base: RunConfig = RunConfig()) -> RunConfig:
    return _merge(RunConfig, base, tree, "config")


def load_config(path: Optional[str] = None) -> RunConfig:
    """Defaults, overridden by ``path`` or else by the file named in $SCENARIO_UNDERSTANDING_CONFIG."""
    path = path or os.environ.get(CONFIG_ENV)
    if not path:
        return RunConfig()
    with open(path, encoding="utf-8") as fh:
        try:
            tree = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    return config_from_tree(tree)


def config_hash(cfg: RunConfig) -> str:
    text = json.dumps(config_to_tree(cfg), sort_keys=True)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]
