"""Scenario configuration: a YAML document mapped onto nested dataclasses.

Unknown keys are rejected so typos fail loudly instead of silently running the
default scenario.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

import yaml


class ConfigError(ValueError):
    pass


@dataclass
class TopologyConfig:
    regions: int = 10
    zones: int = 10
    nodes_per_zone: int = 4
    zone_degree: int = 8
    region_degree: int = 4
    global_degree: int = 2
    delay_base_ms: float = 20.0
    delay_rate_ms: float = 100.0   # per unit of distance in the unit square
    jitter_ms: float = 5.0
    cluster_spread: float = 0.05   # std-dev of node scatter around its zone's center


@dataclass
class DifficultyConfig:
    # 1 : 100 : 10000 so that 100 zones of 10-second blocks give 100-second
    # region blocks per region and 1000-second PRIME blocks; scaled off 1 so
    # retargeting is not pinned at the minimum difficulty
    d_prime: float = 1_000_000.0
    d_region: float = 10_000.0
    d_zone: float = 100.0
    zone_block_time: float = 10.0
    hash_per_node: float = 1.0
    # rate = hash / (d_zone * hash_norm); None derives the value that gives
    # zone_block_time at nominal zone power
    hash_norm: float | None = None
    retarget_window: int = 100
    retarget_clamp: float = 4.0


@dataclass
class DemandConfig:
    tps_per_zone: float = 10.0
    multiplier: float = 1.0
    scope_mix: list = field(default_factory=lambda: [0.80, 0.15, 0.05])
    zone_choices: int = 2
    block_capacity: int = 125      # txs per zone block at multiplier 1
    tick: float = 1.0


@dataclass
class OverheadConfig:
    tx_size: int = 100
    envelope: int = 40
    inventory: int = 36
    header: int = 272
    hash_size: int = 32
    compact_blocks: bool = True    # same-group peers receive 32-byte ids for txs they hold


@dataclass
class GroupConfig:
    migration: bool = True
    chi: float = 0.5
    latency_weight: float = 0.0001  # score units per ms of median delay
    hysteresis: float = 0.02        # relative gain needed to move
    review_mean: float = 30.0


@dataclass
class AttackConfig:
    region: int = 0
    zone: int = 0
    share: float = 0.6             # fraction of the zone's hash power


@dataclass
class SimConfig:
    name: str = "scenario"
    mode: str = "blockreduce"      # or "baseline"
    seed: int = 0
    duration: float = 3600.0
    topology: TopologyConfig = field(default_factory=TopologyConfig)
    difficulty: DifficultyConfig = field(default_factory=DifficultyConfig)
    demand: DemandConfig = field(default_factory=DemandConfig)
    overhead: OverheadConfig = field(default_factory=OverheadConfig)
    groups: GroupConfig = field(default_factory=GroupConfig)
    attack: AttackConfig | None = None

    def __post_init__(self):
        # plain mappings are accepted for any section
        for name, cls in _SECTIONS.items():
            v = getattr(self, name)
            if isinstance(v, dict):
                object.__setattr__(self, name, _build(cls, v, f"config.{name}"))

    @property
    def zone_count(self) -> int:
        return self.topology.regions * self.topology.zones

    @property
    def node_count(self) -> int:
        return self.zone_count * self.topology.nodes_per_zone

    @property
    def hash_norm(self) -> float:
        d = self.difficulty
        if d.hash_norm is not None:
            return d.hash_norm
        return self.topology.nodes_per_zone * d.hash_per_node * d.zone_block_time / d.d_zone

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "SimConfig":
        return from_dict(_merge(self.to_dict(), changes))


_SECTIONS = {"topology": TopologyConfig, "difficulty": DifficultyConfig,
             "demand": DemandConfig, "overhead": OverheadConfig,
             "groups": GroupConfig, "attack": AttackConfig}


def _merge(base: dict, changes: dict) -> dict:
    out = dict(base)
    for k, v in changes.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _build(cls, data: Any, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping")
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    kwargs = {}
    for k, v in data.items():
        if k in _SECTIONS:
            kwargs[k] = None if v is None else _build(_SECTIONS[k], v, f"{where}.{k}")
        else:
            kwargs[k] = v
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def from_dict(data: dict) -> SimConfig:
    cfg = _build(SimConfig, data or {}, "config")
    validate(cfg)
    return cfg


def load_config(path: str | Path) -> SimConfig:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return from_dict(data or {})


def dump_config(cfg: SimConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=True)


def _positive(name: str, value, allow_zero: bool = False) -> None:
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ConfigError(f"{name} must be a number")
    if value < 0 or (value == 0 and not allow_zero):
        raise ConfigError(f"{name} must be {'non-negative' if allow_zero else 'positive'}")


def validate(cfg: SimConfig) -> None:
    t, d, m, o, g = cfg.topology, cfg.difficulty, cfg.demand, cfg.overhead, cfg.groups
    if cfg.mode not in ("blockreduce", "baseline"):
        raise ConfigError("mode must be 'blockreduce' or 'baseline'")
    for name in ("regions", "zones"):
        v = getattr(t, name)
        if not isinstance(v, int) or not 1 <= v <= 256:
            raise ConfigError(f"topology.{name} must be an integer in [1, 256]")
    if not isinstance(t.nodes_per_zone, int) or t.nodes_per_zone < 1:
        raise ConfigError("topology.nodes_per_zone must be a positive integer")
    for name in ("zone_degree", "region_degree", "global_degree"):
        v = getattr(t, name)
        if not isinstance(v, int) or v < 0:
            raise ConfigError(f"topology.{name} must be a non-negative integer")
    for name in ("delay_base_ms", "delay_rate_ms", "jitter_ms", "cluster_spread"):
        _positive(f"topology.{name}", getattr(t, name), allow_zero=True)
    if t.delay_base_ms <= 0:
        raise ConfigError("topology.delay_base_ms must be positive (delays are positive)")
    for name in ("d_prime", "d_region", "d_zone"):
        _positive(f"difficulty.{name}", getattr(d, name))
    if not d.d_prime > d.d_region > d.d_zone:
        raise ConfigError("difficulty ordering violated: need d_prime > d_region > d_zone")
    _positive("difficulty.zone_block_time", d.zone_block_time)
    _positive("difficulty.hash_per_node", d.hash_per_node, allow_zero=True)
    if d.hash_norm is not None:
        _positive("difficulty.hash_norm", d.hash_norm)
    if not isinstance(d.retarget_window, int) or d.retarget_window < 1:
        raise ConfigError("difficulty.retarget_window must be a positive integer")
    if d.retarget_clamp < 1:
        raise ConfigError("difficulty.retarget_clamp must be >= 1")
    _positive("demand.tps_per_zone", m.tps_per_zone, allow_zero=True)
    _positive("demand.multiplier", m.multiplier)
    _positive("demand.tick", m.tick)
    if len(m.scope_mix) != 3 or any(x < 0 for x in m.scope_mix) \
            or abs(sum(m.scope_mix) - 1) > 1e-9:
        raise ConfigError("demand.scope_mix must be three non-negative fractions summing to 1")
    if not isinstance(m.zone_choices, int) or m.zone_choices < 1:
        raise ConfigError("demand.zone_choices must be a positive integer")
    if not isinstance(m.block_capacity, int) or m.block_capacity < 1:
        raise ConfigError("demand.block_capacity must be a positive integer")
    for name in ("tx_size", "envelope", "inventory", "header", "hash_size"):
        _positive(f"overhead.{name}", getattr(o, name), allow_zero=True)
    if not 0 <= g.chi <= 1:
        raise ConfigError("groups.chi must lie in [0, 1]")
    _positive("groups.latency_weight", g.latency_weight, allow_zero=True)
    _positive("groups.hysteresis", g.hysteresis, allow_zero=True)
    _positive("groups.review_mean", g.review_mean)
    _positive("duration", cfg.duration, allow_zero=True)
    if not isinstance(cfg.seed, int):
        raise ConfigError("seed must be an integer")
    if cfg.attack is not None:
        a = cfg.attack
        if not (0 <= a.region < t.regions and 0 <= a.zone < t.zones):
            raise ConfigError("attack location outside the topology")
        if not 0 <= a.share < 1:
            raise ConfigError("attack.share must lie in [0, 1)")
