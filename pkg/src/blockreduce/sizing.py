"""Fill-driven resizing of the valid region/zone range, and location remapping."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .core import Location

MAX_MAP = 256


@dataclass(frozen=True)
class ResizePolicy:
    target_fill: float = 0.8
    band: float = 0.10
    window: int = 8
    zone_cap: int = MAX_MAP


@dataclass
class MapState:
    map_region: int = 1
    map_zone: int = 1
    utilization: deque = field(default_factory=deque)
    epochs_since_change: int = 0

    def __post_init__(self):
        for name in ("map_region", "map_zone"):
            if not 1 <= getattr(self, name) <= MAX_MAP:
                raise ValueError(f"{name} must be in [1, {MAX_MAP}]")

    @property
    def zone_count(self) -> int:
        return self.map_region * self.map_zone

    def record_fill(self, fill: float, window: int) -> None:
        self.utilization.append(fill)
        while len(self.utilization) > window:
            self.utilization.popleft()
        self.epochs_since_change += 1


def remap(declared: Location, m: MapState) -> Location:
    """Fold a declared 0-255 location into the current map by modulo."""
    return Location(declared.region % m.map_region, declared.zone % m.map_zone)


def resize(state: MapState, policy: ResizePolicy = ResizePolicy()) -> MapState:
    """One controller step, evaluated once per PRIME block.

    Acts only when the last ``policy.window`` epochs all sit outside the band
    and at least a full window has passed since the previous change. Growth
    adds a zone per region until ``zone_cap``, then adds a region; shrinking
    walks the same path backwards (regions first).
    """
    w = policy.window
    if len(state.utilization) < w or state.epochs_since_change < w:
        return state
    recent = list(state.utilization)[-w:]
    hi = policy.target_fill + policy.band
    lo = policy.target_fill - policy.band
    mr, mz = state.map_region, state.map_zone
    if all(f > hi for f in recent):
        if mz < policy.zone_cap:
            mz += 1
        elif mr < MAX_MAP:
            mr += 1
    elif all(f < lo for f in recent):
        if mr > 1:
            mr -= 1
        elif mz > 1:
            mz -= 1
    if (mr, mz) == (state.map_region, state.map_zone):
        return state
    return MapState(mr, mz, deque(state.utilization), 0)


def rebucket(utxos: dict, m: MapState) -> dict:
    """Group ``{outpoint: entry}`` by effective zone under ``m``.

    Entries need a ``declared`` Location; the declared value never changes,
    only the bucket it falls into.
    """
    buckets: dict[Location, dict] = {}
    for op in sorted(utxos):
        entry = utxos[op]
        buckets.setdefault(remap(entry.declared, m), {})[op] = entry
    return buckets
