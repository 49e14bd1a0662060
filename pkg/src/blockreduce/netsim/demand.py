"""Transaction arrivals: Poisson demand, least-busy zone choice, scope mix."""

from __future__ import annotations

import numpy as np

from .config import DemandConfig


class DemandModel:
    """Each tick draws Poisson arrivals network-wide. Every user samples
    ``zone_choices`` zones uniformly and sends to the least occupied one; users
    are processed in chunks so later users of a tick see earlier arrivals."""

    def __init__(self, cfg: DemandConfig, zone_count: int, rng: np.random.Generator,
                 chunk: int | None = None):
        self.cfg = cfg
        self.zone_count = zone_count
        self.rng = rng
        self.rate = cfg.tps_per_zone * cfg.multiplier * zone_count
        self.mix = np.asarray(cfg.scope_mix, dtype=float)
        self.chunk = chunk or max(5 * zone_count, 1)
        self.cum_mix = np.cumsum(self.mix)[:-1]

    def arrivals(self, occupancy: np.ndarray, dt: float) -> np.ndarray:
        """Counts shaped (zone_count, 3): zonal, regional, PRIME arrivals in ``dt``."""
        out = np.zeros((self.zone_count, 3), dtype=np.int64)
        if self.rate <= 0 or dt <= 0:
            return out
        n = int(self.rng.poisson(self.rate * dt))
        if n == 0:
            return out
        occ = occupancy.astype(np.int64)
        k = min(self.cfg.zone_choices, self.zone_count)
        Z = self.zone_count
        for start in range(0, n, self.chunk):
            m = min(self.chunk, n - start)
            choices = self.rng.integers(Z, size=(m, k))
            if k > 1:
                picked = np.take_along_axis(
                    choices, np.argmin(occ[choices], axis=1)[:, None], 1)[:, 0]
            else:
                picked = choices[:, 0]
            scopes = np.searchsorted(self.cum_mix, self.rng.random(m), side="right")
            out += np.bincount(picked * 3 + scopes, minlength=3 * Z).reshape(Z, 3)
            occ += np.bincount(picked, minlength=Z)
        return out


def demand_model(cfg: DemandConfig, zone_count: int, seed: int, ticks: int,
                 drain: float = 0.0):
    """Generator of per-tick arrival arrays for stand-alone use; occupancy is
    tracked internally and each zone drains ``drain`` txs per tick."""
    model = DemandModel(cfg, zone_count, np.random.default_rng(seed))
    occ = np.zeros(zone_count)
    for _ in range(ticks):
        a = model.arrivals(occ, cfg.tick)
        occ = np.maximum(occ + a.sum(1) - drain, 0)
        yield a
