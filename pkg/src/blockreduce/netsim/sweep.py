"""Per-node bandwidth of BlockReduce against a flat single-chain network as
demand and block size grow together."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import SimConfig
from .sim import run


def baseline_config(cfg: SimConfig) -> SimConfig:
    """The same nodes, demand and per-node hash power as one flat gossip group
    mining a single chain at the zone block interval."""
    t, m = cfg.topology, cfg.demand
    return cfg.replace(
        mode="baseline",
        topology={"regions": 1, "zones": 1, "nodes_per_zone": cfg.node_count},
        demand={"tps_per_zone": m.tps_per_zone * cfg.zone_count,
                "block_capacity": m.block_capacity * cfg.zone_count},
        groups={"migration": False})


@dataclass
class SweepRow:
    multiplier: float
    baseline_Bps: float
    blockreduce_Bps: float

    @property
    def ratio(self) -> float:
        return self.blockreduce_Bps / self.baseline_Bps if self.baseline_Bps else float("nan")


@dataclass
class SweepResult:
    rows: list[SweepRow]

    @property
    def multipliers(self) -> np.ndarray:
        return np.array([r.multiplier for r in self.rows], dtype=float)

    def slope(self, which: str) -> float:
        y = np.array([getattr(r, f"{which}_Bps") for r in self.rows])
        return float(np.polyfit(self.multipliers, y, 1)[0])

    def loglog_exponent(self, which: str) -> float:
        y = np.array([getattr(r, f"{which}_Bps") for r in self.rows])
        return float(np.polyfit(np.log(self.multipliers), np.log(y), 1)[0])

    @property
    def ratios(self) -> list[float]:
        return [r.ratio for r in self.rows]

    def table(self) -> str:
        head = f"{'N':>6}  {'baseline B/s':>14}  {'BlockReduce B/s':>16}  {'ratio %':>8}\n"
        body = "".join(f"{r.multiplier:>6g}  {r.baseline_Bps:>14.1f}  {r.blockreduce_Bps:>16.1f}  "
                       f"{100 * r.ratio:>8.2f}\n" for r in self.rows)
        return head + body

    def records(self) -> list[dict]:
        return [{"multiplier": r.multiplier, "baseline_Bps": r.baseline_Bps,
                 "blockreduce_Bps": r.blockreduce_Bps, "ratio": r.ratio} for r in self.rows]


def bandwidth_sweep(cfg: SimConfig, multipliers, seed: int | None = None,
                    duration: float | None = None) -> SweepResult:
    seed = cfg.seed if seed is None else seed
    changes = {"seed": seed}
    if duration is not None:
        changes["duration"] = duration
    base = cfg.replace(**changes)
    rows = []
    for n in multipliers:
        br = base.replace(mode="blockreduce", demand={"multiplier": float(n)})
        bl = baseline_config(br)
        rows.append(SweepRow(float(n), run(bl).bandwidth["per_node_mean_Bps"],
                             run(br).bandwidth["per_node_mean_Bps"]))
    return SweepResult(rows)
