"""Zone takeover scenario: an adversary with most of one zone's hash power
mines a fork that breaks the rules, so honest nodes keep their own fork and
outside miners may migrate to it."""

from __future__ import annotations

from dataclasses import asdict, dataclass

from .config import AttackConfig, SimConfig
from .sim import Simulation


@dataclass
class AttackReport:
    seed: int
    share: float
    migration: bool
    forked: bool
    honest_blocks: int
    attacker_blocks: int
    honest_work: float
    attacker_work: float
    honest_canonical: bool
    time_to_overtake: float | None
    migrations: int
    honest_power_start: float
    honest_power_end: float
    attacker_power: float

    def to_dict(self) -> dict:
        return asdict(self)


def run_attack_scenario(cfg: SimConfig, seed: int | None = None) -> AttackReport:
    """Run ``cfg`` with its attack section (default: 60% of zone 0:0) and report
    whether the honest fork ends with more work than the adversary's."""
    if cfg.attack is None:
        cfg = cfg.replace(attack={"region": 0, "zone": 0, "share": 0.6})
    if seed is not None:
        cfg = cfg.replace(seed=seed)
    a: AttackConfig = cfg.attack
    sim = Simulation(cfg, account_bandwidth=False)
    z = a.region * cfg.topology.zones + a.zone
    start_power = float(sim.zone_power[z])
    sim.run()
    if sim.attack_zone is None:
        honest_blocks = sim.tip[z].height
        return AttackReport(cfg.seed, a.share, cfg.groups.migration, False, honest_blocks, 0,
                            float(sim.tip[z].work), 0.0, True, None, sim.migrations,
                            start_power, float(sim.zone_power[z]), 0.0)
    honest = sim.honest_fork_work()
    attacker = sim.attack_work
    overtake = None
    if honest > attacker:
        # last moment the honest fork moved ahead for good
        for t, h, w in reversed(sim.work_trace):
            if h <= w:
                break
            overtake = float(t)
    return AttackReport(
        seed=cfg.seed, share=a.share, migration=cfg.groups.migration, forked=True,
        honest_blocks=sim.tip[z].height, attacker_blocks=sim.attack_blocks,
        honest_work=float(honest), attacker_work=float(attacker),
        honest_canonical=bool(honest > attacker), time_to_overtake=overtake,
        migrations=sim.migrations, honest_power_start=start_power,
        honest_power_end=float(sim.zone_power[z]), attacker_power=float(sim.attacker_hash))
