"""Block reward formula, payout split across finders, and the fee escrow."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence


class RewardError(ValueError):
    pass


class RewardMode(enum.Enum):
    LITERAL = "literal"
    NORMALIZED = "normalized"


@dataclass(frozen=True)
class RewardParams:
    p_reward: int
    chi: Fraction | float
    d_prime: Fraction | float
    d_region: Fraction | float
    d_zone: Fraction | float
    mode: RewardMode = RewardMode.NORMALIZED

    def __post_init__(self):
        if not 0 <= self.chi <= 1:
            raise RewardError("chi must lie in [0, 1]")
        if not self.d_prime > self.d_region > self.d_zone > 0:
            raise RewardError("difficulties must be strictly ordered")
        if self.p_reward < 0:
            raise RewardError("p_reward must be non-negative")

    @property
    def nominal_region_blocks(self) -> Fraction:
        return Fraction(self.d_prime) / Fraction(self.d_region)

    @property
    def nominal_zone_blocks(self) -> Fraction:
        return Fraction(self.d_prime) / Fraction(self.d_zone)


def _latency_bracket(p: RewardParams, b_r: int, b_z: int) -> tuple[Fraction, Fraction]:
    """Region and zone terms of the latency bracket, already halved in NORMALIZED mode."""
    region = Fraction(b_r) / p.nominal_region_blocks
    zone = Fraction(b_z) / p.nominal_zone_blocks
    if p.mode is RewardMode.NORMALIZED:
        region, zone = region / 2, zone / 2
    return region, zone


def compute_reward(p: RewardParams, b_r: int, b_z: int) -> int:
    """Reward for a PRIME block whose epoch saw ``b_r`` region and ``b_z`` zone blocks.

    R = P(1 - chi) + P*chi*(b_r/(dP/dR) + b_z/(dP/dZ)), with the bracket halved
    in NORMALIZED mode so nominal counts give R = P. Exact rationals, floored.
    """
    if b_r < 0 or b_z < 0:
        raise RewardError("block counts must be non-negative")
    chi = Fraction(p.chi)
    region, zone = _latency_bracket(p, b_r, b_z)
    r = p.p_reward * (1 - chi) + p.p_reward * chi * (region + zone)
    return int(r)  # floor: r >= 0


def distribute(prime_finder: bytes | None, region_finders: Sequence[bytes | None],
               zone_finders: Sequence[bytes | None], p: RewardParams) -> dict[bytes, int]:
    """Split the reward of one PRIME epoch.

    ``region_finders`` holds the coinbase key of every region-level block
    counted in the epoch and ``zone_finders`` every zone-level block (a block
    appears in both lists when it cleared both targets). The PRIME miner gets
    the PoW share plus any rounding remainder, so the payouts sum to exactly
    ``compute_reward``.
    """
    if prime_finder is None or any(k is None for k in region_finders) \
            or any(k is None for k in zone_finders):
        raise RewardError("missing-finder")
    total = compute_reward(p, len(region_finders), len(zone_finders))
    chi = Fraction(p.chi)
    payouts: dict[bytes, int] = {}
    paid = 0
    if region_finders:
        region, _ = _latency_bracket(p, 1, 0)
        each = int(p.p_reward * chi * region)
        for key in region_finders:
            payouts[key] = payouts.get(key, 0) + each
        paid += each * len(region_finders)
    if zone_finders:
        _, zone = _latency_bracket(p, 0, 1)
        each = int(p.p_reward * chi * zone)
        for key in zone_finders:
            payouts[key] = payouts.get(key, 0) + each
        paid += each * len(zone_finders)
    payouts[prime_finder] = payouts.get(prime_finder, 0) + total - paid
    return payouts


@dataclass
class EscrowState:
    balance: int = 0
    cumulative_minted: int = 0
    cumulative_sequestered: int = 0
    cumulative_drawn: int = 0

    def __post_init__(self):
        if self.balance < 0:
            raise RewardError("escrow balance cannot be negative")


def escrow_adjust(target: int, actual: int, s: EscrowState) -> tuple[int, EscrowState]:
    """Reconcile a payout of ``target`` against ``actual`` funds collected.

    Surplus funds go to escrow and the payout stays at ``target``; a shortfall
    is drawn from escrow first and minted only once escrow is empty. Returns
    the newly minted amount and the updated state.
    """
    if target < 0 or actual < 0:
        raise RewardError("amounts must be non-negative")
    new = EscrowState(s.balance, s.cumulative_minted, s.cumulative_sequestered,
                      s.cumulative_drawn)
    minted = 0
    if actual > target:
        excess = actual - target
        new.balance += excess
        new.cumulative_sequestered += excess
    elif actual < target:
        shortfall = target - actual
        draw = min(shortfall, new.balance)
        new.balance -= draw
        new.cumulative_drawn += draw
        minted = shortfall - draw
        new.cumulative_minted += minted
    return minted, new


def step_emission(amount: int, last_height: int) -> Callable[[int], int]:
    """Constant emission of ``amount`` per PRIME block up to ``last_height``, then zero."""
    def emission(height: int) -> int:
        return amount if height <= last_height else 0
    return emission


@dataclass
class RewardLedger:
    """Per-PRIME-block reward bookkeeping with an audit trail."""

    params: RewardParams
    emission: Callable[[int], int] = field(default_factory=lambda: step_emission(0, -1))
    escrow: EscrowState = field(default_factory=EscrowState)
    audit: list[dict] = field(default_factory=list)

    def settle_epoch(self, height: int, prime_finder: bytes,
                     region_finders: Sequence[bytes], zone_finders: Sequence[bytes],
                     fees: int) -> dict[bytes, int]:
        emitted = self.emission(height)
        p = RewardParams(emitted + fees, self.params.chi, self.params.d_prime,
                         self.params.d_region, self.params.d_zone, self.params.mode)
        payouts = distribute(prime_finder, region_finders, zone_finders, p)
        owed = sum(payouts.values())
        minted, self.escrow = escrow_adjust(owed, emitted + fees, self.escrow)
        self.audit.append({
            "height": height, "target": p.p_reward, "actual": owed,
            "region_blocks": len(region_finders), "zone_blocks": len(zone_finders),
            "minted_extra": minted, "escrow_balance": self.escrow.balance,
            "payouts": {k.hex(): v for k, v in sorted(payouts.items())},
        })
        return payouts

    def audit_lines(self) -> str:
        return "".join(json.dumps(rec, sort_keys=True) + "\n" for rec in self.audit)

