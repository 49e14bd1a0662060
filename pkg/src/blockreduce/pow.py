"""Compact difficulty encoding, merge-mined block classification and mining."""

from __future__ import annotations

import random
from dataclasses import dataclass, replace
from fractions import Fraction

from .core import BlockHeader, BlockLevel, hash_header

MAX_TARGET_BITS = 0x2100FFFF
NONCE_LIMIT = 1 << 64


class PowError(ValueError):
    pass


class Exhausted(PowError):
    """No nonce in the allowed range cleared the zone target."""


def compact_to_target(bits: int) -> int:
    if not 0 <= bits < 1 << 32:
        raise PowError("compact value must be a u32")
    exponent = bits >> 24
    mantissa = bits & 0xFFFFFF
    if mantissa & 0x800000:
        raise PowError("negative compact target")
    if exponent <= 3:
        target = mantissa >> (8 * (3 - exponent))
    else:
        target = mantissa << (8 * (exponent - 3))
    if target >> 256:
        raise PowError("compact target overflows 256 bits")
    return target


def target_to_compact(target: int) -> int:
    """Normalized compact encoding, truncating the mantissa to three bytes."""
    if target < 0 or target >> 256:
        raise PowError("target must be a non-negative 256-bit integer")
    size = (target.bit_length() + 7) // 8
    if size <= 3:
        mantissa = target << (8 * (3 - size))
    else:
        mantissa = target >> (8 * (size - 3))
    if mantissa & 0x800000:
        mantissa >>= 8
        size += 1
    return (size << 24) | mantissa


MAX_TARGET = compact_to_target(MAX_TARGET_BITS)


def difficulty(bits: int, max_target: int = MAX_TARGET) -> float:
    return max_target / compact_to_target(bits)


def difficulty_to_bits(d: float | Fraction, max_target: int = MAX_TARGET) -> int:
    if d < 1:
        raise PowError("difficulty below 1 exceeds the maximum target")
    return target_to_compact(int(Fraction(max_target) / Fraction(d)))


@dataclass(frozen=True)
class DifficultyTriple:
    d_prime: float
    d_region: float
    d_zone: float

    def __post_init__(self):
        if not self.d_prime > self.d_region > self.d_zone > 0:
            raise PowError("difficulties must satisfy prime > region > zone > 0")

    @property
    def ratio_rz(self) -> float:
        return self.d_region / self.d_zone

    @property
    def ratio_pr(self) -> float:
        return self.d_prime / self.d_region

    def level_probabilities(self) -> dict[BlockLevel, float]:
        """P(level) for a hash that already cleared the zone target."""
        p_prime = self.d_zone / self.d_prime
        p_region = self.d_zone / self.d_region - p_prime
        return {BlockLevel.PRIME: p_prime, BlockLevel.REGION: p_region,
                BlockLevel.ZONE: 1.0 - p_prime - p_region}

    def bits(self, max_target: int = MAX_TARGET) -> tuple[int, int, int]:
        """(bits_prime, bits_region, bits_zone)."""
        return (difficulty_to_bits(self.d_prime, max_target),
                difficulty_to_bits(self.d_region, max_target),
                difficulty_to_bits(self.d_zone, max_target))


def header_targets(h: BlockHeader) -> tuple[int, int, int]:
    tp, tr, tz = (compact_to_target(h.bits_prime), compact_to_target(h.bits_region),
                  compact_to_target(h.bits_zone))
    if not tz > tr > tp:
        raise PowError("invalid-header: targets must satisfy zone > region > prime")
    return tp, tr, tz


def classify_block(header_hash: bytes, h: BlockHeader) -> BlockLevel:
    tp, tr, tz = header_targets(h)
    value = int.from_bytes(header_hash, "big")
    if value <= tp:
        return BlockLevel.PRIME
    if value <= tr:
        return BlockLevel.REGION
    if value <= tz:
        return BlockLevel.ZONE
    return BlockLevel.NONE


def grind(h: BlockHeader, max_attempts: int) -> tuple[int, BlockLevel]:
    """Search nonces from ``h.nonce`` upward; one hash is judged at all three levels.

    Raises Exhausted if none of ``max_attempts`` nonces clears the zone target.
    """
    tp, tr, tz = header_targets(h)
    nonce = h.nonce
    for _ in range(max_attempts):
        value = int.from_bytes(hash_header(replace(h, nonce=nonce)), "big")
        if value <= tz:
            if value <= tp:
                return nonce, BlockLevel.PRIME
            if value <= tr:
                return nonce, BlockLevel.REGION
            return nonce, BlockLevel.ZONE
        nonce = (nonce + 1) % NONCE_LIMIT
    raise Exhausted(f"no block in {max_attempts} attempts")


def sample_level(d: DifficultyTriple, rng: random.Random) -> BlockLevel:
    u = rng.random()
    p_prime = d.d_zone / d.d_prime
    if u < p_prime:
        return BlockLevel.PRIME
    if u < d.d_zone / d.d_region:
        return BlockLevel.REGION
    return BlockLevel.ZONE


def sample_block_event(hash_power: float, d: DifficultyTriple, rng: random.Random,
                       norm: float = 1.0) -> tuple[float, BlockLevel]:
    """Sampled stand-in for grinding.

    The wait until the next zone-clearing hash is exponential with rate
    ``hash_power / (d_zone * norm)``; the level is then drawn with the
    probabilities a uniform hash would give against the three targets.
    """
    if hash_power <= 0:
        raise PowError("hash power must be positive")
    dt = rng.expovariate(hash_power / (d.d_zone * norm))
    return dt, sample_level(d, rng)


def retarget(current: float, actual_span: float, expected_span: float,
             clamp: float = 4.0) -> float:
    """New difficulty after a window took ``actual_span`` instead of ``expected_span``."""
    if actual_span <= 0:
        return current * clamp
    factor = expected_span / actual_span
    factor = min(max(factor, 1.0 / clamp), clamp)
    return max(current * factor, 1.0)
