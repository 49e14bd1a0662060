"""Miner group selection: expected block share against latency to the group."""

from __future__ import annotations

import numpy as np


def zone_scores(h: float, current: int, zone_power: np.ndarray, delays_ms: np.ndarray,
                chi: float, latency_weight: float) -> np.ndarray:
    """chi * (share of the zone's blocks a node of power ``h`` would find)
    minus latency_weight * median delay. The current zone already counts h."""
    share = h / (zone_power + h)
    if zone_power[current] > 0:
        share[current] = h / zone_power[current]
    return chi * share - latency_weight * delays_ms


def select_group(h: float, current: int, zone_power: np.ndarray, delays_ms: np.ndarray,
                 chi: float, latency_weight: float, hysteresis: float) -> int:
    """Zone the node should mine next; it moves only when the best score beats
    staying by more than ``hysteresis`` times its current reward term."""
    if len(zone_power) < 2 or h <= 0:
        return current
    s = zone_scores(h, current, zone_power, delays_ms, chi, latency_weight)
    best = int(np.argmax(s))
    stay = chi * h / zone_power[current] if zone_power[current] > 0 else 0.0
    if best != current and s[best] - s[current] > hysteresis * stay:
        return best
    return current


def break_even_latency_weight(chi: float, share_near: float, delay_near: float,
                              share_far: float, delay_far: float) -> float:
    """Latency weight at which a far zone with the larger share and a near
    zone with the smaller share score the same."""
    if delay_far == delay_near:
        raise ValueError("delays must differ")
    return chi * (share_far - share_near) / (delay_far - delay_near)
