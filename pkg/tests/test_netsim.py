import json

import networkx as nx
import numpy as np
import pytest

from blockreduce.core import Location
from blockreduce.netsim import (ConfigError, DemandModel, Relation, SimConfig, Simulation, Tier,
                                Topology, baseline_config, break_even_latency_weight,
                                demand_model, from_dict, propagate_block, propagate_tx, run,
                                run_attack_scenario, select_group, zone_scores)

SMALL = SimConfig(duration=400, seed=5,
                  topology={"regions": 2, "zones": 2, "nodes_per_zone": 8},
                  difficulty={"d_prime": 400.0, "d_region": 40.0, "d_zone": 10.0})


@pytest.fixture(scope="module")
def topo():
    return Topology(SMALL.topology, np.random.default_rng(1))


def _oracle_graph(topo, tier, members):
    g = nx.Graph()
    g.add_nodes_from(members.tolist())
    lo, hi = members[0], members[-1]
    for (a, b), d in zip(topo.edges.tolist(), topo.edge_delay):
        if lo <= a <= hi and lo <= b <= hi and topo.edge_tier[(a, b)] <= tier:
            g.add_edge(a, b, weight=d)
    return g


# -- config ------------------------------------------------------------------

def test_config_roundtrip_and_replace():
    cfg = SMALL.replace(demand={"multiplier": 3.0})
    assert cfg.demand.multiplier == 3.0 and cfg.topology.zones == 2
    assert from_dict(cfg.to_dict()) == cfg
    assert cfg.zone_count == 4 and cfg.node_count == 32


@pytest.mark.parametrize("bad,msg", [
    ({"difficulty": {"d_zone": 50.0}}, "ordering"),
    ({"topology": {"zones": 0}}, "zones"),
    ({"mode": "flat"}, "mode"),
    ({"colour": 1}, "unknown"),
    ({"demand": {"scope_mix": [0.5, 0.5, 0.5]}}, "scope_mix"),
])
def test_config_rejects(bad, msg):
    with pytest.raises(ConfigError, match=msg):
        SMALL.replace(**bad)


def test_hash_norm_gives_zone_interval():
    cfg = SMALL
    rate = cfg.topology.nodes_per_zone * cfg.difficulty.hash_per_node \
        / (cfg.difficulty.d_zone * cfg.hash_norm)
    assert rate == pytest.approx(1 / cfg.difficulty.zone_block_time)


# -- topology and gossip (n <= 64) -------------------------------------------

def test_topology_connected_per_tier(topo):
    assert topo.n == 32
    for zi in range(topo.zone_count):
        assert topo.connected(Tier.ZONE, int(topo.zone_members(zi)[0]))
    assert topo.connected(Tier.REGION, 0) and topo.connected(Tier.GLOBAL, 0)


@pytest.mark.parametrize("tier", list(Tier))
def test_flood_arrivals_match_dijkstra_oracle(topo, tier):
    origin = 9
    p = topo.profile(origin, tier)
    g = _oracle_graph(topo, tier, topo._members(tier, origin))
    ref = nx.single_source_dijkstra_path_length(g, origin)
    got = dict(zip(p.nodes.tolist(), p.arrival_ms.tolist()))
    assert set(got) == set(ref)
    for v, d in ref.items():
        assert got[v] == pytest.approx(3 * d)


def test_flood_message_counts(topo):
    origin = 3
    p = topo.profile(origin, Tier.REGION)
    reached = len(p.nodes)
    g = _oracle_graph(topo, Tier.REGION, topo._members(Tier.REGION, origin))
    # every node but the origin fetches one body; offers skip only the tree parent
    assert p.bodies_recv.sum() == reached - 1
    assert p.offers_sent.sum() == 2 * g.number_of_edges() - (reached - 1)
    assert p.offers_sent.sum() == p.offers_recv.sum()


def test_tx_refused_outside_located_zone(topo):
    origin = 0
    assert propagate_tx(topo, origin, tx_zone=int(topo.home[origin]) + 1) is None
    arrivals, sent, recv, p = propagate_tx(topo, origin, int(topo.home[origin]))
    assert set(arrivals) == set(topo.zone_members(0).tolist())
    assert sent.sum() == recv.sum() > 0


def test_block_bundle_by_relation(topo):
    finder = 0
    arrivals, sent, recv, p = propagate_block(topo, finder, Tier.GLOBAL, (1000, 300, 50))
    rel = topo.relation(finder, p.nodes[1:])
    expect_bodies = sum({Relation.SAME_ZONE: 1000, Relation.PEER_ZONE: 300,
                         Relation.OTHER_REGION: 50}[Relation(r)] for r in rel)
    assert recv.sum() == expect_bodies + 272 * p.offers_recv.sum()


# -- demand and groups ---------------------------------------------------------

def test_demand_rate_and_mix():
    cfg = SMALL.demand
    arr = np.stack(list(demand_model(cfg, 4, seed=3, ticks=2000, drain=40)))
    total = arr.sum()
    assert total / 2000 == pytest.approx(cfg.tps_per_zone * 4, rel=0.02)
    mix = arr.sum((0, 1)) / total
    assert mix == pytest.approx(cfg.scope_mix, abs=0.01)


def test_demand_prefers_idle_zones():
    m = DemandModel(SMALL.demand.__class__(tps_per_zone=50), 4, np.random.default_rng(0))
    a = m.arrivals(np.array([1000, 0, 0, 0]), 1.0).sum(1)
    assert a[0] < a[1:].min()


def test_select_group_moves_to_weak_zone_and_respects_hysteresis():
    power = np.array([10.0, 10.0, 4.0])
    delays = np.zeros(3)
    assert select_group(1.0, 0, power, delays, 0.5, 1e-4, 0.02) == 2
    assert select_group(1.0, 0, np.array([10.0, 9.5]), np.zeros(2), 0.5, 1e-4, 0.5) == 0
    far = np.array([0.0, 0.0, 1e4])
    assert select_group(1.0, 0, power, far, 0.5, 1e-4, 0.02) == 0


def test_break_even_weight_balances_scores():
    w = break_even_latency_weight(0.5, 0.1, 20.0, 0.2, 120.0)
    # an outsider with h=1 sees shares 1/10 and 1/5 in zones of power 9 and 4
    s = zone_scores(1.0, 2, np.array([9.0, 4.0, 1.0]), np.array([20.0, 120.0, 0.0]), 0.5, w)
    assert s[0] == pytest.approx(s[1])


# -- simulation ------------------------------------------------------------------

@pytest.fixture(scope="module")
def small_run():
    sim = Simulation(SMALL)
    return sim, sim.run()


def test_small_run_sane(small_run):
    sim, m = small_run
    assert m.blocks["zone"] > 100
    assert m.settlement_level_violations == 0
    assert 0 < m.settled_tps <= m.tps_offered
    s = m.settlement
    assert s["zonal"]["p50"] < s["regional"]["p50"] < s["prime"]["p50"]
    assert m.bandwidth["per_node_mean_Bps"] > 0


def test_records_are_json_lines(small_run):
    _, m = small_run
    lines = m.to_records().splitlines()
    assert json.loads(lines[0])["record"] == "summary"
    assert all(json.loads(x) for x in lines)


def test_same_seed_same_bytes():
    a = run(SMALL.replace(duration=200)).to_records()
    b = run(SMALL.replace(duration=200)).to_records()
    c = run(SMALL.replace(duration=200, seed=6)).to_records()
    assert a == b and a != c


def test_export_chain_is_canonical(small_run):
    sim, _ = small_run
    rows = [json.loads(x) for x in sim.export_chain().splitlines()]
    assert rows and all(r["level"] in ("ZONE", "REGION", "PRIME") for r in rows)
    per_zone = {}
    for r in rows:
        per_zone.setdefault(r["location"], []).append(r["height"])
    assert all(h == list(range(1, len(h) + 1)) for h in per_zone.values())


def test_baseline_single_chain():
    cfg = baseline_config(SMALL.replace(duration=300))
    assert cfg.zone_count == 1 and cfg.node_count == SMALL.node_count
    m = run(cfg)
    assert m.blocks["region"] == 0 and m.blocks["zone"] > 0
    assert m.tps_offered == pytest.approx(SMALL.demand.tps_per_zone * SMALL.zone_count, rel=0.05)


def test_attack_small_world():
    cfg = SMALL.replace(duration=600, demand={"tps_per_zone": 0.0},
                        attack={"region": 0, "zone": 1, "share": 0.6})
    on = run_attack_scenario(cfg, seed=2)
    off = run_attack_scenario(cfg.replace(groups={"migration": False}), seed=2)
    assert on.forked and on.migrations > 0 and on.honest_power_end > on.honest_power_start
    assert off.migrations == 0 and off.honest_power_end == off.honest_power_start
    zero = run_attack_scenario(cfg.replace(attack={"region": 0, "zone": 1, "share": 0.0}), 2)
    assert not zero.forked and zero.honest_canonical


def test_location_helpers(topo):
    assert topo.location(topo.zone_index(Location(1, 1))) == Location(1, 1)
