"""Node placement, per-tier peer graphs, and deterministic flood profiles.

A flood profile is what one announcement from ``origin`` costs every node in a
tier: which peers it offers the item to, who fetches the body from whom, and
when each node has it. Each hop is an offer, a request and a delivery, so a
hop takes three times the link delay. Profiles depend only on the graph, so
byte accounting can count floods per origin and multiply out at the end.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components, dijkstra

from ..core import Location
from .config import TopologyConfig

HOP_TRIPS = 3


class Tier(enum.IntEnum):
    ZONE = 0
    REGION = 1
    GLOBAL = 2


class Relation(enum.IntEnum):
    """Recipient's position relative to the origin's zone."""
    SAME_ZONE = 0
    PEER_ZONE = 1
    OTHER_REGION = 2


@dataclass
class FloodProfile:
    origin: int
    nodes: np.ndarray          # global ids reached, origin included
    arrival_ms: np.ndarray     # per entry of ``nodes``
    depth: np.ndarray          # hop count from origin
    offers_sent: np.ndarray    # per global node id
    offers_recv: np.ndarray
    bodies_sent: np.ndarray    # shape (3, n): uploads by recipient relation
    bodies_recv: np.ndarray    # shape (3, n)

    @property
    def rounds(self) -> int:
        return int(self.depth.max()) if len(self.depth) else 0


class Topology:
    def __init__(self, cfg: TopologyConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.n_regions = cfg.regions
        self.n_zones = cfg.zones
        per = cfg.nodes_per_zone
        self.zone_count = cfg.regions * cfg.zones
        self.n = self.zone_count * per
        self.home = np.repeat(np.arange(self.zone_count), per)   # initial zone index
        self.region_of_zone = np.arange(self.zone_count) // cfg.zones
        # geography: regions on a jittered grid, zones around them, nodes around zones
        side = int(np.ceil(np.sqrt(cfg.regions)))
        rc = np.array([((i % side) + 0.5) / side for i in range(cfg.regions)])
        rr = np.array([((i // side) + 0.5) / side for i in range(cfg.regions)])
        region_xy = np.stack([rc, rr], 1) + rng.normal(0, 0.02, (cfg.regions, 2))
        zone_xy = region_xy[self.region_of_zone] + rng.normal(0, 0.5 / side / 2, (self.zone_count, 2))
        self.zone_xy = np.clip(zone_xy, 0, 1)
        self.xy = np.clip(self.zone_xy[self.home] + rng.normal(0, cfg.cluster_spread, (self.n, 2)), 0, 1)
        self.edges = self._build_edges(rng)
        src, dst = self.edges[:, 0], self.edges[:, 1]
        dist = np.linalg.norm(self.xy[src] - self.xy[dst], axis=1)
        self.edge_delay = cfg.delay_base_ms + cfg.delay_rate_ms * dist \
            + cfg.jitter_ms * rng.random(len(self.edges))
        self._matrices: dict = {}

    # -- construction -------------------------------------------------------

    def zone_index(self, loc: Location) -> int:
        return loc.region * self.n_zones + loc.zone

    def location(self, zi: int) -> Location:
        return Location(zi // self.n_zones, zi % self.n_zones)

    def zone_members(self, zi: int) -> np.ndarray:
        per = self.cfg.nodes_per_zone
        return np.arange(zi * per, (zi + 1) * per)

    def region_members(self, r: int) -> np.ndarray:
        per = self.cfg.nodes_per_zone * self.n_zones
        return np.arange(r * per, (r + 1) * per)

    def _group_edges(self, members: np.ndarray, k: int, rng) -> set:
        m = len(members)
        out = set()
        if m < 2 or k == 0:
            return out
        if m - 1 <= k:
            for i in range(m):
                for j in range(i + 1, m):
                    out.add((members[i], members[j]))
            return out
        order = rng.permutation(members)
        for i in range(m):   # ring keeps the group connected
            a, b = order[i], order[(i + 1) % m]
            out.add((min(a, b), max(a, b)))
        deg = {int(v): 2 for v in members}
        for v in order:
            v = int(v)
            tries = 0
            while deg[v] < k and tries < 4 * k:
                u = int(members[rng.integers(m)])
                tries += 1
                e = (min(u, v), max(u, v))
                if u == v or e in out or deg[u] >= k + 1:
                    continue
                out.add(e)
                deg[u] += 1
                deg[v] += 1
        return out

    def _cross_edges(self, groups: list[np.ndarray], k: int, rng) -> set:
        """k links per node to random nodes of other groups; bridges keep it connected."""
        out = set()
        if len(groups) < 2 or k == 0:
            return out
        everyone = np.concatenate(groups)
        gid = np.concatenate([np.full(len(g), i) for i, g in enumerate(groups)])
        for idx, v in enumerate(everyone):
            others = everyone[gid != gid[idx]]
            for u in rng.choice(others, size=min(k, len(others)), replace=False):
                out.add((min(int(u), int(v)), max(int(u), int(v))))
        for i in range(len(groups) - 1):   # chain bridge
            a, b = int(groups[i][0]), int(groups[i + 1][0])
            out.add((min(a, b), max(a, b)))
        return out

    def _build_edges(self, rng) -> np.ndarray:
        cfg = self.cfg
        self.edge_tier: dict[tuple, Tier] = {}
        for zi in range(self.zone_count):
            for e in self._group_edges(self.zone_members(zi), cfg.zone_degree, rng):
                self.edge_tier.setdefault(e, Tier.ZONE)
        for r in range(self.n_regions):
            zones = [self.zone_members(r * self.n_zones + z) for z in range(self.n_zones)]
            for e in self._cross_edges(zones, cfg.region_degree, rng):
                self.edge_tier.setdefault(e, Tier.REGION)
        regions = [self.region_members(r) for r in range(self.n_regions)]
        for e in self._cross_edges(regions, cfg.global_degree, rng):
            self.edge_tier.setdefault(e, Tier.GLOBAL)
        edges = sorted(self.edge_tier)
        return np.array(edges, dtype=np.int64).reshape(-1, 2)

    # -- tier graphs ----------------------------------------------------------

    def _members(self, tier: Tier, origin: int) -> np.ndarray:
        zi = int(self.home[origin])
        if tier is Tier.ZONE:
            return self.zone_members(zi)
        if tier is Tier.REGION:
            return self.region_members(int(self.region_of_zone[zi]))
        return np.arange(self.n)

    def _matrix(self, tier: Tier, members: np.ndarray):
        key = (tier, int(members[0]), len(members))
        if key not in self._matrices:
            lo, hi = members[0], members[-1]
            src, dst = self.edges[:, 0], self.edges[:, 1]
            tiers = np.array([self.edge_tier[(a, b)] for a, b in self.edges.tolist()]) \
                if len(self.edges) else np.zeros(0, int)
            keep = (src >= lo) & (src <= hi) & (dst >= lo) & (dst <= hi) & (tiers <= tier)
            s, d, w = src[keep] - lo, dst[keep] - lo, self.edge_delay[keep]
            m = len(members)
            mat = coo_matrix((np.r_[w, w], (np.r_[s, d], np.r_[d, s])), shape=(m, m)).tocsr()
            self._matrices[key] = (mat, np.r_[s, d], np.r_[d, s])
        return self._matrices[key]

    def connected(self, tier: Tier, origin: int = 0) -> bool:
        members = self._members(tier, origin)
        mat, _, _ = self._matrix(tier, members)
        return connected_components(mat, directed=False)[0] == 1

    def degree(self, tier: Tier, node: int) -> int:
        members = self._members(tier, node)
        mat, _, _ = self._matrix(tier, members)
        return int(mat[node - members[0]].nnz)

    def relation(self, origin: int, nodes: np.ndarray) -> np.ndarray:
        zo = self.home[origin]
        zn = self.home[nodes]
        same_region = self.region_of_zone[zn] == self.region_of_zone[zo]
        return np.where(zn == zo, Relation.SAME_ZONE,
                        np.where(same_region, Relation.PEER_ZONE, Relation.OTHER_REGION))

    def profile(self, origin: int, tier: Tier) -> FloodProfile:
        members = self._members(tier, origin)
        lo = int(members[0])
        mat, src, dst = self._matrix(tier, members)
        dist, pred = dijkstra(mat, directed=False, indices=origin - lo, return_predecessors=True)
        reached = np.isfinite(dist)
        local = np.nonzero(reached)[0]
        order = local[np.argsort(dist[local], kind="stable")]
        depth = np.zeros(len(members), dtype=np.int64)
        for v in order[1:]:
            depth[v] = depth[pred[v]] + 1
        n = self.n
        offer = reached[src] & reached[dst] & (pred[src] != dst)
        offers_sent = np.zeros(n, np.int64)
        offers_recv = np.zeros(n, np.int64)
        np.add.at(offers_sent, src[offer] + lo, 1)
        np.add.at(offers_recv, dst[offer] + lo, 1)
        bodies_sent = np.zeros((3, n), np.int64)
        bodies_recv = np.zeros((3, n), np.int64)
        others = order[1:]
        rel = self.relation(origin, others + lo)
        np.add.at(bodies_sent, (rel, pred[others] + lo), 1)
        np.add.at(bodies_recv, (rel, others + lo), 1)
        return FloodProfile(origin, order + lo, HOP_TRIPS * dist[order], depth[order],
                            offers_sent, offers_recv, bodies_sent, bodies_recv)

    @cached_property
    def zone_delay_medians(self) -> np.ndarray:
        """(node, zone) median one-way delay estimate by geography, in ms."""
        cfg = self.cfg
        out = np.zeros((self.n, self.zone_count))
        for zi in range(self.zone_count):
            m = self.zone_members(zi)
            d = np.linalg.norm(self.xy[:, None, :] - self.xy[None, m, :], axis=2)
            out[:, zi] = cfg.delay_base_ms + cfg.delay_rate_ms * np.median(d, axis=1) \
                + cfg.jitter_ms / 2
        return out


def propagate_tx(topo: Topology, origin: int, tx_zone: int, tx_size: int = 100,
                 envelope: int = 40, inventory: int = 36):
    """Flood one tx through its zone. Returns (arrival_ms by node, sent, recv, profile).

    A tx offered to a node outside its located zone is refused at the first
    hop, so it costs nothing and reaches nobody; the caller counts the refusal.
    """
    if int(topo.home[origin]) != tx_zone:
        return None
    p = topo.profile(origin, Tier.ZONE)
    body = tx_size + envelope
    sent = p.offers_sent * inventory + p.bodies_sent.sum(0) * body
    recv = p.offers_recv * inventory + p.bodies_recv.sum(0) * body
    return dict(zip(p.nodes.tolist(), p.arrival_ms.tolist())), sent, recv, p


def propagate_block(topo: Topology, finder: int, tier: Tier, bundle_sizes: tuple[int, int, int],
                    header: int = 272):
    """Header-first flood of one block. ``bundle_sizes`` is the body each
    recipient fetches once, by its relation to the finder's zone; every other
    offer costs only the header."""
    p = topo.profile(finder, tier)
    sizes = np.asarray(bundle_sizes).reshape(3, 1)
    sent = p.offers_sent * header + (p.bodies_sent * sizes).sum(0)
    recv = p.offers_recv * header + (p.bodies_recv * sizes).sum(0)
    return dict(zip(p.nodes.tolist(), p.arrival_ms.tolist())), sent, recv, p
