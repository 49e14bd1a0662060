"""Seeded discrete-event simulation of a BlockReduce network (or a flat
single-chain baseline) at desk scale.

Transactions are tracked as per-tick batches of counts rather than individual
objects, so a batch keeps its arrival time and scope mix while moving through
mempools and blocks. Zone chains fork when a finder has not yet heard of the
latest block; region and PRIME blocks link whatever canonical lower-level
blocks have reached their finder. Settlement times are read off the final
canonical chains after the run.
"""

from __future__ import annotations

import heapq
import json
from array import array
from collections import deque
from dataclasses import asdict, dataclass, field

import numpy as np

from ..core import BlockLevel, Location
from ..pow import retarget
from ..sizing import MapState, ResizePolicy, resize
from .config import SimConfig
from .demand import DemandModel
from .groups import select_group
from .topology import HOP_TRIPS, Relation, Tier, Topology

CANON, LIMBO, STALE = 0, 1, 2
_TICK, _MINE, _ATTACK, _REVIEW, _END = 0, 1, 2, 3, 4
SCOPES = ("zonal", "regional", "prime")


class ZBlock:
    __slots__ = ("idx", "zone", "parent", "height", "work", "time", "finder", "level",
                 "key", "batches", "counts", "state", "linked_by", "d_zone",
                 "zone_links", "region_links", "prime_linked_by", "prime_new")

    def __init__(self, idx, zone, parent, height, work, time, finder, level, key, d_zone):
        self.idx = idx
        self.zone = zone
        self.parent = parent
        self.height = height
        self.work = work
        self.time = time
        self.finder = finder
        self.level = level
        self.key = key
        self.d_zone = d_zone
        self.batches = []
        self.counts = (0, 0, 0)
        self.state = CANON
        self.linked_by = None        # region-level block that linked it
        self.zone_links = ()         # set when level >= REGION
        self.region_links = ()       # set when level == PRIME
        self.prime_linked_by = None  # for region-level blocks
        self.prime_new = 0           # PRIME-scope txs this region block brought to the region


def _better(a: ZBlock, b: ZBlock) -> bool:
    return a.work > b.work or (a.work == b.work and a.key < b.key)


class _Pool:
    """Bulk-drawn random numbers; the draw order is fixed so runs replay exactly."""

    def __init__(self, rng: np.random.Generator, size: int = 8192):
        self.rng = rng
        self.size = size
        self._u = iter(())
        self._e = iter(())

    def uniform(self) -> float:
        try:
            return next(self._u)
        except StopIteration:
            self._u = iter(self.rng.random(self.size).tolist())
            return next(self._u)

    def exp(self) -> float:
        try:
            return next(self._e)
        except StopIteration:
            self._e = iter(self.rng.standard_exponential(self.size).tolist())
            return next(self._e)

    def key(self) -> int:
        return int(self.uniform() * (1 << 53))


@dataclass
class SimMetrics:
    name: str
    mode: str
    seed: int
    duration: float
    zones: int
    nodes: int
    tps_offered: float = 0.0
    tps_included: float = 0.0
    settled_tps: float = 0.0
    blocks: dict = field(default_factory=dict)
    stale_blocks: int = 0
    prime_interval_mean: float | None = None
    prime_intervals: int = 0
    zone_links_per_region_block: float | None = None
    region_links_per_prime_block: float | None = None
    settlement: dict = field(default_factory=dict)
    settlement_level_violations: int = 0
    bandwidth: dict = field(default_factory=dict)
    storage: dict = field(default_factory=dict)
    migrations: int = 0
    zone_power: dict = field(default_factory=dict)
    resize_events: list = field(default_factory=list)
    epochs: list = field(default_factory=list)

    def to_records(self) -> str:
        """Line-delimited JSON: one summary record, then one per PRIME epoch and
        one per resize decision."""
        d = asdict(self)
        epochs = d.pop("epochs")
        resizes = d.pop("resize_events")
        lines = [json.dumps({"record": "summary", **d}, sort_keys=True)]
        lines += [json.dumps({"record": "epoch", **e}, sort_keys=True) for e in epochs]
        lines += [json.dumps({"record": "resize", **e}, sort_keys=True) for e in resizes]
        return "".join(x + "\n" for x in lines)

    def summary_table(self) -> str:
        rows = [("mode", self.mode), ("seed", self.seed), ("duration_s", self.duration),
                ("zones", self.zones), ("nodes", self.nodes),
                ("tps_offered", f"{self.tps_offered:.1f}"),
                ("settled_tps", f"{self.settled_tps:.1f}"),
                ("blocks zone/region/prime", "/".join(str(self.blocks.get(k, 0))
                                                      for k in ("zone", "region", "prime"))),
                ("stale_blocks", self.stale_blocks),
                ("prime_interval_mean_s", "n/a" if self.prime_interval_mean is None
                 else f"{self.prime_interval_mean:.1f}"),
                ("per_node_bandwidth_Bps", f"{self.bandwidth.get('per_node_mean_Bps', 0):.1f}")]
        for s in SCOPES:
            st = self.settlement.get(s, {})
            if st.get("p50") is not None:
                rows.append((f"settle_{s}_p50_s", f"{st['p50']:.1f}"))
        if self.storage:
            rows.append(("storage_sharded/full", f"{self.storage['ratio']:.5f}"))
        w = max(len(k) for k, _ in rows)
        return "".join(f"{k:<{w}}  {v}\n" for k, v in rows)


def _weighted_quantiles(values: np.ndarray, weights: np.ndarray, qs) -> list:
    if weights.sum() == 0:
        return [None for _ in qs]
    order = np.argsort(values, kind="stable")
    v, w = values[order], weights[order]
    cw = np.cumsum(w)
    total = cw[-1]
    return [float(v[min(np.searchsorted(cw, q * total), len(v) - 1)]) for q in qs]


class Simulation:
    def __init__(self, cfg: SimConfig, account_bandwidth: bool = True):
        self.cfg = cfg
        self.account_bandwidth = account_bandwidth
        ss = np.random.SeedSequence(cfg.seed)
        topo_rng, demand_rng, mine_rng, review_rng = (np.random.default_rng(s)
                                                      for s in ss.spawn(4))
        self.topo = Topology(cfg.topology, topo_rng)
        self.demand = DemandModel(cfg.demand, self.topo.zone_count, demand_rng)
        self.rand = _Pool(mine_rng)
        self.review_rand = _Pool(review_rng)
        self.review_rng = review_rng
        self.baseline = cfg.mode == "baseline"
        Z, n = self.topo.zone_count, self.topo.n
        d = cfg.difficulty
        self.norm = cfg.hash_norm
        self.node_zone = self.topo.home.copy()
        self.node_hash = np.full(n, float(d.hash_per_node))
        a = cfg.attack
        self.attack_zone = None
        self.attacker_hash = 0.0
        if a is not None and a.share > 0:
            self.attack_zone = a.region * cfg.topology.zones + a.zone
            members = self.topo.zone_members(self.attack_zone)
            nominal = self.node_hash[members].sum()
            self.node_hash[members] *= (1 - a.share)
            self.attacker_hash = a.share * nominal
        self.zone_power = np.bincount(self.node_zone, weights=self.node_hash, minlength=Z)
        self.d_zone = np.full(Z, float(d.d_zone))
        self.d_region = np.full(cfg.topology.regions, float(d.d_region))
        self.d_prime = float(d.d_prime)
        self.capacity = int(round(cfg.demand.block_capacity * cfg.demand.multiplier))
        self.mempool = [deque() for _ in range(Z)]
        self.occupancy = np.zeros(Z, dtype=np.int64)
        self.blocks: list[ZBlock] = []
        root = ZBlock(-1, -1, None, 0, 0.0, 0.0, -1, BlockLevel.PRIME, -1, 0.0)
        root.linked_by = root
        root.prime_linked_by = root
        self.root = root
        self.tip = [root] * Z
        self.recent = [deque(maxlen=4) for _ in range(Z)]
        self.limbo: list[list[ZBlock]] = [[] for _ in range(Z)]
        self.region_blocks: list[list[ZBlock]] = [[] for _ in range(cfg.topology.regions)]
        self.prime_blocks: list[ZBlock] = []
        self.gen = np.zeros(Z, dtype=np.int64)
        self.heap: list = []
        self.seq = 0
        self.now = 0.0
        self.stale = 0
        self.offered = np.zeros((Z, 3), dtype=np.int64)
        self.acc: dict[tuple, list] = {}
        self.migrations = 0
        self.power_version = 0
        self.review_cache: dict[int, int] = {}
        self._arrival_cache: dict[tuple, np.ndarray] = {}
        self._bound = None
        self._members_cache: dict[int, tuple] = {}
        # attack fork: honest nodes never build on it
        self.attack_work = 0.0
        self.attack_blocks = 0
        self.attack_d = float(d.d_zone)
        self.attack_times: list[float] = []
        self.attack_gen = 0
        self.work_trace: list[tuple[float, float, float]] = []
        self.fork_base_work = 0.0
        self.map_state = MapState(min(cfg.topology.regions, 256), min(cfg.topology.zones, 256))
        self.resize_policy = ResizePolicy()
        self.resize_events: list[dict] = []
        self.epochs: list[dict] = []
        self._epoch_fill: list[float] = []

    # -- event plumbing -------------------------------------------------------

    def _push(self, t: float, kind: int, *payload) -> None:
        self.seq += 1
        heapq.heappush(self.heap, (t, kind, self.seq, payload))

    def _mining_rate(self, z: int) -> float:
        return self.zone_power[z] / (self.d_zone[z] * self.norm)

    def _schedule_zone(self, z: int) -> None:
        self.gen[z] += 1
        rate = self._mining_rate(z)
        if rate > 0:
            self._push(self.now + self.rand.exp() / rate, _MINE, z, int(self.gen[z]))

    def _schedule_attack(self) -> None:
        self.attack_gen += 1
        rate = self.attacker_hash / (self.attack_d * self.norm)
        if rate > 0:
            self._push(self.now + self.rand.exp() / rate, _ATTACK, self.attack_gen)

    # -- delays ---------------------------------------------------------------

    def _arrival(self, src: int, dst: int) -> float:
        """Seconds for a block found by ``src`` to reach ``dst``."""
        if src == dst or src < 0:
            return 0.0
        topo = self.topo
        same_region = topo.region_of_zone[topo.home[src]] == topo.region_of_zone[topo.home[dst]]
        tier = Tier.REGION if same_region else Tier.GLOBAL
        key = (src, tier)
        arr = self._arrival_cache.get(key)
        if arr is None:
            p = topo.profile(src, tier)
            arr = np.full(topo.n, np.inf)
            arr[p.nodes] = p.arrival_ms / 1000.0
            self._arrival_cache[key] = arr
        return float(arr[dst])

    @property
    def _delay_bound(self) -> float:
        """Upper bound on any block arrival time (twice an eccentricity)."""
        if self._bound is None:
            topo = self.topo
            worst = 0.0
            for tier, origins in ((Tier.GLOBAL, [0]),
                                  (Tier.REGION, [int(topo.region_members(r)[0])
                                                 for r in range(topo.n_regions)])):
                for o in origins:
                    worst = max(worst, float(topo.profile(o, tier).arrival_ms.max()))
            self._bound = 2 * worst / 1000.0
        return self._bound

    def _known(self, b: ZBlock, node: int, t: float) -> bool:
        if b.idx < 0 or t - b.time >= self._delay_bound:
            return True
        return b.time + self._arrival(b.finder, node) <= t

    # -- mempool ----------------------------------------------------------------

    def _take(self, z: int) -> list:
        dq = self.mempool[z]
        remaining = self.capacity
        out = []
        while remaining > 0 and dq:
            b = dq[0]
            tot = b[1] + b[2] + b[3]
            if tot <= remaining:
                dq.popleft()
                out.append(b)
                remaining -= tot
            else:
                a0 = min(b[1], remaining)
                a1 = min(b[2], remaining - a0)
                a2 = remaining - a0 - a1
                out.append([b[0], a0, a1, a2])
                b[1] -= a0
                b[2] -= a1
                b[3] -= a2
                remaining = 0
        self.occupancy[z] -= self.capacity - remaining
        return out

    def _requeue(self, b: ZBlock) -> None:
        dq = self.mempool[b.zone]
        flat = b.batches
        for i in range(len(flat) - 4, -1, -4):
            dq.appendleft([flat[i], int(flat[i + 1]), int(flat[i + 2]), int(flat[i + 3])])
        self.occupancy[b.zone] += sum(b.counts)

    # -- mining -----------------------------------------------------------------

    def _members(self, z: int):
        c = self._members_cache.get(z)
        if c is None:
            nodes = np.nonzero(self.node_zone == z)[0]
            c = (nodes, np.cumsum(self.node_hash[nodes]))
            self._members_cache[z] = c
        return c

    def _pick_finder(self, z: int) -> int:
        nodes, cum = self._members(z)
        i = int(np.searchsorted(cum, self.rand.uniform() * cum[-1], side="right"))
        return int(nodes[min(i, len(nodes) - 1)])

    def _choose_parent(self, z: int, finder: int, t: float) -> ZBlock:
        best = None
        for b in self.recent[z]:
            x = b
            while x.idx >= 0 and (x.state == STALE or not self._known(x, finder, t)):
                x = x.parent
            if best is None or _better(x, best):
                best = x
        if best is None:
            best = self.tip[z]
        return best

    def _sample_level(self, z: int) -> BlockLevel:
        if self.baseline:
            return BlockLevel.ZONE
        u = self.rand.uniform()
        r = int(self.topo.region_of_zone[z])
        dz = self.d_zone[z]
        if u < dz / self.d_prime:
            return BlockLevel.PRIME
        if u < dz / self.d_region[r]:
            return BlockLevel.REGION
        return BlockLevel.ZONE

    def _on_mine(self, z: int, t: float) -> None:
        finder = self._pick_finder(z)
        parent = self._choose_parent(z, finder, t)
        level = self._sample_level(z)
        b = ZBlock(len(self.blocks), z, parent, parent.height + 1,
                   parent.work + self.d_zone[z], t, finder, level, self.rand.key(),
                   self.d_zone[z])
        self.blocks.append(b)
        taken = self._take(z)
        b.counts = (sum(x[1] for x in taken), sum(x[2] for x in taken),
                    sum(x[3] for x in taken))
        b.batches = array("d", [v for x in taken for v in x])
        if parent.state == STALE:
            b.state = STALE
            self.stale += 1
            self._requeue(b)
        else:
            self._connect(b)
        self.recent[z].append(b)
        if level >= BlockLevel.REGION:
            self._on_region_block(b)
        if level >= BlockLevel.PRIME:
            self._on_prime_block(b)
        self._account_block(b)
        self._schedule_zone(z)

    def _connect(self, b: ZBlock) -> None:
        z = b.zone
        old = self.tip[z]
        # walk both branches back to the common ancestor
        x, y = old, b.parent
        leaving, entering = [], []
        while x is not y:
            if x.height >= y.height:
                leaving.append(x)
                x = x.parent
            else:
                entering.append(y)
                y = y.parent
        if any(blk.state == STALE for blk in entering):
            b.state = STALE   # built on a branch already given up
            self.stale += 1
            self._requeue(b)
            return
        if not _better(b, old):
            b.state = LIMBO
            self.limbo[z].append(b)
            return
        for blk in leaving:
            blk.state = LIMBO
            self.limbo[z].append(blk)
        for blk in entering:
            blk.state = CANON
            self.limbo[z].remove(blk)
        b.state = CANON
        self.tip[z] = b
        for blk in [blk for blk in self.limbo[z] if blk.height + 1 < b.height]:
            self.limbo[z].remove(blk)
            blk.state = STALE
            self.stale += 1
            self._requeue(blk)
        self._maybe_retarget_zone(b)

    def _maybe_retarget_zone(self, b: ZBlock) -> None:
        w = self.cfg.difficulty.retarget_window
        if b.height % w:
            return
        x = b
        for _ in range(w):
            x = x.parent
        span = b.time - x.time
        z = b.zone
        old = self.d_zone[z]
        self.d_zone[z] = retarget(old, span, w * self.cfg.difficulty.zone_block_time,
                                  self.cfg.difficulty.retarget_clamp)
        if self.d_zone[z] != old:
            self._schedule_zone(z)

    def _on_region_block(self, b: ZBlock) -> None:
        topo = self.topo
        r = int(topo.region_of_zone[b.zone])
        links = []
        prime_new = 0
        for zi in range(r * topo.n_zones, (r + 1) * topo.n_zones):
            x = self.tip[zi]
            while x.idx >= 0 and x.linked_by is None:
                if x is b or self._known(x, b.finder, b.time):
                    links.append(x)
                x = x.parent
        for x in links:
            x.linked_by = b
            prime_new += x.counts[2]
        b.zone_links = tuple(links)
        b.prime_new = prime_new
        rb = self.region_blocks[r]
        rb.append(b)
        self._maybe_retarget_chain(rb, self.d_region, r,
                                   self._region_target_time())

    def _region_target_time(self) -> float:
        d = self.cfg.difficulty
        return d.zone_block_time * (d.d_region / d.d_zone) / self.topo.n_zones

    def _prime_target_time(self) -> float:
        d = self.cfg.difficulty
        return d.zone_block_time * (d.d_prime / d.d_zone) / self.topo.zone_count

    def _maybe_retarget_chain(self, chain: list, store, index, target_time: float) -> None:
        w = self.cfg.difficulty.retarget_window
        if len(chain) % w or len(chain) < w:
            return
        prev = chain[-w - 1].time if len(chain) > w else 0.0
        span = chain[-1].time - prev
        val = retarget(store[index], span, w * target_time,
                       self.cfg.difficulty.retarget_clamp)
        store[index] = val

    def _on_prime_block(self, b: ZBlock) -> None:
        links = []
        for chain in self.region_blocks:
            for x in reversed(chain):
                if x.prime_linked_by is not None:
                    break
                if x is b or self._known(x, b.finder, b.time):
                    links.append(x)
        for x in links:
            x.prime_linked_by = b
        b.region_links = tuple(links)
        prev_t = self.prime_blocks[-1].time if self.prime_blocks else None
        self.prime_blocks.append(b)
        w = self.cfg.difficulty.retarget_window
        if len(self.prime_blocks) % w == 0:
            prev = self.prime_blocks[-w - 1].time if len(self.prime_blocks) > w else 0.0
            self.d_prime = retarget(self.d_prime, b.time - prev, w * self._prime_target_time(),
                                    self.cfg.difficulty.retarget_clamp)
        # fill of the epoch's zone blocks feeds the resize controller (advisory:
        # the simulated map itself stays fixed)
        fill = float(np.mean(self._epoch_fill)) if self._epoch_fill else 0.0
        self._epoch_fill = []
        self.map_state.record_fill(fill, self.resize_policy.window)
        new = resize(self.map_state, self.resize_policy)
        if new is not self.map_state:
            self.resize_events.append({
                "epoch": len(self.prime_blocks), "time": b.time,
                "old_map": [self.map_state.map_region, self.map_state.map_zone],
                "new_map": [new.map_region, new.map_zone],
                "window_mean_fill": float(np.mean(list(self.map_state.utilization)))})
            self.map_state = new
        self.epochs.append({
            "epoch": len(self.prime_blocks), "time": b.time,
            "interval": None if prev_t is None else b.time - prev_t,
            "region_links": len(links), "fill": fill})

    # -- bandwidth ------------------------------------------------------------

    def _account_block(self, b: ZBlock) -> None:
        if not self.account_bandwidth:
            return
        self._epoch_fill.append(sum(b.counts) / self.capacity)
        o = self.cfg.overhead
        n_all = sum(b.counts)
        same = (o.hash_size if o.compact_blocks else o.tx_size) * n_all
        if self.baseline:
            self._acc(b.finder, Tier.ZONE, same, 0, 0)
            return
        peer = o.tx_size * (b.counts[1] + b.counts[2])
        other = 0
        tier = Tier.REGION
        if b.level >= BlockLevel.REGION:
            tier = Tier.GLOBAL
            links = o.hash_size * len(b.zone_links)
            same += links
            peer += links
            other = o.tx_size * b.prime_new
        if b.level >= BlockLevel.PRIME:
            rl = o.hash_size * len(b.region_links)
            same += rl
            peer += rl
            other += rl + o.hash_size * len(b.zone_links)
        self._acc(b.finder, tier, same, peer, other)

    def _acc(self, finder: int, tier: Tier, same: int, peer: int, other: int) -> None:
        a = self.acc.get((finder, tier))
        if a is None:
            a = self.acc[(finder, tier)] = [0, 0, 0, 0]
        a[0] += 1
        a[1] += same
        a[2] += peer
        a[3] += other

    def _bandwidth(self) -> dict:
        topo, o = self.topo, self.cfg.overhead
        n = topo.n
        sent = {k: np.zeros(n) for k in ("tx_inv", "tx_body", "block_header", "block_body")}
        recv = {k: np.zeros(n) for k in sent}
        if self.account_bandwidth:
            body = o.tx_size + o.envelope
            per_zone = self.offered.sum(1)
            for zi in range(topo.zone_count):
                if per_zone[zi] == 0:
                    continue
                members = topo.zone_members(zi)
                share = per_zone[zi] / len(members)
                for origin in members:
                    p = topo.profile(int(origin), Tier.ZONE)
                    sent["tx_inv"] += share * o.inventory * p.offers_sent
                    recv["tx_inv"] += share * o.inventory * p.offers_recv
                    sent["tx_body"] += share * body * p.bodies_sent.sum(0)
                    recv["tx_body"] += share * body * p.bodies_recv.sum(0)
            for (finder, tier), (count, s_same, s_peer, s_other) in sorted(self.acc.items()):
                p = topo.profile(finder, tier)
                sizes = np.array([s_same, s_peer, s_other], dtype=float).reshape(3, 1)
                sent["block_header"] += count * o.header * p.offers_sent
                recv["block_header"] += count * o.header * p.offers_recv
                sent["block_body"] += (p.bodies_sent * sizes).sum(0)
                recv["block_body"] += (p.bodies_recv * sizes).sum(0)
        dur = max(self.cfg.duration, 1e-9)
        total = sum(sent.values()) + sum(recv.values())
        return {
            "per_node_mean_Bps": float(total.mean() / dur),
            "per_node_max_Bps": float(total.max() / dur) if n else 0.0,
            "sent_total": float(sum(v.sum() for v in sent.values())),
            "recv_total": float(sum(v.sum() for v in recv.values())),
            "by_class_Bps": {k: float((sent[k] + recv[k]).mean() / dur) for k in sent},
        }

    # -- group selection --------------------------------------------------------

    def _perceived_power(self) -> np.ndarray:
        return self.zone_power

    def _on_review(self) -> None:
        g = self.cfg.groups
        node = int(self.review_rand.uniform() * self.topo.n)
        if self.review_cache.get(node) == self.power_version:
            return
        cur = int(self.node_zone[node])
        h = float(self.node_hash[node])
        best = select_group(h, cur, self._perceived_power(),
                            self.topo.zone_delay_medians[node], g.chi, g.latency_weight,
                            g.hysteresis)
        if best == cur:
            self.review_cache[node] = self.power_version
            return
        self.node_zone[node] = best
        self.zone_power[cur] -= h
        self.zone_power[best] += h
        self.zone_power[cur] = max(self.zone_power[cur], 0.0)
        self._members_cache.pop(cur, None)
        self._members_cache.pop(best, None)
        self.power_version += 1
        self.migrations += 1
        self._schedule_zone(cur)
        self._schedule_zone(best)

    # -- attack fork -------------------------------------------------------------

    def _on_attack_block(self, t: float) -> None:
        self.attack_blocks += 1
        self.attack_work += self.attack_d
        self.attack_times.append(t)
        w = self.cfg.difficulty.retarget_window
        if self.attack_blocks % w == 0:
            prev = self.attack_times[-w - 1] if self.attack_blocks > w else 0.0
            self.attack_d = retarget(self.attack_d, t - prev,
                                     w * self.cfg.difficulty.zone_block_time,
                                     self.cfg.difficulty.retarget_clamp)
        self._schedule_attack()

    def honest_fork_work(self) -> float:
        return self.tip[self.attack_zone].work - self.fork_base_work

    # -- main loop ---------------------------------------------------------------

    def run(self) -> SimMetrics:
        cfg = self.cfg
        T = cfg.duration
        for z in range(self.topo.zone_count):
            self._schedule_zone(z)
        if self.attack_zone is not None:
            self._schedule_attack()
            self.fork_base_work = self.tip[self.attack_zone].work
        if self.demand.rate > 0:
            self._push(cfg.demand.tick, _TICK)
        review_rate = self.topo.n / cfg.groups.review_mean
        if cfg.groups.migration and not self.baseline and self.topo.zone_count > 1:
            self._push(self.review_rand.exp() / review_rate, _REVIEW)
        self._push(T, _END)
        tick = cfg.demand.tick
        heap = self.heap
        while heap:
            t, kind, _, payload = heapq.heappop(heap)
            self.now = t
            if kind == _END:
                break
            if kind == _MINE:
                z, gen = payload
                if gen == self.gen[z]:
                    self._on_mine(z, t)
                    if self.attack_zone is not None and z == self.attack_zone:
                        self.work_trace.append((t, self.honest_fork_work(), self.attack_work))
            elif kind == _TICK:
                arr = self.demand.arrivals(self.occupancy, tick)
                self.offered += arr
                for zi in np.nonzero(arr.sum(1))[0].tolist():
                    a = arr[zi]
                    self.mempool[zi].append([t, int(a[0]), int(a[1]), int(a[2])])
                self.occupancy += arr.sum(1)
                if t + tick <= T:
                    self._push(t + tick, _TICK)
            elif kind == _REVIEW:
                self._on_review()
                self._push(t + self.review_rand.exp() / review_rate, _REVIEW)
            elif kind == _ATTACK:
                if payload[0] == self.attack_gen:
                    self._on_attack_block(t)
                    self.work_trace.append((t, self.honest_fork_work(), self.attack_work))
        self.now = T
        return self._metrics()

    # -- results -------------------------------------------------------------------

    def canonical_blocks(self) -> list[ZBlock]:
        out = []
        for z in range(self.topo.zone_count):
            x = self.tip[z]
            while x.idx >= 0:
                out.append(x)
                x = x.parent
        out.sort(key=lambda b: b.idx)
        return out

    def _settlement(self, canon: list[ZBlock]) -> tuple[dict, int, int]:
        """Latency per scope from arrival to the settling block, over txs settled
        by the end of the run. ZONAL settles at its canonical zone block,
        REGIONAL at the region block that linked that zone block, PRIME at the
        PRIME block that linked that region block."""
        T = self.cfg.duration
        nan = np.nan
        flat = array("d")
        per_block = []   # t0, t1, t2, level1, level2, batch count
        for b in canon:
            if self.baseline:
                t1 = t2 = b.time
                l1 = l2 = BlockLevel.PRIME
            else:
                r = b.linked_by
                t1, l1 = (r.time, r.level) if r is not None else (nan, 0)
                p = r.prime_linked_by if r is not None else None
                t2, l2 = (p.time, p.level) if p is not None else (nan, 0)
            flat.extend(b.batches)
            per_block.append((b.time, t1, t2, l1, l2, len(b.batches) // 4))
        batches = np.frombuffer(flat, dtype=float).reshape(-1, 4)
        blk = np.array(per_block, dtype=float).reshape(-1, 6)
        row_block = np.repeat(np.arange(len(blk), dtype=np.int32), blk[:, 5].astype(np.int64))
        out = {}
        violations = 0
        settled = 0
        offered = self.offered.sum(0)
        need = (None, BlockLevel.REGION, BlockLevel.PRIME)
        for i, name in enumerate(SCOPES):
            cnt = batches[:, 1 + i]
            when = blk[row_block, i]
            ok = (cnt > 0) & np.isfinite(when) & (when <= T)
            if i > 0:
                lvl = blk[row_block, 2 + i]
                violations += int(cnt[ok & (lvl < need[i])].sum())
                del lvl
            v = when[ok] - batches[ok, 0]
            w = cnt[ok]
            del when, ok
            p50, p90, p99 = _weighted_quantiles(v, w, (0.5, 0.9, 0.99))
            settled += int(w.sum())
            out[name] = {"settled": int(w.sum()), "offered": int(offered[i]),
                         "p50": p50, "p90": p90, "p99": p99,
                         "mean": float((v * w).sum() / w.sum()) if w.sum() else None}
        return out, violations, settled

    def _storage(self, canon: list[ZBlock]) -> dict:
        """Full-node bytes against the mean bytes a sharded zone node keeps.

        A zone node keeps its own blocks in full, headers of the other zones in
        its region and of region-level blocks elsewhere, the links of its
        region's region blocks and of PRIME blocks, and the higher-scope txs
        that land in it. Each such tx lands in exactly one zone, so on average
        a zone holds 1/Z of them.
        """
        o = self.cfg.overhead
        topo = self.topo
        Z, R = topo.zone_count, topo.n_regions
        own = np.zeros(Z)
        own_headers = np.zeros(Z)
        higher = 0.0
        for b in canon:
            own[b.zone] += o.header + o.tx_size * sum(b.counts)
            own_headers[b.zone] += o.header
            higher += o.tx_size * (b.counts[1] + b.counts[2])
        region_links = np.array([o.hash_size * sum(len(b.zone_links) for b in chain)
                                 for chain in self.region_blocks])
        region_level = np.array([len(chain) for chain in self.region_blocks])
        prime_links = o.hash_size * sum(len(b.region_links) for b in self.prime_blocks)
        full = own.sum() + region_links.sum() + prime_links
        per_zone = np.zeros(Z)
        for zi in range(Z):
            r = topo.region_of_zone[zi]
            in_region = slice(r * topo.n_zones, (r + 1) * topo.n_zones)
            per_zone[zi] = (own[zi]
                            + own_headers[in_region].sum() - own_headers[zi]
                            + o.header * (region_level.sum() - region_level[r])
                            + region_links[r] + prime_links + higher / Z)
        sharded = float(per_zone.mean()) if Z else 0.0
        return {"full_bytes": float(full), "sharded_mean_bytes": sharded,
                "ratio": sharded / full if full else 0.0}

    def _metrics(self) -> SimMetrics:
        cfg, topo = self.cfg, self.topo
        T = max(cfg.duration, 1e-9)
        canon = self.canonical_blocks()
        settlement, violations, settled = self._settlement(canon)
        pt = [b.time for b in self.prime_blocks]
        intervals = np.diff(pt) if len(pt) > 1 else np.array([])
        rl = [len(b.region_links) for b in self.prime_blocks]
        zl = [len(b.zone_links) for chain in self.region_blocks for b in chain]
        included = sum(sum(b.counts) for b in canon)
        m = SimMetrics(
            name=cfg.name, mode=cfg.mode, seed=cfg.seed, duration=cfg.duration,
            zones=topo.zone_count, nodes=topo.n,
            tps_offered=float(self.offered.sum() / T),
            tps_included=float(included / T),
            settled_tps=float(settled / T),
            blocks={"zone": len(canon),
                    "region": sum(len(c) for c in self.region_blocks),
                    "prime": len(self.prime_blocks),
                    "mined": len(self.blocks)},
            stale_blocks=self.stale,
            prime_interval_mean=float(intervals.mean()) if len(intervals) else None,
            prime_intervals=int(len(intervals)),
            zone_links_per_region_block=float(np.mean(zl)) if zl else None,
            region_links_per_prime_block=float(np.mean(rl)) if rl else None,
            settlement=settlement,
            settlement_level_violations=violations,
            bandwidth=self._bandwidth(),
            storage=self._storage(canon),
            migrations=self.migrations,
            zone_power={"min": float(self.zone_power.min()), "max": float(self.zone_power.max()),
                        "mean": float(self.zone_power.mean())},
            resize_events=self.resize_events,
            epochs=self.epochs,
        )
        return m

    def export_chain(self) -> str:
        """Canonical blocks as line-delimited JSON, in the order they were found."""
        lines = []
        for b in self.canonical_blocks():
            lines.append(json.dumps({
                "level": BlockLevel(b.level).name, "id": b.idx,
                "location": str(self.topo.location(b.zone)), "time": round(b.time, 6),
                "height": b.height,
                "parent_zone": b.parent.idx,
                "linked_by": None if b.linked_by is None else b.linked_by.idx,
                "linked_zone": [x.idx for x in b.zone_links],
                "linked_region": [x.idx for x in b.region_links],
                "txs": list(b.counts)}, sort_keys=True))
        return "".join(x + "\n" for x in lines)


def run(cfg: SimConfig, seed: int | None = None, account_bandwidth: bool = True) -> SimMetrics:
    if seed is not None:
        cfg = cfg.replace(seed=seed)
    return Simulation(cfg, account_bandwidth).run()
