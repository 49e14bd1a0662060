"""Chain linkage across zone, region and PRIME chains; fork choice; what each
block shares with peers.

A block that clears a level's target is a member of that level's chain and of
every chain below it, so a PRIME-level block is simultaneously the tip of a
zone chain, a region chain and the PRIME chain.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Callable, Iterable

from .core import (
    HASH_SIZE, HEADER_SIZE, TX_ACCOUNTING_SIZE, Block, BlockLevel, Location,
    Scope, Transaction, compute_scope,
)
from .ledger import (
    LedgerError, LedgerState, RewardPayment, SettlementStatus, Status,
    apply_block, revert_block,
)
from .pow import MAX_TARGET, classify_block, difficulty
from .rewards import RewardParams, distribute, escrow_adjust, EscrowState


class HierarchyError(ValueError):
    pass


class ExtendStatus(enum.Enum):
    CANONICAL = "canonical"
    FORK = "fork"
    ORPHAN = "orphan"
    DUPLICATE = "duplicate"


def zone_key(loc: Location) -> tuple:
    return ("zone", loc.region, loc.zone)


def region_key(region: int) -> tuple:
    return ("region", region)


PRIME_KEY = ("prime",)


@dataclass
class BlockRecord:
    block: Block
    level: BlockLevel
    seq: int
    zone_work: float
    region_work: float | None
    prime_work: float | None
    zone_height: int


def _tie_key(work: float, h: bytes) -> tuple:
    # heavier wins; among equal work the numerically lower hash wins
    return (work, -int.from_bytes(h, "big"))


def heaviest(candidates: Iterable[bytes], work: Callable[[bytes], float]) -> bytes | None:
    best = None
    best_key = None
    for h in candidates:
        k = _tie_key(work(h), h)
        if best_key is None or k > best_key:
            best, best_key = h, k
    return best


class ChainView:
    """One node's knowledge of the three-level hierarchy.

    ``home`` is the zone the node mines; it selects which tips feed the
    interlink root.
    """

    def __init__(self, genesis: Block, home: Location = Location(0, 0),
                 orphan_limit: int = 64, max_target: int = MAX_TARGET):
        self.genesis = genesis
        self.home = home
        self.orphan_limit = orphan_limit
        self.max_target = max_target
        g = genesis.hash
        self.blocks: dict[bytes, BlockRecord] = {
            g: BlockRecord(genesis, BlockLevel.PRIME, 0, 0.0, 0.0, 0.0, 0)}
        self.orphans: dict[bytes, tuple[Block, BlockLevel]] = {}
        self.invalid: set[bytes] = set()
        self.tips: dict[tuple, bytes] = {PRIME_KEY: g}
        self._seq = 1

    # -- basic queries ------------------------------------------------------

    @property
    def genesis_hash(self) -> bytes:
        return self.genesis.hash

    def __contains__(self, h: bytes) -> bool:
        return h in self.blocks

    def record(self, h: bytes) -> BlockRecord:
        return self.blocks[h]

    def tip(self, key: tuple) -> bytes:
        return self.tips.get(key, self.genesis_hash)

    def latest_hashes(self) -> tuple[bytes, bytes, bytes]:
        return (self.tip(PRIME_KEY), self.tip(region_key(self.home.region)),
                self.tip(zone_key(self.home)))

    @property
    def total_work(self) -> float:
        return self.blocks[self.tip(PRIME_KEY)].prime_work

    def _parent(self, h: bytes, key_kind: str) -> bytes | None:
        if h == self.genesis_hash:
            return None
        hdr = self.blocks[h].block.header
        return {"zone": hdr.parent_zone, "region": hdr.parent_region,
                "prime": hdr.parent_prime}[key_kind]

    def chain(self, key: tuple, tip: bytes | None = None) -> list[bytes]:
        """Hashes from the first block after genesis up to ``tip`` (default canonical)."""
        h = self.tip(key) if tip is None else tip
        out = []
        while h != self.genesis_hash:
            out.append(h)
            h = self._parent(h, key[0])
        out.reverse()
        return out

    def members(self, key: tuple) -> list[bytes]:
        """Every known block that belongs to the chain ``key``, any branch."""
        kind = key[0]
        out = []
        for h, rec in self.blocks.items():
            if h == self.genesis_hash or h in self.invalid:
                continue
            hdr = rec.block.header
            if kind == "zone" and (hdr.location_region, hdr.location_zone) == key[1:]:
                out.append(h)
            elif kind == "region" and rec.level >= BlockLevel.REGION \
                    and hdr.location_region == key[1]:
                out.append(h)
            elif kind == "prime" and rec.level >= BlockLevel.PRIME:
                out.append(h)
        return out

    # -- extension ----------------------------------------------------------

    def _missing(self, b: Block, level: BlockLevel) -> list[bytes]:
        h = b.header
        need = [h.parent_zone, h.parent_region, h.parent_prime]
        if level >= BlockLevel.REGION:
            need += list(b.linked_zone_block_hashes)
        if level >= BlockLevel.PRIME:
            need += list(b.linked_region_block_hashes)
        return [x for x in need if x not in self.blocks]

    def _check_links(self, b: Block, level: BlockLevel) -> None:
        h = b.header
        g = self.genesis_hash
        pz = self.blocks[h.parent_zone]
        if h.parent_zone != g and pz.block.location != b.location:
            raise HierarchyError("bad-parent: zone parent is in another zone")
        pr = self.blocks[h.parent_region]
        if h.parent_region != g and (pr.level < BlockLevel.REGION
                                     or pr.block.header.location_region != h.location_region):
            raise HierarchyError("bad-parent: region parent is not a block of this region")
        pp = self.blocks[h.parent_prime]
        if h.parent_prime != g and pp.level < BlockLevel.PRIME:
            raise HierarchyError("bad-parent: PRIME parent is not a PRIME block")
        if level >= BlockLevel.REGION:
            for z in b.linked_zone_block_hashes:
                zb = self.blocks[z].block
                if z == g or zb.header.location_region != h.location_region:
                    raise HierarchyError("bad-link: linked zone block from another region")
        if level >= BlockLevel.PRIME:
            for r in b.linked_region_block_hashes:
                if r == g or self.blocks[r].level < BlockLevel.REGION:
                    raise HierarchyError("bad-link: linked block is not a region block")

    def _insert(self, b: Block, level: BlockLevel) -> None:
        h = b.header
        mt = self.max_target
        pz = self.blocks[h.parent_zone]
        zone_work = pz.zone_work + difficulty(h.bits_zone, mt)
        region_work = prime_work = None
        if level >= BlockLevel.REGION:
            region_work = self.blocks[h.parent_region].region_work + difficulty(h.bits_region, mt)
        if level >= BlockLevel.PRIME:
            prime_work = self.blocks[h.parent_prime].prime_work + difficulty(h.bits_prime, mt)
        self.blocks[b.hash] = BlockRecord(b, level, self._seq, zone_work, region_work,
                                          prime_work, pz.zone_height + 1)
        self._seq += 1

    def extend(self, b: Block, level: BlockLevel | None = None) -> ExtendStatus:
        """Add a block; returns whether it ended up canonical, on a fork, or orphaned.

        Blocks whose parents or linked blocks are unknown wait in a bounded
        orphan pool (oldest evicted first) until those arrive.
        """
        if level is None:
            level = classify_block(b.hash, b.header)
        if level < BlockLevel.ZONE:
            raise HierarchyError("insufficient-work")
        if b.hash in self.blocks:
            return ExtendStatus.DUPLICATE
        if self._missing(b, level):
            self.orphans[b.hash] = (b, level)
            while len(self.orphans) > self.orphan_limit:
                self.orphans.pop(next(iter(self.orphans)))
            return ExtendStatus.ORPHAN
        self._check_links(b, level)
        self._insert(b, level)
        self._adopt_orphans()
        self.fork_choice()
        return ExtendStatus.CANONICAL if self.is_canonical(b.hash) else ExtendStatus.FORK

    def _adopt_orphans(self) -> None:
        progress = True
        while progress:
            progress = False
            for h, (ob, lvl) in list(self.orphans.items()):
                if not self._missing(ob, lvl):
                    del self.orphans[h]
                    try:
                        self._check_links(ob, lvl)
                    except HierarchyError:
                        continue
                    self._insert(ob, lvl)
                    progress = True

    def missing_parents(self) -> set[bytes]:
        """Hashes the orphan pool is waiting for (what a node would request)."""
        out = set()
        for b, lvl in self.orphans.values():
            out.update(self._missing(b, lvl))
        return out - set(self.orphans)

    # -- fork choice --------------------------------------------------------

    def _descends_from_invalid(self, h: bytes, kind: str, memo: dict) -> bool:
        path = []
        bad = False
        while h is not None and h != self.genesis_hash:
            if h in memo:
                bad = memo[h]
                break
            if h in self.invalid:
                bad = True
                break
            path.append(h)
            h = self._parent(h, kind)
        for p in path:
            memo[p] = bad
        return bad

    def fork_choice(self, competing: dict[tuple, Iterable[bytes]] | None = None) -> dict[tuple, bytes]:
        """Pick canonical tips top-down: PRIME by total work, then each region
        among chains anchored to canonical PRIME, then each zone among chains
        anchored to its canonical region and PRIME. Ties go to the lower hash.

        ``competing`` optionally restricts the candidate tips for some chains.
        """
        competing = competing or {}
        g = self.genesis_hash
        keys = {PRIME_KEY}
        for h, rec in self.blocks.items():
            if h == g:
                continue
            loc = rec.block.location
            keys.add(zone_key(loc))
            if rec.level >= BlockLevel.REGION:
                keys.add(region_key(loc.region))
        tips: dict[tuple, bytes] = {}

        def pick(key, work, anchored):
            memo: dict[bytes, bool] = {}
            cands = competing.get(key)
            pool = list(cands) if cands is not None else self.members(key)
            good = [h for h in pool if not self._descends_from_invalid(h, key[0], memo)
                    and anchored(h)]
            return heaviest(good + [g], work) or g

        tips[PRIME_KEY] = pick(PRIME_KEY, lambda h: self.blocks[h].prime_work,
                               lambda h: True)
        prime_set = set(self.chain(PRIME_KEY, tips[PRIME_KEY])) | {g}
        region_sets: dict[int, set] = {}
        for key in sorted(k for k in keys if k[0] == "region"):
            anchored = self._anchor_check("region", lambda hdr: hdr.parent_prime in prime_set)
            tips[key] = pick(key, lambda h: self.blocks[h].region_work, anchored)
            region_sets[key[1]] = set(self.chain(key, tips[key])) | {g}
        for key in sorted(k for k in keys if k[0] == "zone"):
            rset = region_sets.get(key[1], {g})
            anchored = self._anchor_check(
                "zone", lambda hdr, rset=rset: hdr.parent_prime in prime_set
                and hdr.parent_region in rset)
            tips[key] = pick(key, lambda h: self.blocks[h].zone_work, anchored)
        self.tips = tips
        return dict(tips)

    def _anchor_check(self, kind: str, ok: Callable) -> Callable[[bytes], bool]:
        memo: dict[bytes, bool] = {}

        def anchored(h: bytes) -> bool:
            path = []
            result = True
            while h != self.genesis_hash:
                if h in memo:
                    result = memo[h]
                    break
                path.append(h)
                if not ok(self.blocks[h].block.header):
                    result = False
                    break
                h = self._parent(h, kind)
            for p in path:
                memo[p] = result
            return result
        return anchored

    def is_canonical(self, h: bytes) -> bool:
        return self.effective_level(h) >= BlockLevel.ZONE

    def canonical_sets(self) -> dict[str, set[bytes]]:
        zone, region, prime = set(), set(), set()
        for key in self.tips:
            s = set(self.chain(key))
            {"zone": zone, "region": region, "prime": prime}[key[0]].update(s)
        return {"zone": zone, "region": region, "prime": prime}

    def effective_level(self, h: bytes, sets: dict | None = None) -> BlockLevel:
        """Highest level at which ``h`` is on a canonical chain (NONE if stale)."""
        sets = sets or self.canonical_sets()
        if h in sets["prime"]:
            return BlockLevel.PRIME
        if h in sets["region"]:
            return BlockLevel.REGION
        if h in sets["zone"]:
            return BlockLevel.ZONE
        return BlockLevel.NONE

    def canonical_sequence(self) -> list[tuple[Block, BlockLevel]]:
        """Canonical blocks in the order they were connected, with their effective level."""
        sets = self.canonical_sets()
        every = sets["zone"] | sets["region"] | sets["prime"]
        recs = sorted((self.blocks[h] for h in every), key=lambda r: r.seq)
        return [(r.block, self.effective_level(r.block.hash, sets)) for r in recs]

    # -- upward carrying ------------------------------------------------------

    def pending_upward(self) -> dict[BlockLevel, dict[bytes, Transaction]]:
        """Higher-scope txs in canonical zone blocks not yet settled by a
        canonical block of the level they need."""
        waiting = {BlockLevel.REGION: {}, BlockLevel.PRIME: {}}
        settled: set[bytes] = set()
        for b, lvl in self.canonical_sequence():
            for tx in b.region_txs:
                if tx.location == b.location:
                    waiting[BlockLevel.REGION].setdefault(tx.txid, tx)
            for tx in b.prime_txs:
                if tx.location == b.location:
                    waiting[BlockLevel.PRIME].setdefault(tx.txid, tx)
            if lvl >= BlockLevel.REGION:
                settled.update(t.txid for t in b.region_txs)
            if lvl >= BlockLevel.PRIME:
                settled.update(t.txid for t in b.prime_txs)
        return {k: {t: tx for t, tx in v.items() if t not in settled}
                for k, v in waiting.items()}

    def unlinked_zone_blocks(self, region: int) -> list[bytes]:
        """Canonical zone blocks of ``region`` not yet linked by its canonical region chain."""
        linked = set()
        for h in self.chain(region_key(region)):
            linked.update(self.blocks[h].block.linked_zone_block_hashes)
            linked.add(h)
        out = []
        for key in sorted(k for k in self.tips if k[0] == "zone" and k[1] == region):
            out.extend(h for h in self.chain(key) if h not in linked)
        return sorted(out, key=lambda h: self.blocks[h].seq)

    def unlinked_region_blocks(self) -> list[bytes]:
        linked = set()
        for h in self.chain(PRIME_KEY):
            linked.update(self.blocks[h].block.linked_region_block_hashes)
            linked.add(h)
        out = []
        for key in sorted(k for k in self.tips if k[0] == "region"):
            out.extend(h for h in self.chain(key) if h not in linked)
        return sorted(out, key=lambda h: self.blocks[h].seq)

    def export_lines(self) -> str:
        """Canonical chain dump, one JSON record per block in connection order."""
        out = []
        for b, lvl in self.canonical_sequence():
            h = b.header
            out.append(json.dumps({
                "level": lvl.name, "hash": b.hash.hex(),
                "location": str(b.location), "time": h.unix_time,
                "parent_zone": h.parent_zone.hex(), "parent_region": h.parent_region.hex(),
                "parent_prime": h.parent_prime.hex(),
                "linked_zone": [x.hex() for x in b.linked_zone_block_hashes],
                "linked_region": [x.hex() for x in b.linked_region_block_hashes],
            }, sort_keys=True))
        return "".join(line + "\n" for line in out)


def extend(view: ChainView, b: Block, level: BlockLevel | None = None) -> ExtendStatus:
    return view.extend(b, level)


def fork_choice(view: ChainView, competing: dict | None = None) -> dict[tuple, bytes]:
    return view.fork_choice(competing)


# -- peer sharing -------------------------------------------------------------

class Recipient(enum.Enum):
    SAME_ZONE = "same-zone"
    PEER_ZONE = "peer-zone"
    OTHER_REGION = "other-region"


@dataclass
class Bundle:
    header_hash: bytes
    txs: tuple[Transaction, ...] = ()
    linked_hashes: tuple[bytes, ...] = ()
    tx_size: int = TX_ACCOUNTING_SIZE

    @property
    def size(self) -> int:
        return HEADER_SIZE + self.tx_size * len(self.txs) + HASH_SIZE * len(self.linked_hashes)


def share_set_for_peers(b: Block, level: BlockLevel,
                        recipient: Recipient = Recipient.PEER_ZONE,
                        tx_size: int = TX_ACCOUNTING_SIZE) -> Bundle:
    """What a newly found block sends to a peer once the peer asks for it.

    Peers in the same zone get everything. Peer zones get the region- and
    PRIME-scope transactions; other regions only the PRIME-scope ones. Linked
    hashes travel with region blocks inside their region and with PRIME blocks
    everywhere. Zone-scope transactions never leave their zone.
    """
    if recipient is Recipient.SAME_ZONE:
        txs = b.all_txs()
    elif recipient is Recipient.PEER_ZONE:
        txs = b.region_txs + b.prime_txs
    else:
        txs = b.prime_txs
    links: tuple[bytes, ...] = ()
    if level >= BlockLevel.PRIME:
        links = b.linked_zone_block_hashes + b.linked_region_block_hashes
    elif level >= BlockLevel.REGION and recipient is not Recipient.OTHER_REGION:
        links = b.linked_zone_block_hashes
    return Bundle(b.hash, txs, links, tx_size)


# -- keeping a ledger in step with the view ---------------------------------

@dataclass
class ChainLedger:
    """A ChainView plus the ledger state of its canonical blocks.

    ``sync`` reverts and re-applies so the ledger always reflects the current
    canonical sequence; blocks that fail ledger validation are marked invalid
    and fork choice is rerun without them.
    """

    view: ChainView
    state: LedgerState
    reward_params: RewardParams | None = None
    emission: Callable[[int], int] = lambda height: 0
    applied: list[tuple[bytes, BlockLevel]] = field(default_factory=list)

    def extend(self, b: Block, level: BlockLevel | None = None) -> ExtendStatus:
        status = self.view.extend(b, level)
        if status in (ExtendStatus.CANONICAL, ExtendStatus.FORK):
            self.sync()
        return status

    def sync(self) -> None:
        while True:
            target = [(b, lvl) for b, lvl in self.view.canonical_sequence()
                      if b.hash != self.view.genesis_hash]
            keyed = [(b.hash, lvl) for b, lvl in target]
            common = 0
            while (common < len(self.applied) and common < len(keyed)
                   and self.applied[common] == keyed[common]):
                common += 1
            while len(self.applied) > common:
                h, _ = self.applied.pop()
                revert_block(self.view.record(h).block, self.state)
            failed = None
            for b, lvl in target[common:]:
                try:
                    apply_block(b, lvl, self.state, self._reward_for(b, lvl, self.state))
                except LedgerError:
                    failed = b.hash
                    break
                self.applied.append((b.hash, lvl))
            if failed is None:
                return
            self.view.invalid.add(failed)
            self.view.fork_choice()

    def _reward_for(self, b: Block, lvl: BlockLevel,
                    state: LedgerState) -> RewardPayment | None:
        if lvl < BlockLevel.PRIME or self.reward_params is None:
            return None
        return epoch_reward(self.view, b, state, self.reward_params,
                            self.emission(len(self.view.chain(PRIME_KEY, b.hash))))

    def replay(self) -> LedgerState:
        """Fresh ledger built by applying the canonical sequence from genesis."""
        fresh = LedgerState(genesis=self.state.genesis, map_region=self.state.map_region,
                            map_zone=self.state.map_zone)
        fresh.zones = {k: dict(v) for k, v in self._genesis_zones.items()}
        fresh.counters = dict(self._genesis_counters)
        for b, lvl in self.view.canonical_sequence():
            if b.hash == self.view.genesis_hash:
                continue
            apply_block(b, lvl, fresh, self._reward_for(b, lvl, fresh))
        return fresh

    def __post_init__(self):
        self._genesis_zones = {k: dict(v) for k, v in self.state.zones.items()}
        self._genesis_counters = dict(self.state.counters)

    def settlement(self, txid: bytes) -> SettlementStatus:
        return self.state.status.get(txid, SettlementStatus(Status.PENDING))


def epoch_finders(view: ChainView, prime_block: Block) -> tuple[list[bytes], list[bytes]]:
    """Coinbase keys of the region-level and zone-level blocks counted in the
    epoch closed by ``prime_block``, the block itself included in both."""
    region_blocks = list(prime_block.linked_region_block_hashes)
    zone_blocks = list(prime_block.linked_zone_block_hashes)
    for r in prime_block.linked_region_block_hashes:
        rb = view.record(r).block
        zone_blocks.extend(z for z in rb.linked_zone_block_hashes)
        zone_blocks.append(r)
    region_keys = [view.record(h).block.coinbase_key for h in region_blocks]
    region_keys.append(prime_block.coinbase_key)
    zone_keys = [view.record(h).block.coinbase_key for h in zone_blocks]
    zone_keys.append(prime_block.coinbase_key)
    return region_keys, zone_keys


def epoch_reward(view: ChainView, b: Block, state: LedgerState, params: RewardParams,
                 emission: int) -> RewardPayment:
    region_keys, zone_keys = epoch_finders(view, b)
    fees = state.counters["fee_pool"]
    p = RewardParams(emission + fees, params.chi, params.d_prime, params.d_region,
                     params.d_zone, params.mode)
    payouts = distribute(b.coinbase_key, region_keys, zone_keys, p)
    owed = sum(payouts.values())
    minted, new = escrow_adjust(owed, emission + fees,
                                EscrowState(balance=state.counters["escrow"]))
    where: dict[bytes, Location] = {b.coinbase_key: b.location}
    for h in list(b.linked_region_block_hashes) + [
            z for r in b.linked_region_block_hashes
            for z in view.record(r).block.linked_zone_block_hashes] + list(
            b.linked_zone_block_hashes):
        blk = view.record(h).block
        where.setdefault(blk.coinbase_key, blk.location)
    rows = tuple((k, v, where[k]) for k, v in sorted(payouts.items()) if v > 0)
    return RewardPayment(rows, fees, emission, minted, new.balance - state.counters["escrow"])


def scope_of(tx: Transaction, b: Block) -> Scope:
    return compute_scope(tx, b.header.map_region, b.header.map_zone)


# -- block assembly -------------------------------------------------------------

def assemble_block(view: ChainView, location: Location, txs: Iterable[Transaction],
                   bits: tuple[int, int, int], unix_time: int = 0,
                   coinbase_key: bytes = b"\x00" * HASH_SIZE,
                   map_region: int = 256, map_zone: int = 256,
                   carry_pending: bool = True) -> Block:
    """Unmined block on top of the miner's current tips.

    ``txs`` are new transactions located in ``location``; they are sorted into
    the three sets by scope. Higher-scope transactions still waiting for a
    settling block are carried along, and every not-yet-linked zone and region
    block is referenced, because the level the hash will reach is unknown until
    it is found. ``finalize_block`` drops the links the level does not need.
    """
    from .core import BlockHeader, compute_interlink_root, tx_merkle_roots

    zone_txs, region_txs, prime_txs = [], [], []
    for tx in txs:
        s = compute_scope(tx, map_region, map_zone)
        (zone_txs, region_txs, prime_txs)[int(s)].append(tx)
    if carry_pending:
        seen = {t.txid for t in region_txs + prime_txs}
        pend = view.pending_upward()
        for txid, tx in pend[BlockLevel.REGION].items():
            if tx.location.region == location.region and txid not in seen:
                region_txs.append(tx)
                seen.add(txid)
        for txid, tx in pend[BlockLevel.PRIME].items():
            if txid not in seen:
                prime_txs.append(tx)
                seen.add(txid)
    old_home = view.home
    view.home = location
    try:
        interlink = compute_interlink_root(view)
        prime_tip, region_tip, zone_tip = view.latest_hashes()
    finally:
        view.home = old_home
    rp, rr, rz = tx_merkle_roots(zone_txs, region_txs, prime_txs)
    header = BlockHeader(
        parent_prime=prime_tip, parent_region=region_tip, parent_zone=zone_tip,
        merkle_root_prime=rp, merkle_root_region=rr, merkle_root_zone=rz,
        merkle_root_interlink=interlink, unix_time=unix_time,
        bits_prime=bits[0], bits_region=bits[1], bits_zone=bits[2],
        fees_region=sum(t.fee for t in region_txs + prime_txs),
        fees_zone=sum(t.fee for t in zone_txs),
        map_region=map_region, map_zone=map_zone,
        location_region=location.region, location_zone=location.zone)
    zone_links = [h for h in view.unlinked_zone_blocks(location.region)]
    if zone_tip in zone_links:
        zone_links.remove(zone_tip)
        zone_links.append(zone_tip)
    return Block(header, tuple(zone_txs), tuple(region_txs), tuple(prime_txs),
                 tuple(zone_links), tuple(view.unlinked_region_blocks()), coinbase_key)


def finalize_block(template: Block, nonce: int, level: BlockLevel) -> Block:
    from dataclasses import replace
    zl = template.linked_zone_block_hashes if level >= BlockLevel.REGION else ()
    rl = template.linked_region_block_hashes if level >= BlockLevel.PRIME else ()
    return replace(template, header=template.header.with_nonce(nonce),
                   linked_zone_block_hashes=zl, linked_region_block_hashes=rl, _hash=b"")


def mine_block(template: Block, max_attempts: int = 1 << 20,
               want: BlockLevel | None = None) -> tuple[Block, BlockLevel]:
    """Grind ``template``; with ``want`` set, keep going until exactly that level."""
    from .pow import grind
    nonce = template.header.nonce
    while True:
        n, level = grind(template.header.with_nonce(nonce), max_attempts)
        if want is None or level == want:
            return finalize_block(template, n, level), level
        nonce = n + 1
