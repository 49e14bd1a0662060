"""Located UTXO state, transaction validation, scope-dependent settlement and
storage accounting for full and sharded nodes.

All zone ledgers live in one ``LedgerState``. Every mutation goes through a
journal so ``revert_block`` restores the exact previous state.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .core import (
    HEADER_SIZE, HASH_SIZE, TX_ACCOUNTING_SIZE, ZERO_HASH, Block, BlockLevel,
    CoreError, Location, OutPoint, Scope, SignatureScheme, Transaction,
    DEFAULT_SCHEME, check_block_structure, compute_scope, merkle_root, sha256d,
)

COINBASE_MATURITY = 10


class LedgerError(ValueError):
    """Validation failure; ``code`` is one of the documented error names."""

    def __init__(self, code: str, detail: str = ""):
        super().__init__(f"{code}: {detail}" if detail else code)
        self.code = code


class Status(enum.Enum):
    PENDING = "pending"
    LOCALLY_CONSISTENT = "locally_consistent"
    SETTLED = "settled"


@dataclass(frozen=True)
class SettlementStatus:
    status: Status
    settled_at: bytes | None = None


@dataclass(frozen=True, order=True)
class UtxoEntry:
    amount: int
    owner: bytes
    location: Location
    declared: Location
    mature_at: int = 0


@dataclass(frozen=True)
class PendingTx:
    tx: Transaction
    scope: Scope
    origin_block: bytes


@dataclass(frozen=True)
class RewardPayment:
    """Outcome of one PRIME epoch as the ledger needs it."""

    payouts: tuple[tuple[bytes, int, Location], ...]
    fees_used: int
    emission: int
    minted_extra: int
    escrow_delta: int


_MISSING = object()


class _Journal:
    def __init__(self):
        self.ops: list[tuple[dict, object, object]] = []

    def set(self, d: dict, key, value) -> None:
        self.ops.append((d, key, d.get(key, _MISSING)))
        d[key] = value

    def delete(self, d: dict, key) -> None:
        self.ops.append((d, key, d[key]))
        del d[key]

    def undo(self) -> None:
        for d, key, old in reversed(self.ops):
            if old is _MISSING:
                d.pop(key, None)
            else:
                d[key] = old


@dataclass
class LedgerState:
    genesis: bytes = ZERO_HASH
    map_region: int = 256
    map_zone: int = 256
    zones: dict[Location, dict[OutPoint, UtxoEntry]] = field(default_factory=dict)
    spent: dict[OutPoint, bytes] = field(default_factory=dict)
    pending: dict[bytes, PendingTx] = field(default_factory=dict)
    status: dict[bytes, SettlementStatus] = field(default_factory=dict)
    tips: dict[tuple, bytes] = field(default_factory=dict)
    zone_height: dict[Location, int] = field(default_factory=dict)
    counters: dict[str, int] = field(default_factory=lambda: {
        "fee_pool": 0, "escrow": 0, "emitted": 0, "minted_extra": 0})
    applied: list[tuple[bytes, BlockLevel, _Journal]] = field(default_factory=list)

    def zone(self, loc: Location) -> dict[OutPoint, UtxoEntry]:
        return self.zones.setdefault(loc, {})

    def effective(self, loc: Location) -> Location:
        return Location(loc.region % self.map_region, loc.zone % self.map_zone)

    def tip(self, key: tuple) -> bytes:
        return self.tips.get(key, self.genesis)

    def find_utxo(self, op: OutPoint) -> tuple[Location, UtxoEntry] | None:
        for loc, utxos in self.zones.items():
            if op in utxos:
                return loc, utxos[op]
        return None

    def supply(self) -> int:
        """Coins in UTXOs, in flight between zones, in the fee pool and in escrow."""
        total = sum(e.amount for utxos in self.zones.values() for e in utxos.values())
        total += sum(o.amount for p in self.pending.values() for o in p.tx.outputs)
        return total + self.counters["fee_pool"] + self.counters["escrow"]

    def mint_genesis(self, outputs: Iterable[tuple[bytes, int, Location]]) -> list[OutPoint]:
        """Seed the ledger before any block is applied; counted as emission."""
        if self.applied:
            raise LedgerError("not-genesis", "genesis outputs after blocks were applied")
        ops = []
        for i, (owner, amount, loc) in enumerate(outputs):
            op = OutPoint(sha256d(b"genesis" + i.to_bytes(4, "little")), 0)
            eff = self.effective(loc)
            self.zone(eff)[op] = UtxoEntry(amount, owner, eff, loc)
            self.counters["emitted"] += amount
            ops.append(op)
        return ops

    def state_hash(self) -> bytes:
        leaves = []
        for loc in sorted(self.zones):
            for op in sorted(self.zones[loc]):
                e = self.zones[loc][op]
                leaves.append(sha256d(
                    op.txid + struct.pack("<HQBBBBQ", op.index, e.amount, loc.region,
                                          loc.zone, e.declared.region, e.declared.zone,
                                          e.mature_at) + e.owner))
        for txid in sorted(self.pending):
            leaves.append(sha256d(b"pending" + txid + self.pending[txid].origin_block))
        for op in sorted(self.spent):
            leaves.append(sha256d(b"spent" + op.txid + struct.pack("<H", op.index)))
        scalars = b"".join(struct.pack("<Q", self.counters[k]) for k in sorted(self.counters))
        leaves.append(sha256d(b"counters" + scalars))
        return merkle_root(leaves)

    def snapshot(self) -> str:
        """Sorted text dump: one ``region:zone txid:index amount owner declared`` line per UTXO."""
        lines = []
        for loc in sorted(self.zones):
            for op in sorted(self.zones[loc]):
                e = self.zones[loc][op]
                lines.append(f"{loc} {op.txid.hex()}:{op.index} {e.amount} "
                             f"{e.owner.hex()} {e.declared} {e.mature_at}\n")
        return "".join(lines)


def validate_tx(tx: Transaction, state: LedgerState, zone: Location,
                scheme: SignatureScheme = DEFAULT_SCHEME,
                spent_in_block: set[OutPoint] | None = None) -> Scope:
    """Check ``tx`` as the nodes mining ``zone`` would; returns its scope.

    Raises LedgerError with code unknown-input, double-spend, wrong-zone,
    bad-witness, negative-fee, immature-coinbase or out-of-range-destination.
    """
    if tx.location != zone:
        raise LedgerError("wrong-zone", f"tx located in {tx.location}, offered to {zone}")
    try:
        scope = compute_scope(tx, state.map_region, state.map_zone)
    except CoreError as exc:
        raise LedgerError("out-of-range-destination", str(exc)) from exc
    utxos = state.zones.get(zone, {})
    height = state.zone_height.get(zone, 0)
    txid = tx.txid
    if len(tx.witnesses) != len(tx.inputs):
        raise LedgerError("bad-witness", "one witness per input required")
    total_in = 0
    seen: set[OutPoint] = set()
    for op, witness in zip(tx.inputs, tx.witnesses):
        if op in seen or op in state.spent or (spent_in_block and op in spent_in_block):
            raise LedgerError("double-spend", f"{op.txid.hex()[:16]}:{op.index}")
        seen.add(op)
        entry = utxos.get(op)
        if entry is None:
            if state.find_utxo(op) is not None:
                raise LedgerError("wrong-zone", "input located in another zone")
            raise LedgerError("unknown-input", f"{op.txid.hex()[:16]}:{op.index}")
        if entry.mature_at > height:
            raise LedgerError("immature-coinbase")
        if not scheme.verify(entry.owner, txid, witness):
            raise LedgerError("bad-witness")
        total_in += entry.amount
    total_out = sum(o.amount for o in tx.outputs)
    if total_out > total_in or tx.fee != total_in - total_out:
        raise LedgerError("negative-fee", f"in={total_in} out={total_out} fee={tx.fee}")
    return scope


def _chain_keys(b: Block, level: BlockLevel) -> list[tuple[tuple, bytes]]:
    h = b.header
    keys = [(("zone", h.location_region, h.location_zone), h.parent_zone)]
    if level >= BlockLevel.REGION:
        keys.append((("region", h.location_region), h.parent_region))
    if level >= BlockLevel.PRIME:
        keys.append((("prime",), h.parent_prime))
    return keys


def _create_outputs(state: LedgerState, j: _Journal, tx: Transaction, txid: bytes) -> None:
    for i, out in enumerate(tx.outputs):
        loc = state.effective(out.destination)
        utxos = state.zones.get(loc)
        if utxos is None:
            j.set(state.zones, loc, {})
            utxos = state.zones[loc]
        j.set(utxos, OutPoint(txid, i), UtxoEntry(out.amount, out.owner_key, loc,
                                                   out.destination))


def apply_block(b: Block, level: BlockLevel, state: LedgerState,
                reward: RewardPayment | None = None,
                scheme: SignatureScheme = DEFAULT_SCHEME) -> None:
    """Apply ``b`` at ``level`` to all zone ledgers.

    Transactions located in the block's zone are validated and their inputs
    consumed. ZONAL outputs appear at once; higher-scope transactions stay
    locally consistent until a block of their level lists them in its
    region_txs / prime_txs set.
    """
    if level < BlockLevel.ZONE:
        raise LedgerError("scope-violation", "block does not clear the zone target")
    try:
        check_block_structure(b)
    except CoreError as exc:
        raise LedgerError("scope-violation", str(exc)) from exc
    if (b.header.map_region, b.header.map_zone) != (state.map_region, state.map_zone):
        raise LedgerError("map-mismatch")
    keys = _chain_keys(b, level)
    for key, parent in keys:
        if state.tip(key) != parent:
            raise LedgerError("inconsistent-parent", f"{key}")
    if level < BlockLevel.PRIME and reward is not None:
        raise LedgerError("scope-violation", "rewards are paid at PRIME blocks only")

    j = _Journal()
    zone = b.location
    bhash = b.hash
    spent_here: set[OutPoint] = set()
    try:
        for tx in b.all_txs():
            txid = tx.txid
            if txid in state.pending:
                continue  # carried upward from an earlier zone block
            if tx.location != zone:
                raise LedgerError("not-pending", "foreign tx never processed in its zone")
            if txid in state.status:
                raise LedgerError("double-spend", "tx already processed")
            scope = validate_tx(tx, state, zone, scheme, spent_here)
            for op in tx.inputs:
                spent_here.add(op)
                j.delete(state.zones[zone], op)
                j.set(state.spent, op, txid)
            j.set(state.counters, "fee_pool", state.counters["fee_pool"] + tx.fee)
            if scope == Scope.ZONAL:
                _create_outputs(state, j, tx, txid)
                j.set(state.status, txid, SettlementStatus(Status.SETTLED, bhash))
            else:
                j.set(state.pending, txid, PendingTx(tx, scope, bhash))
                j.set(state.status, txid, SettlementStatus(Status.LOCALLY_CONSISTENT))
        for settle_level, txs in ((BlockLevel.REGION, b.region_txs),
                                  (BlockLevel.PRIME, b.prime_txs)):
            if level < settle_level:
                continue
            for tx in txs:
                txid = tx.txid
                p = state.pending.get(txid)
                if p is None:
                    st = state.status.get(txid)
                    if st is not None and st.status is Status.SETTLED:
                        raise LedgerError("double-settlement", txid.hex()[:16])
                    raise LedgerError("not-pending", txid.hex()[:16])
                _create_outputs(state, j, tx, txid)
                j.delete(state.pending, txid)
                j.set(state.status, txid, SettlementStatus(Status.SETTLED, bhash))
        if reward is not None:
            _apply_reward(state, j, bhash, reward)
        height = state.zone_height.get(zone, 0)
        j.set(state.zone_height, zone, height + 1)
        for key, _ in keys:
            j.set(state.tips, key, bhash)
    except Exception:
        j.undo()
        raise
    state.applied.append((bhash, level, j))


def _apply_reward(state: LedgerState, j: _Journal, bhash: bytes, r: RewardPayment) -> None:
    c = state.counters
    paid = sum(amount for _, amount, _ in r.payouts)
    if r.fees_used > c["fee_pool"]:
        raise LedgerError("reward-mismatch", "fees used exceed the fee pool")
    if paid != r.fees_used + r.emission + r.minted_extra - r.escrow_delta:
        raise LedgerError("reward-mismatch", "payouts do not balance")
    if c["escrow"] + r.escrow_delta < 0:
        raise LedgerError("reward-mismatch", "escrow would go negative")
    j.set(c, "fee_pool", c["fee_pool"] - r.fees_used)
    j.set(c, "escrow", c["escrow"] + r.escrow_delta)
    j.set(c, "emitted", c["emitted"] + r.emission)
    j.set(c, "minted_extra", c["minted_extra"] + r.minted_extra)
    coinbase = sha256d(b"coinbase" + bhash)
    for i, (owner, amount, loc) in enumerate(r.payouts):
        eff = state.effective(loc)
        if eff not in state.zones:
            j.set(state.zones, eff, {})
        mature = state.zone_height.get(eff, 0) + COINBASE_MATURITY
        j.set(state.zones[eff], OutPoint(coinbase, i),
              UtxoEntry(amount, owner, eff, loc, mature))


def revert_block(b: Block, state: LedgerState) -> None:
    if not state.applied or state.applied[-1][0] != b.hash:
        raise LedgerError("not-tip")
    _, _, j = state.applied.pop()
    j.undo()


def settlement_status(state: LedgerState, txid: bytes) -> SettlementStatus:
    return state.status.get(txid, SettlementStatus(Status.PENDING))


# -- storage accounting -------------------------------------------------------

@dataclass(frozen=True)
class NodeRole:
    """``location=None`` is a full node; otherwise a sharded zone node."""

    location: Location | None = None

    @property
    def is_full(self) -> bool:
        return self.location is None


def _touches(tx: Transaction, loc: Location, map_region: int, map_zone: int) -> bool:
    if tx.location == loc:
        return True
    return any(Location(o.destination.region % map_region, o.destination.zone % map_zone)
               == loc for o in tx.outputs)


def storage_footprint(role: NodeRole, history: Sequence[tuple[Block, BlockLevel]],
                      tx_size: int = TX_ACCOUNTING_SIZE) -> dict[BlockLevel, int]:
    """Bytes stored per level for ``role`` over a canonical ``history``.

    A full node keeps every block. A zone node keeps its own zone's blocks in
    full, only headers of other zones in its region and of region blocks
    elsewhere, and from its region's region blocks and all PRIME blocks the
    linked hashes plus the transactions that start or end in its zone.
    """
    out = {BlockLevel.ZONE: 0, BlockLevel.REGION: 0, BlockLevel.PRIME: 0}
    for b, level in history:
        h = b.header
        loc = b.location
        own_zone_txs = len(b.zone_txs) + sum(
            1 for t in b.region_txs + b.prime_txs if t.location == loc)
        zone_full = HEADER_SIZE + tx_size * own_zone_txs
        region_full = tx_size * len(b.region_txs) + HASH_SIZE * len(b.linked_zone_block_hashes)
        prime_full = tx_size * len(b.prime_txs) + HASH_SIZE * len(b.linked_region_block_hashes)
        if role.is_full:
            out[BlockLevel.ZONE] += zone_full
            if level >= BlockLevel.REGION:
                out[BlockLevel.REGION] += region_full
            if level >= BlockLevel.PRIME:
                out[BlockLevel.PRIME] += prime_full
            continue
        me = role.location
        same_region = loc.region == me.region
        if loc == me:
            out[BlockLevel.ZONE] += zone_full
        elif same_region or level >= BlockLevel.REGION:
            out[BlockLevel.ZONE] += HEADER_SIZE
        if level >= BlockLevel.REGION and same_region:
            mine = sum(1 for t in b.region_txs if _touches(t, me, h.map_region, h.map_zone))
            out[BlockLevel.REGION] += (tx_size * mine
                                       + HASH_SIZE * len(b.linked_zone_block_hashes))
        if level >= BlockLevel.PRIME:
            mine = sum(1 for t in b.prime_txs if _touches(t, me, h.map_region, h.map_zone))
            out[BlockLevel.PRIME] += (tx_size * mine
                                      + HASH_SIZE * len(b.linked_region_block_hashes))
    return out
