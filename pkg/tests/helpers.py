"""Small real-PoW chain builder shared by the ledger, hierarchy and acceptance tests."""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from blockreduce.core import (Block, BlockHeader, BlockLevel, Location, OutPoint, Scope,
                              Transaction, TxOutput, sign_transaction, DEFAULT_SCHEME)
from blockreduce.hierarchy import ChainLedger, ChainView, assemble_block, mine_block
from blockreduce.ledger import LedgerState
from blockreduce.pow import DifficultyTriple
from blockreduce.rewards import RewardMode, RewardParams

# cheap targets: about 1 in 2 hashes is a block, 1 in 64 a PRIME block
TRIPLE = DifficultyTriple(64, 8, 2)
BITS = TRIPLE.bits()
LOCS = [Location(0, 0), Location(0, 1), Location(1, 0), Location(1, 1)]
SECRETS = [bytes([i]) * 8 for i in range(8)]
OWNERS = {DEFAULT_SCHEME.public_key(s): s for s in SECRETS}
OWNER_KEYS = sorted(OWNERS)
REWARD = RewardParams(0, 0.5, 64, 8, 2, RewardMode.NORMALIZED)


def genesis_block() -> Block:
    b = BlockHeader(bits_prime=BITS[0], bits_region=BITS[1], bits_zone=BITS[2])
    return Block(b)


def genesis_state(g: Block, per_zone: int = 6, amount: int = 1000) -> LedgerState:
    st = LedgerState(genesis=g.hash)
    outs = [(OWNER_KEYS[i % len(OWNER_KEYS)], amount, loc)
            for loc in LOCS for i in range(per_zone)]
    st.mint_genesis(outs)
    return st


def new_ledger(g: Block, rewards: bool = True) -> ChainLedger:
    return ChainLedger(ChainView(g), genesis_state(g),
                       REWARD if rewards else None, (lambda h: 50) if rewards else (lambda h: 0))


def make_tx(state: LedgerState, loc: Location, scope: Scope, rng: random.Random,
            avoid: set | None = None) -> Transaction | None:
    """Spend one mature UTXO in ``loc`` toward a destination of the given scope."""
    avoid = avoid or set()
    height = state.zone_height.get(loc, 0)
    utxos = [(op, e) for op, e in sorted(state.zones.get(loc, {}).items())
             if op not in avoid and e.amount >= 2 and e.mature_at <= height and e.owner in OWNERS]
    if not utxos:
        return None
    op, e = rng.choice(utxos)
    if scope is Scope.ZONAL:
        dest = loc
    elif scope is Scope.REGIONAL:
        dest = Location(loc.region, 1 - loc.zone)
    else:
        dest = Location(1 - loc.region, rng.randrange(2))
    out = TxOutput(e.amount - 1, dest, rng.choice(OWNER_KEYS))
    tx = Transaction(loc, (op,), (out,), 1)
    return sign_transaction(tx, [OWNERS[e.owner]])


@dataclass
class Miner:
    """A node with its own view and ledger that mines real (cheap) blocks."""

    ledger: ChainLedger
    rng: random.Random
    clock: int = 0
    found: list[tuple[Block, BlockLevel]] = field(default_factory=list)

    def mine(self, loc: Location, level: BlockLevel | None = None, ntx: int = 2) -> Block:
        st = self.ledger.state
        txs, used = [], set()
        for _ in range(ntx):
            tx = make_tx(st, loc, self.rng.choice(list(Scope)), self.rng, used)
            if tx is not None:
                txs.append(tx)
                used.update(tx.inputs)
        self.clock += 1
        tmpl = assemble_block(self.ledger.view, loc, txs, BITS, unix_time=self.clock,
                              coinbase_key=self.rng.choice(OWNER_KEYS))
        # vary the starting nonce so two miners never produce the same header
        tmpl = type(tmpl)(tmpl.header.with_nonce(self.rng.getrandbits(40)), *_body(tmpl))
        b, lvl = mine_block(tmpl, want=level)
        self.ledger.extend(b, lvl)
        self.found.append((b, lvl))
        return b


def _body(b: Block):
    return (b.zone_txs, b.region_txs, b.prime_txs, b.linked_zone_block_hashes,
            b.linked_region_block_hashes, b.coinbase_key)


def random_level(rng: random.Random) -> BlockLevel:
    u = rng.random()
    if u < 0.1:
        return BlockLevel.PRIME
    if u < 0.35:
        return BlockLevel.REGION
    return BlockLevel.ZONE




def reorg_run(seed: int, blocks_each: int = 20):
    """Two miners build competing histories; an observer receives both in a
    shuffled order. Returns (observer, deepest revert, mismatches)."""
    g = genesis_block()
    rng = random.Random(seed)
    a = Miner(new_ledger(g), random.Random(2 * seed + 1))
    b = Miner(new_ledger(g), random.Random(2 * seed + 2))
    for _ in range(blocks_each):
        a.mine(rng.choice(LOCS), random_level(a.rng))
    for _ in range(blocks_each + rng.randrange(4)):
        b.mine(rng.choice(LOCS), random_level(b.rng))
    blocks = a.found + b.found
    if seed % 2:
        rng.shuffle(blocks)
    obs = new_ledger(g)
    deepest, bad = 0, 0
    for blk, lvl in blocks:
        before = list(obs.applied)
        obs.extend(blk, lvl)
        common = 0
        while common < min(len(before), len(obs.applied)) and before[common] == obs.applied[common]:
            common += 1
        deepest = max(deepest, len(before) - common)
        bad += obs.state.state_hash() != obs.replay().state_hash()
    return obs, deepest, bad
