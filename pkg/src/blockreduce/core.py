"""Domain types, canonical encodings and hashing shared by the whole package.

Header wire format (272 bytes, all integers little-endian)::

    offset size field
         0    4 version              u32
         4   32 parent_prime
        36   32 parent_region
        68   32 parent_zone
       100   32 merkle_root_prime
       132   32 merkle_root_region
       164   32 merkle_root_zone
       196   32 merkle_root_interlink
       228    4 unix_time            u32
       232    4 bits_prime           u32 (compact target)
       236    4 bits_region          u32
       240    4 bits_zone            u32
       244    8 fees_region          u64
       252    8 fees_zone            u64
       260    1 map_region           u8  (a count of 256 is encoded as 0)
       261    1 map_zone             u8  (same)
       262    1 location_region      u8
       263    1 location_zone        u8
       264    8 nonce                u64

Transaction wire format::

    location      region u8, zone u8
    inputs        u16 count, then per input: txid[32], index u16
    outputs       u16 count, then per output: amount u64, dest region u8,
                  dest zone u8, owner_key[32]
    fee           u64
    witnesses     u16 count, then per witness: u16 length, bytes

The txid is the double SHA-256 of the encoding with the witness section
replaced by a zero count.
"""

from __future__ import annotations

import enum
import hashlib
import struct
from dataclasses import dataclass, field, replace
from typing import Iterable, Protocol, Sequence

HASH_SIZE = 32
ZERO_HASH = bytes(HASH_SIZE)
HEADER_SIZE = 272
TX_ACCOUNTING_SIZE = 100

_HEADER_STRUCT = struct.Struct("<I32s32s32s32s32s32s32sIIIIQQBBBBQ")
assert _HEADER_STRUCT.size == HEADER_SIZE


class CoreError(ValueError):
    """Raised for malformed domain values."""


def sha256d(data: bytes) -> bytes:
    return hashlib.sha256(hashlib.sha256(data).digest()).digest()


@dataclass(frozen=True, slots=True, order=True)
class Location:
    region: int
    zone: int

    def __post_init__(self):
        if not (0 <= self.region <= 255 and 0 <= self.zone <= 255):
            raise CoreError(f"location out of byte range: {self.region},{self.zone}")

    def __str__(self):
        return f"{self.region}:{self.zone}"


class Scope(enum.IntEnum):
    ZONAL = 0
    REGIONAL = 1
    PRIME = 2


class BlockLevel(enum.IntEnum):
    NONE = 0
    ZONE = 1
    REGION = 2
    PRIME = 3


def scope_to_level(scope: Scope) -> BlockLevel:
    """Smallest block level that settles a transaction of ``scope``."""
    return BlockLevel(int(scope) + 1)


def _check_hash(name: str, value: bytes) -> None:
    if not isinstance(value, (bytes, bytearray)) or len(value) != HASH_SIZE:
        raise CoreError(f"{name} must be {HASH_SIZE} bytes")


def _check_uint(name: str, value: int, bits: int) -> None:
    if not (0 <= value < (1 << bits)):
        raise CoreError(f"{name}={value} does not fit in u{bits}")


@dataclass(frozen=True, slots=True)
class BlockHeader:
    version: int = 0
    parent_prime: bytes = ZERO_HASH
    parent_region: bytes = ZERO_HASH
    parent_zone: bytes = ZERO_HASH
    merkle_root_prime: bytes = ZERO_HASH
    merkle_root_region: bytes = ZERO_HASH
    merkle_root_zone: bytes = ZERO_HASH
    merkle_root_interlink: bytes = ZERO_HASH
    unix_time: int = 0
    bits_prime: int = 0
    bits_region: int = 0
    bits_zone: int = 0
    fees_region: int = 0
    fees_zone: int = 0
    map_region: int = 256
    map_zone: int = 256
    location_region: int = 0
    location_zone: int = 0
    nonce: int = 0

    def __post_init__(self):
        for name in ("parent_prime", "parent_region", "parent_zone",
                     "merkle_root_prime", "merkle_root_region",
                     "merkle_root_zone", "merkle_root_interlink"):
            _check_hash(name, getattr(self, name))
        for name, bits in (("version", 32), ("unix_time", 32), ("bits_prime", 32),
                           ("bits_region", 32), ("bits_zone", 32), ("fees_region", 64),
                           ("fees_zone", 64), ("location_region", 8),
                           ("location_zone", 8), ("nonce", 64)):
            _check_uint(name, getattr(self, name), bits)
        for name in ("map_region", "map_zone"):
            if not 1 <= getattr(self, name) <= 256:
                raise CoreError(f"{name} must be in [1, 256]")
        if self.location_region >= self.map_region or self.location_zone >= self.map_zone:
            raise CoreError("header location outside the map range")

    @property
    def location(self) -> Location:
        return Location(self.location_region, self.location_zone)

    def with_nonce(self, nonce: int) -> "BlockHeader":
        return replace(self, nonce=nonce)


def serialize_header(h: BlockHeader) -> bytes:
    return _HEADER_STRUCT.pack(
        h.version, h.parent_prime, h.parent_region, h.parent_zone,
        h.merkle_root_prime, h.merkle_root_region, h.merkle_root_zone,
        h.merkle_root_interlink, h.unix_time, h.bits_prime, h.bits_region,
        h.bits_zone, h.fees_region, h.fees_zone, h.map_region & 0xFF,
        h.map_zone & 0xFF, h.location_region, h.location_zone, h.nonce,
    )


def deserialize_header(data: bytes) -> BlockHeader:
    if len(data) != HEADER_SIZE:
        raise CoreError(f"header must be {HEADER_SIZE} bytes, got {len(data)}")
    f = list(_HEADER_STRUCT.unpack(data))
    f[14] = f[14] or 256
    f[15] = f[15] or 256
    return BlockHeader(*f)


def hash_header(h: BlockHeader) -> bytes:
    return sha256d(serialize_header(h))


def merkle_root(items: Sequence[bytes]) -> bytes:
    """Binary merkle root with the duplicate-last rule for odd layers.

    A single leaf is paired with itself, so ``merkle_root([h]) == sha256d(h + h)``.
    """
    if not items:
        return ZERO_HASH
    layer = list(items)
    while True:
        if len(layer) % 2:
            layer.append(layer[-1])
        layer = [sha256d(layer[i] + layer[i + 1]) for i in range(0, len(layer), 2)]
        if len(layer) == 1:
            return layer[0]


# -- transactions -----------------------------------------------------------

@dataclass(frozen=True, slots=True, order=True)
class OutPoint:
    txid: bytes
    index: int

    def __post_init__(self):
        _check_hash("txid", self.txid)
        _check_uint("index", self.index, 16)


@dataclass(frozen=True, slots=True)
class TxOutput:
    amount: int
    destination: Location
    owner_key: bytes

    def __post_init__(self):
        _check_uint("amount", self.amount, 64)
        _check_hash("owner_key", self.owner_key)


@dataclass(frozen=True, slots=True)
class Transaction:
    location: Location
    inputs: tuple[OutPoint, ...]
    outputs: tuple[TxOutput, ...]
    fee: int = 0
    witnesses: tuple[bytes, ...] = ()

    def __post_init__(self):
        _check_uint("fee", self.fee, 64)
        if len(self.inputs) > 0xFFFF or len(self.outputs) > 0xFFFF:
            raise CoreError("too many inputs or outputs")

    @property
    def txid(self) -> bytes:
        return sha256d(encode_transaction(self, include_witness=False))

    def outpoint(self, index: int) -> OutPoint:
        return OutPoint(self.txid, index)


def encode_transaction(tx: Transaction, include_witness: bool = True) -> bytes:
    parts = [bytes((tx.location.region, tx.location.zone)),
             struct.pack("<H", len(tx.inputs))]
    for op in tx.inputs:
        parts.append(op.txid + struct.pack("<H", op.index))
    parts.append(struct.pack("<H", len(tx.outputs)))
    for out in tx.outputs:
        parts.append(struct.pack("<QBB", out.amount, out.destination.region,
                                 out.destination.zone) + out.owner_key)
    parts.append(struct.pack("<Q", tx.fee))
    witnesses = tx.witnesses if include_witness else ()
    parts.append(struct.pack("<H", len(witnesses)))
    for w in witnesses:
        parts.append(struct.pack("<H", len(w)) + w)
    return b"".join(parts)


def decode_transaction(data: bytes) -> Transaction:
    try:
        pos = 0
        loc = Location(data[0], data[1])
        pos = 2
        (n_in,) = struct.unpack_from("<H", data, pos)
        pos += 2
        inputs = []
        for _ in range(n_in):
            txid = bytes(data[pos:pos + 32])
            (index,) = struct.unpack_from("<H", data, pos + 32)
            inputs.append(OutPoint(txid, index))
            pos += 34
        (n_out,) = struct.unpack_from("<H", data, pos)
        pos += 2
        outputs = []
        for _ in range(n_out):
            amount, r, z = struct.unpack_from("<QBB", data, pos)
            key = bytes(data[pos + 10:pos + 42])
            outputs.append(TxOutput(amount, Location(r, z), key))
            pos += 42
        (fee,) = struct.unpack_from("<Q", data, pos)
        pos += 8
        (n_w,) = struct.unpack_from("<H", data, pos)
        pos += 2
        witnesses = []
        for _ in range(n_w):
            (length,) = struct.unpack_from("<H", data, pos)
            witnesses.append(bytes(data[pos + 2:pos + 2 + length]))
            if len(witnesses[-1]) != length:
                raise CoreError("truncated witness")
            pos += 2 + length
    except (struct.error, IndexError) as exc:
        raise CoreError("truncated transaction") from exc
    if pos != len(data):
        raise CoreError("trailing bytes after transaction")
    return Transaction(loc, tuple(inputs), tuple(outputs), fee, tuple(witnesses))


def compute_scope(tx: Transaction, map_region: int = 256, map_zone: int = 256) -> Scope:
    """Scope of ``tx`` given the destinations after folding into the map range.

    Raises CoreError("malformed-location") if the origin zone is not a valid
    effective location for the map.
    """
    loc = tx.location
    if loc.region >= map_region or loc.zone >= map_zone:
        raise CoreError("malformed-location")
    scope = Scope.ZONAL
    for out in tx.outputs:
        dest = out.destination
        region, zone = dest.region % map_region, dest.zone % map_zone
        if region != loc.region:
            return Scope.PRIME
        if zone != loc.zone:
            scope = Scope.REGIONAL
    return scope


# -- signatures ---------------------------------------------------------------

class SignatureScheme(Protocol):
    def public_key(self, secret: bytes) -> bytes: ...

    def sign(self, secret: bytes, message: bytes) -> bytes: ...

    def verify(self, owner_key: bytes, message: bytes, witness: bytes) -> bool: ...


class KeyedHashStub:
    """Keyed-hash stand-in for signatures.

    The witness reveals the secret, so this protects nothing; it only gives
    the ledger an ownership check with the right shape.
    """

    def public_key(self, secret: bytes) -> bytes:
        return hashlib.sha256(b"pub" + secret).digest()

    def sign(self, secret: bytes, message: bytes) -> bytes:
        return secret + hashlib.sha256(secret + message).digest()

    def verify(self, owner_key: bytes, message: bytes, witness: bytes) -> bool:
        if len(witness) < HASH_SIZE:
            return False
        secret, mac = witness[:-HASH_SIZE], witness[-HASH_SIZE:]
        return (self.public_key(secret) == owner_key
                and hashlib.sha256(secret + message).digest() == mac)


DEFAULT_SCHEME = KeyedHashStub()


def sign_transaction(tx: Transaction, secrets: Iterable[bytes],
                     scheme: SignatureScheme = DEFAULT_SCHEME) -> Transaction:
    """Return ``tx`` with one witness per input, signed over its txid."""
    txid = tx.txid
    return replace(tx, witnesses=tuple(scheme.sign(s, txid) for s in secrets))


# -- blocks -------------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class Block:
    header: BlockHeader
    zone_txs: tuple[Transaction, ...] = ()
    region_txs: tuple[Transaction, ...] = ()
    prime_txs: tuple[Transaction, ...] = ()
    linked_zone_block_hashes: tuple[bytes, ...] = ()
    linked_region_block_hashes: tuple[bytes, ...] = ()
    coinbase_key: bytes = ZERO_HASH
    _hash: bytes = field(default=b"", compare=False, repr=False)

    @property
    def hash(self) -> bytes:
        if not self._hash:
            object.__setattr__(self, "_hash", hash_header(self.header))
        return self._hash

    @property
    def location(self) -> Location:
        return self.header.location

    def all_txs(self) -> tuple[Transaction, ...]:
        return self.zone_txs + self.region_txs + self.prime_txs

    def accounting_size(self, tx_size: int = TX_ACCOUNTING_SIZE) -> int:
        n_links = len(self.linked_zone_block_hashes) + len(self.linked_region_block_hashes)
        return HEADER_SIZE + tx_size * len(self.all_txs()) + HASH_SIZE * n_links


def tx_merkle_roots(zone_txs, region_txs, prime_txs) -> tuple[bytes, bytes, bytes]:
    return (merkle_root([t.txid for t in prime_txs]),
            merkle_root([t.txid for t in region_txs]),
            merkle_root([t.txid for t in zone_txs]))


def check_block_structure(b: Block) -> None:
    """Merkle roots match the tx sets and each tx sits in the set of its scope."""
    h = b.header
    roots = tx_merkle_roots(b.zone_txs, b.region_txs, b.prime_txs)
    if roots != (h.merkle_root_prime, h.merkle_root_region, h.merkle_root_zone):
        raise CoreError("merkle root mismatch")
    for txs, scope in ((b.zone_txs, Scope.ZONAL), (b.region_txs, Scope.REGIONAL),
                       (b.prime_txs, Scope.PRIME)):
        for tx in txs:
            if compute_scope(tx, h.map_region, h.map_zone) != scope:
                raise CoreError("scope-violation")
            if scope == Scope.ZONAL and tx.location != h.location:
                raise CoreError("scope-violation")
            if scope == Scope.REGIONAL and tx.location.region != h.location_region:
                raise CoreError("scope-violation")


def compute_interlink_root(view) -> bytes:
    """Root over the latest PRIME, region and zone block hashes seen by the miner.

    ``view`` needs ``latest_hashes()`` returning (prime, region, zone) tip
    hashes; this only fills the header field, no proofs are built from it.
    """
    prime, region, zone = view.latest_hashes()
    return merkle_root([prime, region, zone])
