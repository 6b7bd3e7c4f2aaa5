"""Bitcoin block headers: consensus encoding, compact targets and proof-of-work."""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, replace

HEADER_SIZE = 80
MAX_TARGET = (1 << 256) - 1

_HEADER_STRUCT = struct.Struct("<i32s32sIII")


class NBitsError(ValueError):
    pass


class NegativeTarget(NBitsError):
    pass


class OverflowTarget(NBitsError):
    pass


class Exhausted(RuntimeError):
    pass


@dataclass(frozen=True)
class Target:
    value: int

    def __post_init__(self):
        if not 0 < self.value <= MAX_TARGET:
            raise ValueError(f"target out of range: {self.value:#x}")

    @property
    def difficulty_bits(self) -> int:
        """Leading zero bits of the 256-bit target."""
        return 256 - self.value.bit_length()


@dataclass(frozen=True)
class BlockHeader:
    version: int
    prev_hash: bytes
    merkle_root: bytes
    timestamp: int
    nbits: int
    nonce: int

    def __post_init__(self):
        if len(self.prev_hash) != 32 or len(self.merkle_root) != 32:
            raise ValueError("prev_hash and merkle_root must be 32 bytes")
        if not -(1 << 31) <= self.version < (1 << 31):
            raise ValueError("version must fit in a signed 32-bit integer")
        for name in ("timestamp", "nbits", "nonce"):
            if not 0 <= getattr(self, name) < (1 << 32):
                raise ValueError(f"{name} must fit in an unsigned 32-bit integer")

    def encode(self) -> bytes:
        return _HEADER_STRUCT.pack(
            self.version, self.prev_hash, self.merkle_root,
            self.timestamp, self.nbits, self.nonce,
        )

    @classmethod
    def decode(cls, raw: bytes) -> "BlockHeader":
        if len(raw) != HEADER_SIZE:
            raise ValueError(f"header must be {HEADER_SIZE} bytes, got {len(raw)}")
        return cls(*_HEADER_STRUCT.unpack(raw))

    def hex(self) -> str:
        return self.encode().hex()

    @classmethod
    def from_hex(cls, text: str) -> "BlockHeader":
        return cls.decode(bytes.fromhex(text.strip()))

    def with_nonce(self, nonce: int) -> "BlockHeader":
        return replace(self, nonce=nonce)


def decode_nbits(nbits: int) -> Target:
    if not 0 <= nbits < (1 << 32):
        raise NBitsError(f"nbits must be a 32-bit value: {nbits:#x}")
    exponent = nbits >> 24
    mantissa = nbits & 0x007FFFFF
    if nbits & 0x00800000:
        raise NegativeTarget(f"sign bit set in nbits {nbits:#010x}")
    if exponent <= 3:
        value = mantissa >> (8 * (3 - exponent))
    else:
        value = mantissa << (8 * (exponent - 3))
    if value > MAX_TARGET:
        raise OverflowTarget(f"nbits {nbits:#010x} exceeds 256 bits")
    if value == 0:
        raise NBitsError(f"nbits {nbits:#010x} encodes a zero target")
    return Target(value)


def encode_nbits(target: Target | int) -> int:
    """Compact encoding of a target (lossy: keeps the top 3 significant bytes)."""
    value = target.value if isinstance(target, Target) else target
    size = (value.bit_length() + 7) // 8
    if size <= 3:
        mantissa = value << (8 * (3 - size))
    else:
        mantissa = value >> (8 * (size - 3))
    if mantissa & 0x00800000:
        mantissa >>= 8
        size += 1
    return (size << 24) | mantissa


def header_digest(h: BlockHeader) -> bytes:
    return hashlib.sha256(hashlib.sha256(h.encode()).digest()).digest()


def pow_hash(h: BlockHeader) -> int:
    return int.from_bytes(header_digest(h), "little")


def block_hash_hex(h: BlockHeader) -> str:
    """Display form used by explorers (byte-reversed digest)."""
    return header_digest(h)[::-1].hex()


def check_pow(h: BlockHeader, t: Target | int) -> bool:
    value = t.value if isinstance(t, Target) else t
    return pow_hash(h) < value


def mine_test_header(template: BlockHeader, t: Target | int, max_iters: int) -> BlockHeader:
    # nonce search starts at the template's nonce and wraps at 2^32
    h = template
    for i in range(max_iters):
        if check_pow(h, t):
            return h
        h = h.with_nonce((template.nonce + i + 1) & 0xFFFFFFFF)
    raise Exhausted(f"no valid nonce within {max_iters} iterations")


def read_header_file(path) -> list[BlockHeader]:
    headers = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if len(line) != 2 * HEADER_SIZE:
                raise ValueError(f"{path}:{lineno}: expected 160 hex characters, got {len(line)}")
            headers.append(BlockHeader.from_hex(line))
    return headers


def write_header_file(path, headers) -> None:
    with open(path, "w") as fh:
        for h in headers:
            fh.write(h.hex() + "\n")


GENESIS_HEADER_HEX = (
    "01000000"
    + "00" * 32
    + "3ba3edfd7a7b12b27ac72c3e67768f617fc81bc3888a51323a9fb8aa4b1e5e4a"
    + "29ab5f49"
    + "ffff001d"
    + "1dac2b7c"
)
GENESIS_HASH_HEX = "000000000019d6689c085ae165831e934ff763ae46a2a6c172b3f1b60a8ce26f"
