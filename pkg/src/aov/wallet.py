"""Per-epoch wallet keys shared between a participant and the election authority.

The participant holds ``sk0``; the EA holds only ``pk0`` plus the shared HMAC
key ``hk`` and PRNG parameters ``(g, p)``. For every voting iteration ``e``
both sides derive the same public key

    PK_e = PK_0 + HMAC_hk(g^e mod p) * BP

while only the participant can compute the matching ``SK_e``.
"""

from __future__ import annotations

import hashlib
import hmac
import random
from dataclasses import dataclass

from .ec import CURVES, SECP256K1, CurveParams, Point

MAX_ITERATION = (1 << 128) - 1
ADDRESS_BYTES = 20


class IterationOutOfRange(ValueError):
    pass


class IdentityPoint(ValueError):
    pass


def _check_e(e: int) -> None:
    if not 1 <= e <= MAX_ITERATION:
        raise IterationOutOfRange(f"iteration {e} outside [1, 2^128 - 1]")


def prng_output(g: int, p: int, e: int) -> bytes:
    return pow(g, e, p).to_bytes((p.bit_length() + 7) // 8, "big")


def derive_offset(hk: bytes, g: int, p: int, e: int, q: int, attempt: int = 0) -> int:
    _check_e(e)
    msg = prng_output(g, p, e)
    if attempt:
        # retry tag, only reached when SK_e would be zero
        msg += attempt.to_bytes(4, "big")
    return int.from_bytes(hmac.new(hk, msg, hashlib.sha256).digest(), "big") % q


@dataclass(frozen=True)
class WalletChain:
    sk0: int
    hk: bytes
    g: int
    p: int
    curve: CurveParams = SECP256K1

    def __post_init__(self):
        if not 1 <= self.sk0 < self.curve.q:
            raise ValueError("sk0 must be in [1, q-1]")
        if len(self.hk) != 32:
            raise ValueError("hk must be 32 bytes")
        if not 1 < self.g < self.p:
            raise ValueError("g must lie in [2, p-1]")

    @property
    def pk0(self) -> tuple[int, int]:
        return self.curve.mul_base(self.sk0)

    def sync_record(self) -> "SyncRecord":
        pk0 = self.pk0
        return SyncRecord(pk0=pk0, hk=self.hk, g=self.g, p=self.p,
                          w0=wallet_address(pk0, self.curve), curve=self.curve)

    def to_dict(self) -> dict:
        return {"sk0": hex(self.sk0), "hk": self.hk.hex(), "g": str(self.g),
                "p": str(self.p), "curve": self.curve.name}

    @classmethod
    def from_dict(cls, d: dict) -> "WalletChain":
        return cls(sk0=int(d["sk0"], 16), hk=bytes.fromhex(d["hk"]), g=int(d["g"]),
                   p=int(d["p"]), curve=CURVES[d.get("curve", SECP256K1.name)])


@dataclass(frozen=True)
class SyncRecord:
    """What the EA stores at registration. No scalar secrets."""
    pk0: tuple[int, int]
    hk: bytes
    g: int
    p: int
    w0: bytes
    curve: CurveParams = SECP256K1

    def to_dict(self) -> dict:
        return {"pk0": self.curve.compress(self.pk0).hex(), "hk": self.hk.hex(),
                "g": str(self.g), "p": str(self.p), "curve": self.curve.name}

    @classmethod
    def from_dict(cls, d: dict) -> "SyncRecord":
        curve = CURVES[d.get("curve", SECP256K1.name)]
        pk0 = curve.decompress(bytes.fromhex(d["pk0"]))
        if len(d["hk"]) != 64:
            raise ValueError("hk must be 32 bytes")
        return cls(pk0=pk0, hk=bytes.fromhex(d["hk"]), g=int(d["g"]), p=int(d["p"]),
                   w0=wallet_address(pk0, curve), curve=curve)


def new_chain(rng: random.Random, curve: CurveParams = SECP256K1,
              prng_prime: int | None = None) -> WalletChain:
    p = prng_prime or DEFAULT_PRNG_PRIME
    return WalletChain(
        sk0=rng.randrange(1, curve.q),
        hk=rng.randbytes(32),
        g=rng.randrange(2, p - 1),
        p=p,
        curve=curve,
    )


def derive_sk(chain: WalletChain, e: int, *, offset: int | None = None) -> int:
    q = chain.curve.q
    if offset is not None:
        _check_e(e)
        return (chain.sk0 + offset) % q
    attempt = 0
    while True:
        sk = (chain.sk0 + derive_offset(chain.hk, chain.g, chain.p, e, q, attempt)) % q
        if sk:
            return sk
        attempt += 1


def derive_pk_participant(chain: WalletChain, e: int) -> tuple[int, int]:
    return chain.curve.mul_base(derive_sk(chain, e))


def derive_pk_ea(rec: SyncRecord, e: int, *, offset: int | None = None) -> Point:
    curve = rec.curve
    if offset is not None:
        _check_e(e)
        return curve.add(rec.pk0, curve.mul_base(offset))
    attempt = 0
    while True:
        off = derive_offset(rec.hk, rec.g, rec.p, e, curve.q, attempt)
        pk = curve.add(rec.pk0, curve.mul_base(off))
        if pk is not None:
            return pk
        attempt += 1


def wallet_address(pk: Point, curve: CurveParams = SECP256K1) -> bytes:
    if pk is None:
        raise IdentityPoint("the identity point has no address")
    return hashlib.sha256(curve.compress(pk)).digest()[:ADDRESS_BYTES]


# 2^61 - 1, a Mersenne prime; comfortably above the 2^31 floor for PRNG fields
DEFAULT_PRNG_PRIME = (1 << 61) - 1
