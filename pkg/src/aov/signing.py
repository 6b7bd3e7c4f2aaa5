"""Deterministic Schnorr signatures over the wallet curve.

A signature carries the signer's compressed public key so a contract can
check it against a registered wallet address.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import lru_cache

from .ec import SECP256K1, CurveParams


def _h(*parts: bytes) -> int:
    return int.from_bytes(hashlib.sha256(b"".join(parts)).digest(), "big")


@dataclass(frozen=True)
class Signature:
    pubkey: bytes
    r: bytes
    s: int

    def to_hex(self) -> str:
        return (self.pubkey + self.r + self.s.to_bytes(32, "big")).hex()

    @classmethod
    def from_hex(cls, text: str) -> "Signature":
        raw = bytes.fromhex(text)
        if len(raw) < 64 or (len(raw) - 32) % 2:
            raise ValueError("malformed signature")
        half = (len(raw) - 32) // 2
        return cls(raw[:half], raw[half:2 * half], int.from_bytes(raw[2 * half:], "big"))


@lru_cache(maxsize=4096)
def _public(sk: int, curve: CurveParams) -> bytes:
    # one signer usually signs many messages (the EA above all)
    return curve.compress(curve.mul_base(sk))


def sign(sk: int, msg: bytes, curve: CurveParams = SECP256K1) -> Signature:
    q = curve.q
    sk_bytes = sk.to_bytes(curve.scalar_bytes, "big")
    k = _h(b"nonce", sk_bytes, msg) % q or 1
    pub = _public(sk, curve)
    R = curve.compress(curve.mul_base(k))
    e = _h(R, pub, msg) % q
    return Signature(pub, R, (k + e * sk) % q)


def verify(sig: Signature, msg: bytes, curve: CurveParams = SECP256K1) -> bool:
    try:
        P = curve.decompress(sig.pubkey)
    except ValueError:
        return False
    if not 0 <= sig.s < curve.q or len(sig.r) != 1 + curve.field_bytes:
        return False
    e = _h(sig.r, sig.pubkey, msg) % curve.q
    # R = sG - eP, compared in its canonical encoding
    R = curve.add(curve.mul_base(sig.s), curve.mul(curve.q - e, P))
    return R is not None and curve.compress(R) == sig.r
