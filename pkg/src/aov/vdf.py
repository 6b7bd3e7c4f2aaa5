"""Wesolowski VDF over an RSA group.

eval() performs exactly ``tl`` sequential squarings; verify() costs two
exponentiations with exponents below the ``prime_bits``-bit challenge, so its
work does not grow with ``tl``.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
from dataclasses import dataclass

from .primes import is_probable_prime, random_prime


class InconsistentInput(ValueError):
    pass


@dataclass
class OpCounter:
    squarings: int = 0
    multiplications: int = 0


@dataclass(frozen=True)
class VdfParams:
    modulus: int
    tl: int = 1 << 16
    prime_bits: int = 128

    def __post_init__(self):
        if self.modulus <= 3 or self.modulus % 2 == 0:
            raise ValueError("modulus must be odd and > 3")
        if self.tl < 1:
            raise ValueError("tl must be >= 1")
        if not 32 <= self.prime_bits <= 256:
            raise ValueError("prime_bits must be in [32, 256]")

    @property
    def element_bytes(self) -> int:
        return (self.modulus.bit_length() + 7) // 8

    def to_dict(self) -> dict:
        return {"n": str(self.modulus), "tl": self.tl, "prime_bits": self.prime_bits}

    @classmethod
    def from_dict(cls, d: dict) -> "VdfParams":
        return cls(int(d["n"]), int(d["tl"]), int(d.get("prime_bits", 128)))


@dataclass(frozen=True)
class VdfCertificate:
    x: int
    y: int
    pi: int
    tl: int

    def to_dict(self, params: VdfParams | None = None) -> dict:
        d = {"x": str(self.x), "y": str(self.y), "pi": str(self.pi), "tl": self.tl}
        if params is not None:
            d["n"] = str(params.modulus)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "VdfCertificate":
        return cls(int(d["x"]), int(d["y"]), int(d["pi"]), int(d["tl"]))

    def dumps(self, params: VdfParams) -> str:
        return json.dumps(self.to_dict(params), sort_keys=True)


def generate_modulus(bits: int, rng: random.Random) -> int:
    """Product of two random primes (trusted setup; factors are discarded)."""
    half = bits // 2
    while True:
        p = random_prime(half, rng)
        q = random_prime(bits - half, rng)
        if p != q and (p * q).bit_length() == bits:
            return p * q


def _encode(v: int, width: int) -> bytes:
    return v.to_bytes(width, "big")


def _expand(data: bytes, nbytes: int) -> bytes:
    out = bytearray()
    counter = 0
    while len(out) < nbytes:
        out += hashlib.sha256(counter.to_bytes(4, "big") + data).digest()
        counter += 1
    return bytes(out[:nbytes])


def hash_to_group(data: bytes, params: VdfParams) -> int:
    if not data:
        raise ValueError("data must be non-empty")
    # 16 extra bytes keep the modular bias negligible
    v = int.from_bytes(_expand(data, params.element_bytes + 16), "big") % params.modulus
    return 2 if v in (0, 1) else v


def hash_to_prime(x: int, y: int, tl: int, params: VdfParams) -> int:
    width = params.element_bytes
    seed = hashlib.sha256(_encode(x, width) + _encode(y, width) + tl.to_bytes(8, "big")).digest()
    k = params.prime_bits
    candidate = int.from_bytes(_expand(seed, (k + 7) // 8), "big") >> (8 * ((k + 7) // 8) - k)
    candidate |= (1 << (k - 1)) | 1
    while not is_probable_prime(candidate):
        candidate += 2
        if candidate.bit_length() > k:
            candidate = (1 << (k - 1)) | 1
    return candidate


def eval_vdf(x: int, params: VdfParams, counter: OpCounter | None = None) -> int:
    n = params.modulus
    y = x % n
    for _ in range(params.tl):
        y = y * y % n
    if counter is not None:
        counter.squarings += params.tl
    return y


def _pow(base: int, exp: int, n: int, counter: OpCounter | None) -> int:
    # left-to-right square and multiply; instrumented for the verify cost bound
    result = 1
    sq = mul = 0
    for bit in bin(exp)[2:] if exp else "":
        result = result * result % n
        sq += 1
        if bit == "1":
            result = result * base % n
            mul += 1
    if counter is not None:
        counter.squarings += sq
        counter.multiplications += mul
    return result


def prove(x: int, y: int, params: VdfParams, *, challenge: int | None = None,
          check: bool = False) -> int:
    if check and eval_vdf(x, params) != y:
        raise InconsistentInput("y is not the VDF output for x")
    b = challenge if challenge is not None else hash_to_prime(x, y, params.tl, params)
    return pow(x, (1 << params.tl) // b, params.modulus)


def certify(x: int, params: VdfParams) -> VdfCertificate:
    y = eval_vdf(x, params)
    return VdfCertificate(x=x, y=y, pi=prove(x, y, params), tl=params.tl)


def _well_formed(v: int, n: int) -> bool:
    return 0 < v < n and math.gcd(v, n) == 1


def verify(cert: VdfCertificate, params: VdfParams, *, challenge: int | None = None,
           counter: OpCounter | None = None) -> bool:
    n = params.modulus
    if cert.tl != params.tl:
        return False
    if not all(_well_formed(v, n) for v in (cert.x, cert.y, cert.pi)):
        return False
    b = challenge if challenge is not None else hash_to_prime(cert.x, cert.y, cert.tl, params)
    r = pow(2, cert.tl, b)
    lhs = _pow(cert.pi, b, n, counter) * _pow(cert.x, r, n, counter) % n
    if counter is not None:
        counter.multiplications += 1
    return lhs == cert.y
