"""Epoch-end predicate: PoW check, VDF check, entropy extraction and ``b == 0``."""

from __future__ import annotations

import hashlib
import math
from dataclasses import asdict, dataclass
from fractions import Fraction

from .btc_header import BlockHeader, Target, check_pow
from .vdf import VdfCertificate, VdfParams, hash_to_group, verify

MINUTES_PER_YEAR = 525600


class MismatchedInput(ValueError):
    pass


@dataclass(frozen=True)
class EpochSchedule:
    total_time: int
    ft: int
    block_time: int = 10
    stride: int = 1

    def __post_init__(self):
        for name in ("total_time", "ft", "block_time", "stride"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if interval_time(self) < 1:
            raise ValueError("schedule yields interval_time < 1")

    @property
    def modulus(self) -> int:
        return trigger_modulus(self)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "EpochSchedule":
        return cls(**{k: int(d[k]) for k in ("total_time", "ft", "block_time", "stride") if k in d})


def interval_time(s: EpochSchedule) -> Fraction:
    return Fraction(s.total_time, s.ft * s.block_time * s.stride)


def trigger_modulus(s: EpochSchedule) -> int:
    # ceiling: a fractional interval lengthens epochs slightly, never shortens them
    return math.ceil(interval_time(s))


def extract(y: int) -> int:
    raw = y.to_bytes(max(1, (y.bit_length() + 7) // 8), "big")
    return int.from_bytes(hashlib.sha256(raw).digest(), "big")


def trigger_value(a: int, m: int) -> int:
    if m < 1:
        raise ValueError("modulus must be >= 1")
    return a % m


def vc_output(b: int) -> bool:
    return b == 0


@dataclass(frozen=True)
class TriggerVerdict:
    pow: bool
    vdf: bool
    b: int | None
    triggered: bool

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate_trigger(cert: VdfCertificate, vdf_params: VdfParams, header: BlockHeader,
                     t: Target | int, s: EpochSchedule) -> TriggerVerdict:
    if cert.x != hash_to_group(header.encode(), vdf_params):
        raise MismatchedInput("certificate input does not match the block header")
    pow_ok = check_pow(header, t)
    vdf_ok = pow_ok and verify(cert, vdf_params)
    b = trigger_value(extract(cert.y), trigger_modulus(s)) if vdf_ok else None
    return TriggerVerdict(pow=pow_ok, vdf=vdf_ok, b=b, triggered=b is not None and vc_output(b))


def verify_trigger(cert: VdfCertificate, vdf_params: VdfParams, header: BlockHeader,
                   t: Target | int, s: EpochSchedule) -> bool:
    return evaluate_trigger(cert, vdf_params, header, t, s).triggered
