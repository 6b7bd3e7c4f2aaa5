"""Reference vote protocols plugged into the booth contracts.

Neither is a production ballot scheme: ``plaintext`` exists for testing,
``commit-reveal`` hides the choice behind a hash commitment until tally time.
"""

from __future__ import annotations

import hashlib
from typing import Protocol

Opening = tuple[int, bytes]


class VoteProtocol(Protocol):
    name: str

    def blind(self, choice: int, blinding_key: bytes) -> bytes: ...

    def prove(self, choice: int, blinding_key: bytes, k: int) -> bytes: ...

    def verify_zkp(self, blinded: bytes, proof: bytes, k: int) -> bool: ...

    def booth_tally(self, votes: dict[bytes, bytes], openings: dict[bytes, Opening],
                    k: int) -> tuple[list[int], list[bytes]]: ...


class PlaintextProtocol:
    name = "plaintext"

    def blind(self, choice: int, blinding_key: bytes = b"") -> bytes:
        return choice.to_bytes(2, "big")

    def prove(self, choice: int, blinding_key: bytes, k: int) -> bytes:
        return b""

    def verify_zkp(self, blinded: bytes, proof: bytes, k: int) -> bool:
        return len(blinded) == 2 and int.from_bytes(blinded, "big") < k

    def booth_tally(self, votes, openings, k):
        counts = [0] * k
        rejected = []
        for addr in sorted(votes):
            choice = int.from_bytes(votes[addr], "big")
            if len(votes[addr]) == 2 and choice < k:
                counts[choice] += 1
            else:
                rejected.append(addr)
        return counts, rejected


def commitment(choice: int, blinding_key: bytes) -> bytes:
    return hashlib.sha256(b"aov-vote" + choice.to_bytes(2, "big") + blinding_key).digest()


class CommitRevealProtocol:
    """Blinded vote = SHA-256 commitment to (choice, 256-bit key); votes are
    counted only if a matching opening reaches the booth by tally time."""

    name = "commit-reveal"

    def blind(self, choice: int, blinding_key: bytes) -> bytes:
        if len(blinding_key) != 32:
            raise ValueError("blinding key must be 32 bytes")
        return commitment(choice, blinding_key)

    def prove(self, choice: int, blinding_key: bytes, k: int) -> bytes:
        return b""

    def verify_zkp(self, blinded: bytes, proof: bytes, k: int) -> bool:
        return len(blinded) == 32 and proof == b""

    def booth_tally(self, votes, openings, k):
        counts = [0] * k
        rejected = []
        for addr in sorted(votes):
            opening = openings.get(addr)
            if opening is None:
                rejected.append(addr)
                continue
            choice, key = opening
            if choice < k and len(key) == 32 and commitment(choice, key) == votes[addr]:
                counts[choice] += 1
            else:
                rejected.append(addr)
        return counts, rejected


PROTOCOLS: dict[str, VoteProtocol] = {
    PlaintextProtocol.name: PlaintextProtocol(),
    CommitRevealProtocol.name: CommitRevealProtocol(),
}


def get_protocol(name: str) -> VoteProtocol:
    try:
        return PROTOCOLS[name]
    except KeyError:
        raise ValueError(f"unknown vote protocol {name!r}") from None
