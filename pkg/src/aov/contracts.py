"""Election state machine: registration, booth voting, oracle/prover deposits,
trigger-gated tallies and the incumbent-vs-supermajority winner rule.

Every accepted mutating call appends one event to ``ElectionState.events``
carrying its JSON arguments and the resulting state hash, so a log can be
replayed through :meth:`ElectionState.apply`.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import asdict, dataclass, field
from enum import Enum
from fractions import Fraction

from . import signing
from .btc_header import BlockHeader, Target
from .ec import SECP256K1
from .protocols import Opening, get_protocol
from .trigger import EpochSchedule, MismatchedInput, TriggerVerdict, evaluate_trigger
from .vdf import VdfCertificate, VdfParams
from .wallet import wallet_address


class ContractError(Exception):
    pass


class AlreadyInitialized(ContractError):
    pass


class NotInitialized(ContractError):
    pass


class BadSignature(ContractError):
    pass


class NotValidAddress(ContractError):
    pass


class BadProof(ContractError):
    pass


class IllegalTransition(ContractError):
    pass


class UnknownHeight(ContractError):
    pass


class StaleHeight(ContractError):
    pass


class StrideViolation(ContractError):
    pass


class ImmatureHeader(ContractError):
    pass


class HeightMismatch(ContractError):
    pass


class MissingDeposit(ContractError):
    pass


class AddressStatus(str, Enum):
    VALID = "valid"
    INVALID = "invalid"
    VOTED = "voted"
    PENDING = "pending"


def _fraction(x: float) -> Fraction:
    return Fraction(x).limit_denominator(10**9)


@dataclass(frozen=True)
class ElectionParams:
    candidates: tuple[str, ...]
    ea_public_key: bytes
    vdf_params: VdfParams
    schedule: EpochSchedule
    baseline_tally: tuple[int, ...]
    supermajority_threshold: float = 0.70
    min_participation: float = 0.70
    booth_grid: tuple[int, int] = (1, 1)
    baseline_turnout: int | None = None
    main_election: bool = False
    seed: bytes = b""
    rng_seed: int = 0
    protocol: str = "plaintext"
    min_confirmations: int = 6

    def __post_init__(self):
        if len(self.candidates) < 2:
            raise ValueError("need at least two candidates")
        if not 0.5 < self.supermajority_threshold <= 1:
            raise ValueError("supermajority_threshold must be in (0.5, 1]")
        if not 0 <= self.min_participation <= 1:
            raise ValueError("min_participation must be in [0, 1]")
        if self.booth_grid[0] < 1 or self.booth_grid[1] < 1:
            raise ValueError("booth grid dimensions must be >= 1")
        if len(self.baseline_tally) != len(self.candidates):
            raise ValueError("baseline_tally needs one count per candidate")
        get_protocol(self.protocol)

    @property
    def k(self) -> int:
        return len(self.candidates)

    @property
    def booth_count(self) -> int:
        return self.booth_grid[0] * self.booth_grid[1]

    @property
    def turnout_baseline(self) -> int:
        if self.baseline_turnout is not None:
            return self.baseline_turnout
        return sum(self.baseline_tally)

    def to_dict(self) -> dict:
        return {
            "candidates": list(self.candidates),
            "ea_public_key": self.ea_public_key.hex(),
            "vdf_params": self.vdf_params.to_dict(),
            "schedule": self.schedule.to_dict(),
            "baseline_tally": list(self.baseline_tally),
            "supermajority_threshold": self.supermajority_threshold,
            "min_participation": self.min_participation,
            "booth_grid": list(self.booth_grid),
            "baseline_turnout": self.baseline_turnout,
            "main_election": self.main_election,
            "seed": self.seed.hex(),
            "rng_seed": self.rng_seed,
            "protocol": self.protocol,
            "min_confirmations": self.min_confirmations,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ElectionParams":
        return cls(
            candidates=tuple(d["candidates"]),
            ea_public_key=bytes.fromhex(d["ea_public_key"]),
            vdf_params=VdfParams.from_dict(d["vdf_params"]),
            schedule=EpochSchedule.from_dict(d["schedule"]),
            baseline_tally=tuple(int(v) for v in d["baseline_tally"]),
            supermajority_threshold=float(d.get("supermajority_threshold", 0.70)),
            min_participation=float(d.get("min_participation", 0.70)),
            booth_grid=tuple(d.get("booth_grid", (1, 1))),
            baseline_turnout=d.get("baseline_turnout"),
            main_election=bool(d.get("main_election", False)),
            seed=bytes.fromhex(d.get("seed", "")),
            rng_seed=int(d.get("rng_seed", 0)),
            protocol=d.get("protocol", "plaintext"),
            min_confirmations=int(d.get("min_confirmations", 6)),
        )


@dataclass
class AddressRecord:
    status: AddressStatus
    booth: int


@dataclass
class BoothState:
    booth_no: int
    votes: dict[bytes, bytes] = field(default_factory=dict)
    openings: dict[bytes, Opening] = field(default_factory=dict)


@dataclass
class ValidatorState:
    headers: dict[int, BlockHeader] = field(default_factory=dict)
    targets: dict[int, int] = field(default_factory=dict)
    vdf_deposits: dict[int, VdfCertificate] = field(default_factory=dict)
    blockheight_stored: int | None = None


@dataclass(frozen=True)
class TallyResult:
    epoch: int
    height: int
    per_booth: list[list[int]]
    totals: list[int]
    turnout: int
    rejected: int
    previous_winner: int
    winner: int

    @property
    def changed(self) -> bool:
        return self.winner != self.previous_winner

    def to_dict(self) -> dict:
        return asdict(self)


def apply_winner_rule(totals, turnout: int, prev_winner: int, params: ElectionParams) -> int:
    if any(t < 0 for t in totals):
        raise ValueError("tallies must be non-negative")
    if turnout <= 0:
        return prev_winner
    if params.main_election:
        leader = max(range(len(totals)), key=lambda c: (totals[c], -c))
        return leader if 2 * totals[leader] > turnout else prev_winner
    if Fraction(turnout) < _fraction(params.min_participation) * params.turnout_baseline:
        return prev_winner
    threshold = _fraction(params.supermajority_threshold)
    for c, votes in enumerate(totals):
        if c != prev_winner and Fraction(votes, turnout) >= threshold:
            return c
    return prev_winner


def registration_message(addr: bytes, valid: bool) -> bytes:
    return b"aov/register" + addr + (b"\x01" if valid else b"\x00")


def vote_message(addr: bytes, blinded: bytes, zkp: bytes) -> bytes:
    return b"aov/vote" + addr + len(blinded).to_bytes(2, "big") + blinded + zkp


def revote_message(addr_next: bytes) -> bytes:
    return b"aov/revote" + addr_next


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _digest(obj) -> str:
    return hashlib.sha256(_canonical(obj).encode()).hexdigest()


class ElectionState:
    def __init__(self):
        self.params: ElectionParams | None = None
        self.registry: dict[bytes, AddressRecord] = {}
        self.booths: list[BoothState] = []
        self.validator = ValidatorState()
        self.winner: int | None = None
        self.epoch = 0
        self.history: list[TallyResult] = []
        self.events: list[dict] = []
        self._rng: random.Random | None = None
        # JSON views kept in step with the state so hashing stays cheap
        self._view = {"registry": {}, "headers": {}, "targets": {}, "deposits": {}, "history": []}
        # canonical JSON of each view, dropped whenever that view changes
        self._json: dict[str, str] = {}

    # -- bookkeeping ------------------------------------------------------

    def _require(self) -> ElectionParams:
        if self.params is None:
            raise NotInitialized("setup has not been called")
        return self.params

    def _booths_view(self) -> list[dict]:
        return [
            {"votes": {a.hex(): b.hex() for a, b in bs.votes.items()},
             "openings": {a.hex(): [c, key.hex()] for a, (c, key) in bs.openings.items()}}
            for bs in self.booths
        ]

    def snapshot(self) -> dict:
        v, view = self.validator, self._view
        return {
            "params": self.params.to_dict() if self.params else None,
            "registry": view["registry"],
            "booths": self._booths_view(),
            "validator": {
                "headers": view["headers"],
                "targets": view["targets"],
                "vdf_deposits": view["deposits"],
                "blockheight_stored": v.blockheight_stored,
            },
            "winner": self.winner,
            "epoch": self.epoch,
            "history": view["history"],
        }

    def _set_status(self, addr: bytes, rec: AddressRecord, status: AddressStatus) -> None:
        rec.status = status
        self._view["registry"][addr.hex()] = [status.value, rec.booth]
        self._json.pop("registry", None)

    def _section(self, name: str) -> str:
        text = self._json.get(name)
        if text is None:
            obj = self.params.to_dict() if name == "params" else self._view[name]
            text = self._json[name] = _canonical(obj)
        return text

    def state_hash(self) -> str:
        """Digest of the canonical snapshot, assembled from cached sections.

        Equals ``_digest(self.snapshot())`` byte for byte.
        """
        if self.params is None:
            return _digest(self.snapshot())
        validator = (f'{{"blockheight_stored":{_canonical(self.validator.blockheight_stored)},'
                     f'"headers":{self._section("headers")},"targets":{self._section("targets")},'
                     f'"vdf_deposits":{self._section("deposits")}}}')
        text = (f'{{"booths":{_canonical(self._booths_view())},"epoch":{_canonical(self.epoch)},'
                f'"history":{self._section("history")},"params":{self._section("params")},'
                f'"registry":{self._section("registry")},"validator":{validator},'
                f'"winner":{_canonical(self.winner)}}}')
        return hashlib.sha256(text.encode()).hexdigest()

    def _record(self, op: str, args: dict, notes: list[str] | None = None) -> dict:
        event = {
            "seq": len(self.events),
            "op": op,
            "args": args,
            "args_digest": _digest(args),
            "state_hash": self.state_hash(),
        }
        if notes:
            event["notes"] = notes
        self.events.append(event)
        return event

    # -- operations ---------------------------------------------------------

    def setup(self, params: ElectionParams) -> None:
        if self.params is not None:
            raise AlreadyInitialized("election already set up")
        self.params = params
        self.booths = [BoothState(i) for i in range(params.booth_count)]
        tally = params.baseline_tally
        self.winner = max(range(params.k), key=lambda c: (tally[c], -c))
        self._rng = random.Random(params.rng_seed)
        self._record("setup", {"params": params.to_dict()})

    def _admit(self, addr: bytes, status: AddressStatus) -> None:
        rec = self.registry[addr] = AddressRecord(status, self._rng.randrange(len(self.booths)))
        self._set_status(addr, rec, status)

    def registration(self, addr: bytes, valid: bool, ea_signature: signing.Signature) -> None:
        params = self._require()
        if ea_signature.pubkey != params.ea_public_key or not signing.verify(
                ea_signature, registration_message(addr, valid)):
            raise BadSignature("registration not signed by the election authority")
        rec = self.registry.get(addr)
        notes = []
        if valid:
            if rec is not None and rec.status not in (AddressStatus.PENDING, AddressStatus.VALID):
                raise IllegalTransition(f"cannot validate an address in state {rec.status.value}")
            if rec is None:
                self._admit(addr, AddressStatus.VALID)
            else:
                self._set_status(addr, rec, AddressStatus.VALID)
        else:
            if rec is None:
                self._admit(addr, AddressStatus.INVALID)
            else:
                booth = self.booths[rec.booth]
                if addr in booth.votes:
                    # invalidating a live vote reveals that two addresses share an owner
                    del booth.votes[addr]
                    booth.openings.pop(addr, None)
                    notes.append("linkage-warning")
                self._set_status(addr, rec, AddressStatus.INVALID)
        self._record("registration", {"addr": addr.hex(), "valid": valid,
                                      "signature": ea_signature.to_hex()}, notes)

    def _check_owner(self, sig: signing.Signature, addr: bytes, msg: bytes) -> None:
        try:
            pk = SECP256K1.decompress(sig.pubkey)
        except ValueError:
            raise BadSignature("malformed signer key") from None
        if wallet_address(pk) != addr or not signing.verify(sig, msg):
            raise BadSignature("signature does not match the wallet address")

    def voting(self, addr: bytes, blinded_vote: bytes, zkp: bytes,
               signature: signing.Signature) -> None:
        params = self._require()
        rec = self.registry.get(addr)
        if rec is None or rec.status is not AddressStatus.VALID:
            raise NotValidAddress(f"address {addr.hex()} cannot vote")
        self._check_owner(signature, addr, vote_message(addr, blinded_vote, zkp))
        if not get_protocol(params.protocol).verify_zkp(blinded_vote, zkp, params.k):
            raise BadProof("vote proof rejected")
        self.booths[rec.booth].votes[addr] = blinded_vote
        self._set_status(addr, rec, AddressStatus.VOTED)
        self._record("voting", {"addr": addr.hex(), "blinded_vote": blinded_vote.hex(),
                                "zkp": zkp.hex(), "signature": signature.to_hex()})

    def submit_opening(self, addr: bytes, choice: int, blinding_key: bytes) -> None:
        self._require()
        rec = self.registry.get(addr)
        if rec is None or addr not in self.booths[rec.booth].votes:
            raise NotValidAddress(f"no live vote for {addr.hex()}")
        self.booths[rec.booth].openings[addr] = (choice, blinding_key)
        self._record("submit_opening", {"addr": addr.hex(), "choice": choice,
                                        "blinding_key": blinding_key.hex()})

    def revote(self, addr_next: bytes, signature: signing.Signature) -> None:
        self._require()
        self._check_owner(signature, addr_next, revote_message(addr_next))
        if addr_next in self.registry:
            raise IllegalTransition("revote address already known")
        self._admit(addr_next, AddressStatus.PENDING)
        self._record("revote", {"addr_next": addr_next.hex(), "signature": signature.to_hex()})

    def vdf_add(self, cert: VdfCertificate, height: int) -> None:
        self._require()
        if height not in self.validator.headers:
            raise UnknownHeight(f"no header stored at height {height}")
        # last write wins; deposits are re-verified at tally time
        self.validator.vdf_deposits[height] = cert
        self._view["deposits"][str(height)] = cert.to_dict()
        self._json.pop("deposits", None)
        self._record("vdf_add", {"cert": cert.to_dict(), "height": height})

    def bpo_add(self, target: Target | int, header: BlockHeader, height: int,
                confirmations: int) -> None:
        params = self._require()
        stored = self.validator.blockheight_stored
        if stored is not None and height <= stored:
            raise StaleHeight(f"height {height} not above stored {stored}")
        stride = params.schedule.stride
        if stride > 1 and height % stride:
            raise StrideViolation(f"height {height} is not a multiple of stride {stride}")
        if confirmations < params.min_confirmations:
            raise ImmatureHeader(f"{confirmations} confirmations < {params.min_confirmations}")
        value = target.value if isinstance(target, Target) else int(target)
        self.validator.headers[height] = header
        self.validator.targets[height] = value
        self.validator.blockheight_stored = height
        self._view["headers"][str(height)] = header.hex()
        self._view["targets"][str(height)] = f"{value:064x}"
        self._json.pop("headers", None)
        self._json.pop("targets", None)
        self._record("bpo_add", {"target": f"{value:064x}", "header": header.hex(),
                                 "height": height, "confirmations": confirmations})

    def check_trigger(self, height: int) -> TriggerVerdict:
        """Read-only trigger evaluation for a stored header and deposit."""
        params = self._require()
        v = self.validator
        if v.blockheight_stored != height:
            raise HeightMismatch(f"stored height is {v.blockheight_stored}, asked {height}")
        if height not in v.vdf_deposits:
            raise MissingDeposit(f"no VDF deposit at height {height}")
        try:
            return evaluate_trigger(v.vdf_deposits[height], params.vdf_params,
                                    v.headers[height], v.targets[height], params.schedule)
        except MismatchedInput:
            return TriggerVerdict(pow=False, vdf=False, b=None, triggered=False)

    def tally(self, height: int) -> TallyResult | None:
        params = self._require()
        if not self.check_trigger(height).triggered:
            return None
        protocol = get_protocol(params.protocol)
        per_booth, rejected = [], 0
        for booth in self.booths:
            counts, bad = protocol.booth_tally(booth.votes, booth.openings, params.k)
            per_booth.append(counts)
            rejected += len(bad)
        totals = [sum(col) for col in zip(*per_booth)]
        turnout = sum(totals)
        prev = self.winner
        result = TallyResult(
            epoch=self.epoch, height=height, per_booth=per_booth, totals=totals,
            turnout=turnout, rejected=rejected, previous_winner=prev,
            winner=apply_winner_rule(totals, turnout, prev, params),
        )
        self.winner = result.winner
        self.history.append(result)
        self._view["history"].append(result.to_dict())
        self._json.pop("history", None)
        # next interval starts empty; every participant revotes with a fresh address
        for booth in self.booths:
            booth.votes.clear()
            booth.openings.clear()
        self.epoch += 1
        self._record("tally", {"height": height})
        return result

    # -- replay ---------------------------------------------------------------

    def apply(self, op: str, args: dict):
        """Execute one logged operation from its JSON arguments."""
        if op == "setup":
            return self.setup(ElectionParams.from_dict(args["params"]))
        if op == "registration":
            return self.registration(bytes.fromhex(args["addr"]), bool(args["valid"]),
                                     signing.Signature.from_hex(args["signature"]))
        if op == "voting":
            return self.voting(bytes.fromhex(args["addr"]), bytes.fromhex(args["blinded_vote"]),
                               bytes.fromhex(args["zkp"]),
                               signing.Signature.from_hex(args["signature"]))
        if op == "submit_opening":
            return self.submit_opening(bytes.fromhex(args["addr"]), int(args["choice"]),
                                       bytes.fromhex(args["blinding_key"]))
        if op == "revote":
            return self.revote(bytes.fromhex(args["addr_next"]),
                               signing.Signature.from_hex(args["signature"]))
        if op == "vdf_add":
            return self.vdf_add(VdfCertificate.from_dict(args["cert"]), int(args["height"]))
        if op == "bpo_add":
            return self.bpo_add(int(args["target"], 16), BlockHeader.from_hex(args["header"]),
                                int(args["height"]), int(args["confirmations"]))
        if op == "tally":
            return self.tally(int(args["height"]))
        raise ValueError(f"unknown operation {op!r}")
