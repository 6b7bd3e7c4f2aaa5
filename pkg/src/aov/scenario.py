"""Scenario files, the end-to-end election driver, event logs and replay.

The driver plays every role around the contracts: the EA (registration and
address validation), participants (wallet derivation, voting, revoting),
the Bitcoin oracle (delivering mature headers) and the VDF prover.
"""

from __future__ import annotations

import csv
import io
import json
import os
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, Field, ValidationError, model_validator

from . import signing
from .btc_header import (
    BlockHeader, decode_nbits, header_digest, mine_test_header, read_header_file,
)
from .contracts import (
    ContractError, ElectionParams, ElectionState, TallyResult,
    registration_message, revote_message, vote_message,
)
from .protocols import get_protocol
from .sim import SimConfig
from .trigger import EpochSchedule
from .vdf import VdfParams, certify, generate_modulus, hash_to_group
from .wallet import (
    SyncRecord, WalletChain, derive_pk_ea, derive_sk, new_chain, wallet_address,
)


class ScenarioInvalid(ValueError):
    pass


class ScenarioAborted(RuntimeError):
    def __init__(self, seq: int, op: str, error: Exception):
        super().__init__(f"event {seq} ({op}) rejected: {type(error).__name__}: {error}")
        self.seq = seq
        self.op = op
        self.error = error


class DivergenceAt(RuntimeError):
    def __init__(self, seq: int, reason: str):
        super().__init__(f"replay diverged at event {seq}: {reason}")
        self.seq = seq


# -- scenario schema ----------------------------------------------------------


class ScheduleSpec(BaseModel):
    total_time: int = Field(ge=1)
    ft: int = Field(ge=1)
    block_time: int = Field(10, ge=1)
    stride: int = Field(1, ge=1)


class VdfSpec(BaseModel):
    modulus: str | None = None
    modulus_bits: int = Field(256, ge=64)
    tl: int = Field(256, ge=1)
    prime_bits: int = Field(64, ge=32, le=256)


class ParamsSpec(BaseModel):
    candidates: list[str] = Field(min_length=2)
    baseline_tally: list[int]
    baseline_turnout: int | None = None
    supermajority_threshold: float = 0.70
    min_participation: float = 0.70
    booth_grid: tuple[int, int] = (1, 1)
    main_election: bool = False
    protocol: Literal["plaintext", "commit-reveal"] = "plaintext"
    schedule: ScheduleSpec
    vdf: VdfSpec = VdfSpec()
    seed: str = ""
    min_confirmations: int = 6


class SyntheticHeaders(BaseModel):
    count: int = Field(ge=1)
    nbits: str = "0x2000ffff"
    start_time: int = 1700000000


class HeaderSpec(BaseModel):
    synthetic: SyntheticHeaders | None = None
    fixtures: list[str] | None = None
    file: str | None = None

    @model_validator(mode="after")
    def _one_source(self):
        if sum(x is not None for x in (self.synthetic, self.fixtures, self.file)) != 1:
            raise ValueError("exactly one of synthetic, fixtures, file is required")
        return self


class ParticipantSpec(BaseModel):
    id: str
    sk0: str | None = None
    hk: str | None = None
    g: int | None = None
    p: int | None = None


class Command(BaseModel):
    op: Literal["register", "vote", "vote_block"]
    epoch: int | None = None
    height: int | None = None
    participant: str | None = None
    choice: str | None = None
    counts: dict[str, int] | None = None
    forge_ea_signature: bool = False

    @model_validator(mode="after")
    def _timing(self):
        if (self.epoch is None) == (self.height is None):
            raise ValueError("each command needs exactly one of epoch or height")
        if self.op == "vote_block" and not self.counts:
            raise ValueError("vote_block needs counts")
        if self.op in ("register", "vote") and self.participant is None:
            raise ValueError(f"{self.op} needs a participant")
        if self.op == "vote" and self.choice is None:
            raise ValueError("vote needs a choice")
        return self


class Scenario(BaseModel):
    name: str = "scenario"
    rng_seed: int = 0
    params: ParamsSpec
    headers: HeaderSpec
    participants: list[ParticipantSpec] | int = 0
    script: list[Command] = []
    sim: dict | None = None  # SimConfig fields, run by `aov sim` against this file

    def participant_ids(self) -> list[str]:
        if isinstance(self.participants, int):
            return [f"p{i}" for i in range(self.participants)]
        return [p.id for p in self.participants]

    @model_validator(mode="after")
    def _references(self):
        ids = set(self.participant_ids())
        cands = set(self.params.candidates)
        for i, cmd in enumerate(self.script):
            if cmd.participant is not None and cmd.participant not in ids:
                raise ValueError(f"script[{i}]: unknown participant {cmd.participant!r}")
            if cmd.choice is not None and cmd.choice not in cands:
                raise ValueError(f"script[{i}]: unknown candidate {cmd.choice!r}")
            if cmd.counts:
                unknown = set(cmd.counts) - cands
                if unknown:
                    raise ValueError(f"script[{i}]: unknown candidates {sorted(unknown)}")
                if sum(cmd.counts.values()) > len(ids):
                    raise ValueError(f"script[{i}]: vote_block needs more participants")
        if len(self.params.baseline_tally) != len(self.params.candidates):
            raise ValueError("params.baseline_tally needs one entry per candidate")
        if self.sim is not None:
            sim = {k: v for k, v in self.sim.items() if k != "runs"}
            try:
                SimConfig.from_dict(sim)
            except (TypeError, ValueError, KeyError) as e:
                raise ValueError(f"sim: {e}") from None
        return self


def _line_of(text: str, loc) -> int | None:
    keys = [k for k in loc if isinstance(k, str)]
    for key in reversed(keys):
        needle = f'"{key}"'
        for lineno, line in enumerate(text.splitlines(), 1):
            if needle in line:
                return lineno
    return None


def parse_scenario(text: str, source: str = "<scenario>") -> Scenario:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioInvalid(f"{source}:{e.lineno}:{e.colno}: {e.msg}") from None
    try:
        return Scenario.model_validate(raw)
    except ValidationError as e:
        lines = []
        for err in e.errors():
            path = ".".join(str(p) for p in err["loc"]) or "<root>"
            lineno = _line_of(text, err["loc"])
            where = f"{source}:{lineno}" if lineno else source
            lines.append(f"{where}: {path}: {err['msg']}")
        raise ScenarioInvalid("\n".join(lines)) from None


def load_scenario(path) -> Scenario:
    path = Path(path)
    return parse_scenario(path.read_text(), str(path))


def bundled_scenario_path(name: str) -> Path:
    return Path(__file__).parent / "scenarios" / f"{name}.json"


# -- driver -------------------------------------------------------------------


@dataclass
class RunResult:
    scenario: str
    events: list[dict]
    tallies: list[TallyResult]
    candidates: list[str]
    final_state_hash: str
    winner: str
    epochs: int
    aborted: dict | None = None
    warnings: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "events": self.events,
            "tallies": [t.to_dict() for t in self.tallies],
            "candidates": self.candidates,
            "final_state_hash": self.final_state_hash,
            "winner": self.winner,
            "epochs": self.epochs,
            "aborted": self.aborted,
            "warnings": self.warnings,
        }


@dataclass
class _Participant:
    pid: str
    chain: WalletChain
    e: int = -1  # last iteration used; -1 before the first vote
    addr: bytes | None = None
    voted_epoch: int | None = None
    opening: tuple[int, bytes] | None = None


def _chain_for(spec: ParticipantSpec | None, rng: random.Random) -> WalletChain:
    chain = new_chain(rng)
    if spec is None:
        return chain
    return WalletChain(
        sk0=int(spec.sk0, 16) if spec.sk0 else chain.sk0,
        hk=bytes.fromhex(spec.hk) if spec.hk else chain.hk,
        g=spec.g or chain.g,
        p=spec.p or chain.p,
    )


def synthetic_chain(spec: SyntheticHeaders, rng: random.Random, extra: int) -> list[BlockHeader]:
    target = decode_nbits(int(spec.nbits, 16))
    prev = bytes(32)
    out = []
    for i in range(spec.count + extra):
        template = BlockHeader(
            version=0x20000000, prev_hash=prev, merkle_root=rng.randbytes(32),
            timestamp=spec.start_time + 600 * i, nbits=int(spec.nbits, 16),
            nonce=rng.getrandbits(32),
        )
        h = mine_test_header(template, target, 1 << 24)
        out.append(h)
        prev = header_digest(h)
    return out


class ElectionDriver:
    def __init__(self, scenario: Scenario, seed: int | None = None, base_dir: Path | None = None):
        self.scenario = scenario
        self.seed = scenario.rng_seed if seed is None else seed
        self.base_dir = base_dir or Path.cwd()
        rng = random.Random(self.seed)
        self.rng = rng
        self.ea_sk = rng.randrange(1, signing.SECP256K1.q)
        self.ea_pk = signing.SECP256K1.compress(signing.SECP256K1.mul_base(self.ea_sk))
        specs = scenario.participants if isinstance(scenario.participants, list) else None
        self.participants: dict[str, _Participant] = {}
        for i, pid in enumerate(scenario.participant_ids()):
            self.participants[pid] = _Participant(pid, _chain_for(specs[i] if specs else None, rng))
        # EA-side view: only sync records
        self.ea_records: dict[str, SyncRecord] = {
            pid: p.chain.sync_record() for pid, p in self.participants.items()}
        ps = scenario.params
        v = ps.vdf
        modulus = int(v.modulus) if v.modulus else generate_modulus(v.modulus_bits, rng)
        self.params = ElectionParams(
            candidates=tuple(ps.candidates),
            ea_public_key=self.ea_pk,
            vdf_params=VdfParams(modulus, v.tl, v.prime_bits),
            schedule=EpochSchedule(**ps.schedule.model_dump()),
            baseline_tally=tuple(ps.baseline_tally),
            supermajority_threshold=ps.supermajority_threshold,
            min_participation=ps.min_participation,
            booth_grid=tuple(ps.booth_grid),
            baseline_turnout=ps.baseline_turnout,
            main_election=ps.main_election,
            seed=bytes.fromhex(ps.seed),
            rng_seed=self.seed,
            protocol=ps.protocol,
            min_confirmations=ps.min_confirmations,
        )
        self.protocol = get_protocol(ps.protocol)
        self.state = ElectionState()
        self.tallies: list[TallyResult] = []
        self.warnings: list[dict] = []

    # -- roles ----------------------------------------------------------------

    def _ea_register(self, addr: bytes, valid: bool, forge: bool = False) -> None:
        sk = self.rng.randrange(1, signing.SECP256K1.q) if forge else self.ea_sk
        sig = signing.sign(sk, registration_message(addr, valid))
        if forge:
            # claim to be the EA without its key
            sig = signing.Signature(self.ea_pk, sig.r, sig.s)
        self._call("registration", self.state.registration, addr, valid, sig)

    def _register(self, p: _Participant, forge: bool = False) -> None:
        rec = self.ea_records[p.pid]
        p.e, p.addr = 0, rec.w0
        self._ea_register(rec.w0, True, forge)

    def _vote(self, p: _Participant, choice: int, forge: bool = False) -> None:
        state = self.state
        if p.addr is None:
            self._register(p, forge)
            sk = p.chain.sk0
        else:
            prev_addr, prev_epoch = p.addr, p.voted_epoch
            e = p.e + 1
            sk = derive_sk(p.chain, e)
            addr = wallet_address(p.chain.curve.mul_base(sk))
            msg = revote_message(addr)
            self._call("revote", state.revote, addr, signing.sign(sk, msg))
            # EA checks the new address against its own derivation before validating
            if wallet_address(derive_pk_ea(self.ea_records[p.pid], e)) != addr:
                raise RuntimeError(f"EA derivation mismatch for {p.pid} at e={e}")
            self._ea_register(addr, True, forge)
            if prev_epoch == state.epoch:
                self._ea_register(prev_addr, False)
                self.warnings.append({"participant": p.pid, "epoch": state.epoch,
                                      "linked": [prev_addr.hex(), addr.hex()]})
            p.e, p.addr = e, addr
        key = self.rng.randbytes(32)
        blinded = self.protocol.blind(choice, key)
        zkp = self.protocol.prove(choice, key, self.params.k)
        sig = signing.sign(sk, vote_message(p.addr, blinded, zkp))
        self._call("voting", state.voting, p.addr, blinded, zkp, sig)
        p.voted_epoch = state.epoch
        p.opening = (choice, key)

    def _call(self, op: str, fn, *args):
        try:
            return fn(*args)
        except ContractError as e:
            raise ScenarioAborted(len(self.state.events), op, e) from e

    def _run_commands(self, commands: list[Command]) -> None:
        cands = list(self.params.candidates)
        for cmd in commands:
            if cmd.op == "register":
                p = self.participants[cmd.participant]
                if p.addr is None:
                    self._register(p, cmd.forge_ea_signature)
            elif cmd.op == "vote":
                self._vote(self.participants[cmd.participant], cands.index(cmd.choice),
                           cmd.forge_ea_signature)
            else:
                order = list(self.participants.values())
                i = 0
                for name in cands:
                    for _ in range(cmd.counts.get(name, 0)):
                        self._vote(order[i], cands.index(name), cmd.forge_ea_signature)
                        i += 1

    def _headers(self) -> list[BlockHeader]:
        hs = self.scenario.headers
        if hs.synthetic is not None:
            return synthetic_chain(hs.synthetic, self.rng, self.params.min_confirmations)
        if hs.fixtures is not None:
            return [BlockHeader.from_hex(x) for x in hs.fixtures]
        path = Path(hs.file)
        return read_header_file(path if path.is_absolute() else self.base_dir / path)

    def _submit_openings(self) -> None:
        if self.protocol.name != "commit-reveal":
            return
        for p in self.participants.values():
            if p.voted_epoch == self.state.epoch and p.opening is not None:
                self._call("submit_opening", self.state.submit_opening, p.addr, *p.opening)

    def run(self) -> RunResult:
        state = self.state
        by_epoch: dict[int, list[Command]] = {}
        by_height: dict[int, list[Command]] = {}
        for cmd in self.scenario.script:
            if cmd.epoch is not None:
                by_epoch.setdefault(cmd.epoch, []).append(cmd)
            else:
                by_height.setdefault(cmd.height, []).append(cmd)
        aborted = None
        try:
            chain = self._headers()
            self._call("setup", state.setup, self.params)
            self._run_commands(by_epoch.pop(0, []))
            stride = self.params.schedule.stride
            tip = len(chain)
            for height in range(stride, tip + 1, stride):
                confirmations = tip - height + 1
                if confirmations < self.params.min_confirmations:
                    break
                self._run_commands(by_height.pop(height, []))
                header = chain[height - 1]
                target = decode_nbits(header.nbits)
                self._call("bpo_add", state.bpo_add, target, header, height, confirmations)
                cert = certify(hash_to_group(header.encode(), self.params.vdf_params),
                               self.params.vdf_params)
                self._call("vdf_add", state.vdf_add, cert, height)
                if state.check_trigger(height).triggered:
                    self._submit_openings()
                result = self._call("tally", state.tally, height)
                if result is not None:
                    self.tallies.append(result)
                    self._run_commands(by_epoch.pop(state.epoch, []))
        except ScenarioAborted as e:
            aborted = {"seq": e.seq, "op": e.op, "error": type(e.error).__name__,
                       "message": str(e.error)}
        return RunResult(
            scenario=self.scenario.name,
            events=list(state.events),
            tallies=list(self.tallies),
            candidates=list(self.params.candidates),
            final_state_hash=state.state_hash(),
            winner=self.params.candidates[state.winner] if state.winner is not None else "",
            epochs=state.epoch,
            aborted=aborted,
            warnings=self.warnings,
        )


def run_scenario(scenario: Scenario | str | Path, seed: int | None = None,
                 base_dir: Path | None = None) -> RunResult:
    if not isinstance(scenario, Scenario):
        path = Path(scenario)
        base_dir = base_dir or path.parent
        scenario = load_scenario(path)
    if seed is None and os.environ.get("AOV_SEED"):
        seed = int(os.environ["AOV_SEED"])
    return ElectionDriver(scenario, seed, base_dir).run()


# -- event log ----------------------------------------------------------------


def write_event_log(path, events) -> None:
    with open(path, "w") as fh:
        for ev in events:
            fh.write(json.dumps(ev, sort_keys=True, separators=(",", ":")) + "\n")


def read_event_log(path) -> list[dict]:
    events = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if line.strip():
                try:
                    events.append(json.loads(line))
                except json.JSONDecodeError as e:
                    raise ValueError(f"{path}:{lineno}: {e.msg}") from None
    return events


def replay(events) -> str:
    """Re-execute a logged run and return the final state hash."""
    from .contracts import _digest

    state = ElectionState()
    for i, ev in enumerate(events):
        seq = ev.get("seq", i)
        if seq != i:
            raise DivergenceAt(i, f"expected seq {i}, found {seq}")
        if _digest(ev["args"]) != ev["args_digest"]:
            raise DivergenceAt(seq, "arguments do not match their digest")
        try:
            state.apply(ev["op"], ev["args"])
        except (ContractError, ValueError, KeyError) as e:
            raise DivergenceAt(seq, f"{type(e).__name__}: {e}") from None
        if len(state.events) != i + 1:
            raise DivergenceAt(seq, f"{ev['op']} was not accepted on replay")
        if state.events[-1]["state_hash"] != ev["state_hash"]:
            raise DivergenceAt(seq, "state hash differs")
    return state.state_hash()


# -- reports ------------------------------------------------------------------


def tallies_csv(result: RunResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epoch", "height", "turnout", "rejected", *result.candidates,
                "previous_winner", "winner"])
    for t in result.tallies:
        w.writerow([t.epoch, t.height, t.turnout, t.rejected, *t.totals,
                    result.candidates[t.previous_winner], result.candidates[t.winner]])
    return buf.getvalue()


def write_artifacts(result: RunResult | dict, out_dir) -> Path:
    d = result if isinstance(result, dict) else result.to_dict()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_event_log(out / "events.jsonl", d["events"])
    rr = RunResult(
        scenario=d["scenario"], events=[], candidates=d["candidates"],
        tallies=[TallyResult(**t) for t in d["tallies"]],
        final_state_hash=d["final_state_hash"], winner=d["winner"], epochs=d["epochs"],
    )
    (out / "tallies.csv").write_text(tallies_csv(rr))
    (out / "tallies.json").write_text(json.dumps(d["tallies"], indent=2, sort_keys=True) + "\n")
    final = {k: d[k] for k in ("scenario", "final_state_hash", "winner", "epochs", "aborted",
                               "warnings")}
    (out / "final_state.json").write_text(json.dumps(final, indent=2, sort_keys=True) + "\n")
    return out
