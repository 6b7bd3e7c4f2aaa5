import copy
import functools
import random
from collections import deque

import pytest
from hypothesis import given, settings, strategies as st

from aov import signing
from aov.btc_header import BlockHeader
from aov.contracts import (
    AddressStatus, AlreadyInitialized, BadProof, BadSignature, ElectionParams, ElectionState,
    HeightMismatch, IllegalTransition, ImmatureHeader, MissingDeposit, NotInitialized,
    NotValidAddress, StaleHeight, StrideViolation, UnknownHeight, apply_winner_rule,
    registration_message, revote_message, vote_message,
)
from aov.ec import SECP256K1
from aov.protocols import CommitRevealProtocol, get_protocol
from aov.trigger import EpochSchedule
from aov.vdf import VdfCertificate, VdfParams, certify, hash_to_group
from aov.wallet import derive_sk, new_chain, wallet_address

EA_SK = 0xEA
EA_PK = SECP256K1.compress(SECP256K1.mul_base(EA_SK))
VDF = VdfParams(1_000_003 * 1_000_033, 16, 32)
ALWAYS = EpochSchedule(80, 8)          # modulus 1: every verified header triggers
EASY = (1 << 256) - 1
HEADER = BlockHeader(0x20000000, bytes(32), bytes(32), 0, 0x2000ffff, 0)
CERT = certify(hash_to_group(HEADER.encode(), VDF), VDF)


def make_params(**kw):
    base = dict(candidates=("A", "B", "C"), ea_public_key=EA_PK, vdf_params=VDF,
                schedule=ALWAYS, baseline_tally=(10, 10, 80), min_confirmations=6)
    base.update(kw)
    return ElectionParams(**base)


def new_state(**kw):
    s = ElectionState()
    s.setup(make_params(**kw))
    return s


@functools.lru_cache(maxsize=None)
def addr_of(sk):
    return wallet_address(SECP256K1.mul_base(sk))


# signing is deterministic, so repeated messages can share a signature
sign = functools.lru_cache(maxsize=None)(signing.sign)


def register(state, sk, valid=True):
    addr = addr_of(sk)
    state.registration(addr, valid, sign(EA_SK, registration_message(addr, valid)))
    return addr


def cast(state, sk, blinded, zkp=b""):
    addr = addr_of(sk)
    state.voting(addr, blinded, zkp, sign(sk, vote_message(addr, blinded, zkp)))


def plain(choice):
    return get_protocol("plaintext").blind(choice)


def close_epoch(state, height, target=EASY):
    state.bpo_add(target, HEADER, height, 6)
    state.vdf_add(CERT, height)
    return state.tally(height)


def test_setup():
    s = new_state(booth_grid=(2, 3))
    assert len(s.booths) == 6 and all(not b.votes for b in s.booths)
    assert s.winner == 2
    with pytest.raises(AlreadyInitialized):
        s.setup(make_params())
    with pytest.raises(NotInitialized):
        ElectionState().tally(0)


def test_param_invariants():
    with pytest.raises(ValueError):
        make_params(supermajority_threshold=0.4)
    with pytest.raises(ValueError):
        make_params(candidates=("A",), baseline_tally=(1,))
    with pytest.raises(ValueError):
        make_params(booth_grid=(0, 1))
    with pytest.raises(ValueError):
        make_params(protocol="nope")
    four = make_params(candidates=tuple("ABCD"), baseline_tally=(20, 15, 55, 10))
    assert four.k == 4 and four.supermajority_threshold == 0.70
    assert ElectionParams.from_dict(four.to_dict()) == four


def test_registration():
    s = new_state()
    addr = register(s, 11)
    assert s.registry[addr].status is AddressStatus.VALID
    before = s.state_hash()
    forged = signing.sign(12, registration_message(addr_of(13), True))
    with pytest.raises(BadSignature):
        s.registration(addr_of(13), True, signing.Signature(EA_PK, forged.r, forged.s))
    with pytest.raises(BadSignature):
        s.registration(addr_of(13), True, forged)
    assert s.state_hash() == before
    bad = register(s, 14, valid=False)
    assert s.registry[bad].status is AddressStatus.INVALID


def test_invalidating_a_voted_address_excludes_its_vote():
    s = new_state()
    a = register(s, 21)
    cast(s, 21, plain(0))
    register(s, 22)
    cast(s, 22, plain(1))
    register(s, 21, valid=False)
    assert s.registry[a].status is AddressStatus.INVALID
    assert s.events[-1]["notes"] == ["linkage-warning"]
    r = close_epoch(s, 1)
    assert r.totals == [0, 1, 0]
    with pytest.raises(IllegalTransition):
        register(s, 21)


def test_voting():
    s = new_state()
    a = register(s, 31)
    cast(s, 31, plain(1))
    assert s.registry[a].status is AddressStatus.VOTED
    assert s.booths[s.registry[a].booth].votes[a] == plain(1)
    before = s.state_hash()
    with pytest.raises(NotValidAddress):
        cast(s, 31, plain(0))
    with pytest.raises(NotValidAddress):
        cast(s, 32, plain(0))
    register(s, 33)
    with pytest.raises(BadProof):
        cast(s, 33, plain(3))
    with pytest.raises(BadSignature):
        # signed by a key whose address is not the voter's
        addr = addr_of(33)
        s.voting(addr, plain(0), b"", signing.sign(34, vote_message(addr, plain(0), b"")))
    assert s.registry[addr_of(33)].status is AddressStatus.VALID
    assert len(s.events) == 4 and s.events[-1]["op"] == "registration"
    assert before != s.state_hash()


def test_vdf_add():
    s = new_state()
    with pytest.raises(UnknownHeight):
        s.vdf_add(CERT, 5)
    s.bpo_add(EASY, HEADER, 5, 6)
    s.vdf_add(CERT, 5)
    assert s.validator.vdf_deposits[5] == CERT
    other = VdfCertificate(CERT.x, CERT.y, CERT.pi + 1, CERT.tl)
    s.vdf_add(other, 5)
    assert s.validator.vdf_deposits[5] == other
    assert s.tally(5) is None
    s.vdf_add(CERT, 5)
    assert s.tally(5) is not None


def test_bpo_add():
    s = new_state()
    s.bpo_add(EASY, HEADER, 10, 6)
    s.bpo_add(EASY, HEADER, 11, 9)
    with pytest.raises(StaleHeight):
        s.bpo_add(EASY, HEADER, 11, 6)
    with pytest.raises(StaleHeight):
        s.bpo_add(EASY, HEADER, 3, 6)
    with pytest.raises(ImmatureHeader):
        s.bpo_add(EASY, HEADER, 12, 5)
    assert s.validator.blockheight_stored == 11
    strided = new_state(schedule=EpochSchedule(8000, 8, 10, 100))
    with pytest.raises(StrideViolation):
        strided.bpo_add(EASY, HEADER, 150, 6)
    strided.bpo_add(EASY, HEADER, 200, 6)


def test_tally_preconditions():
    s = new_state()
    s.bpo_add(EASY, HEADER, 4, 6)
    with pytest.raises(MissingDeposit):
        s.tally(4)
    with pytest.raises(HeightMismatch):
        s.tally(3)


def test_tally_sums_booths():
    s = new_state(candidates=("A", "B"), baseline_tally=(1, 9), booth_grid=(3, 1))
    wanted = [[2, 1], [1, 1], [0, 2]]
    remaining = copy.deepcopy(wanted)
    sk = 100
    while any(sum(r) for r in remaining):
        sk += 1
        booth = s.registry[register(s, sk)].booth
        need = remaining[booth]
        if need[0] or need[1]:
            c = 0 if need[0] else 1
            need[c] -= 1
            cast(s, sk, plain(c))
    r = close_epoch(s, 1)
    assert r.per_booth == wanted
    assert r.totals == [3, 4] and r.turnout == 7


def test_not_triggered_keeps_votes():
    s = new_state()
    register(s, 41)
    cast(s, 41, plain(0))
    assert close_epoch(s, 1, target=1) is None
    assert sum(len(b.votes) for b in s.booths) == 1
    assert s.epoch == 0 and not s.history and s.events[-1]["op"] == "vdf_add"
    r = close_epoch(s, 2)
    assert r.totals == [1, 0, 0]


def test_winner_rule_examples():
    p = make_params(candidates=("A", "B", "C"), baseline_tally=(0, 0, 100))
    assert apply_winner_rule([70, 30, 0], 100, 2, p) == 0
    assert apply_winner_rule([69, 31, 0], 100, 2, p) == 2
    q = make_params(candidates=("A", "B", "C"), baseline_tally=(0, 0, 200))
    assert apply_winner_rule([100, 0, 0], 100, 2, q) == 2
    assert apply_winner_rule([140, 0, 0], 140, 2, q) == 0
    assert apply_winner_rule([0, 0, 0], 0, 2, p) == 2
    m = make_params(main_election=True)
    assert apply_winner_rule([51, 49, 0], 100, 2, m) == 0
    assert apply_winner_rule([50, 50, 0], 100, 2, m) == 2
    with pytest.raises(ValueError):
        apply_winner_rule([-1, 0, 0], 1, 2, p)


def test_winner_transition_in_state():
    s = new_state(candidates=("A", "B"), baseline_tally=(3, 7))
    for sk in range(1, 11):
        register(s, sk)
        cast(s, sk, plain(0 if sk <= 7 else 1))
    r = close_epoch(s, 1)
    assert (r.previous_winner, r.winner, r.changed) == (1, 0, True)
    assert s.winner == 0 and s.epoch == 1


def test_revote():
    s = new_state()
    chain = new_chain(random.Random(1))
    a0 = register(s, chain.sk0)
    cast(s, chain.sk0, plain(0))
    sk1 = derive_sk(chain, 1)
    a1 = addr_of(sk1)
    with pytest.raises(BadSignature):
        s.revote(a1, signing.sign(chain.sk0, revote_message(a1)))
    s.revote(a1, signing.sign(sk1, revote_message(a1)))
    assert s.registry[a1].status is AddressStatus.PENDING
    with pytest.raises(NotValidAddress):
        cast(s, sk1, plain(1))
    with pytest.raises(IllegalTransition):
        s.revote(a1, signing.sign(sk1, revote_message(a1)))
    register(s, sk1)
    # same interval: the EA drops the old address and the log records the linkage
    register(s, chain.sk0, valid=False)
    assert s.events[-1]["notes"] == ["linkage-warning"]
    cast(s, sk1, plain(1))
    r = close_epoch(s, 1)
    assert r.totals == [0, 1, 0]
    # next interval: revoting leaves the previous epoch's record alone
    sk2 = derive_sk(chain, 2)
    a2 = addr_of(sk2)
    s.revote(a2, signing.sign(sk2, revote_message(a2)))
    register(s, sk2)
    assert s.registry[a1].status is AddressStatus.VOTED
    assert s.registry[a0].status is AddressStatus.INVALID
    assert "notes" not in s.events[-1]


# -- exhaustive small-state model ------------------------------------------

N_PART, MAX_EPOCHS, MAX_E = 3, 3, 2
CHAINS = [new_chain(random.Random(100 + i)) for i in range(N_PART)]
KEYS = [[derive_sk(c, e) if e else c.sk0 for e in range(MAX_E + 1)] for c in CHAINS]


class Model:
    def __init__(self):
        self.state = new_state(booth_grid=(2, 1))
        self.e = [None] * N_PART          # current iteration, None before first registration
        self.voted_epoch = [None] * N_PART
        self.owner = {}
        self.height = 0

    def key(self):
        out = []
        for i in range(N_PART):
            e = self.e[i]
            status = None if e is None else self.state.registry[addr_of(KEYS[i][e])].status.value
            out.append((e, status, self.voted_epoch[i] == self.state.epoch))
        # participants are interchangeable, so states equal up to renaming coincide
        return self.state.epoch, tuple(sorted(out, key=repr))


def clone(m):
    rng = random.Random()
    rng.setstate(m.state._rng.getstate())
    # params are frozen and the rng state tuple is immutable; share rather than walk them
    memo = {id(m.state.params): m.state.params, id(m.state._rng): rng}
    return copy.deepcopy(m, memo)


def actions(m):
    acts = [("tally",)] if m.state.epoch < MAX_EPOCHS else []
    for i in range(N_PART):
        acts.append(("vote", i))
        if m.e[i] is not None and m.e[i] < MAX_E:
            acts.append(("revote", i))
        if m.e[i] is not None:
            acts.append(("invalidate", i))
    return acts


def step(m, act):
    s = m.state
    winner = s.winner
    s.events.clear()  # the log is not part of the model and only slows copying
    if act[0] == "tally":
        live = [a for b in s.booths for a in b.votes]
        m.height += 1
        r = close_epoch(s, m.height)
        # conservation and no double counting
        assert r.turnout + r.rejected == len(live) and r.rejected == 0
        owners = [m.owner[a] for a in live]
        assert len(owners) == len(set(owners))
        assert r.totals == [sum(col) for col in zip(*r.per_booth)]
        return
    i = act[1]
    if act[0] == "vote":
        if m.e[i] is None:
            m.e[i] = 0
            m.owner[register(s, KEYS[i][0])] = i
        sk = KEYS[i][m.e[i]]
        addr = addr_of(sk)
        if s.registry[addr].status is AddressStatus.VALID:
            cast(s, sk, plain(i % 3))
            m.voted_epoch[i] = s.epoch
        else:
            before = s.state_hash()
            with pytest.raises(NotValidAddress):
                cast(s, sk, plain(i % 3))
            assert s.state_hash() == before
    elif act[0] == "revote":
        old = addr_of(KEYS[i][m.e[i]])
        m.e[i] += 1
        sk = KEYS[i][m.e[i]]
        addr = addr_of(sk)
        s.revote(addr, sign(sk, revote_message(addr)))
        m.owner[register(s, sk)] = i
        if m.voted_epoch[i] == s.epoch:
            register(s, KEYS[i][m.e[i] - 1], valid=False)
            assert old not in s.booths[s.registry[old].booth].votes
    else:
        register(s, KEYS[i][m.e[i]], valid=False)
    assert s.winner == winner


def test_small_model_no_double_counting():
    root = Model()
    seen = {root.key()}
    queue = deque([root])
    transitions = 0
    while queue:
        m = queue.popleft()
        for act in actions(m):
            child = clone(m)
            step(child, act)
            transitions += 1
            k = child.key()
            if k not in seen:
                seen.add(k)
                queue.append(child)
    assert len(seen) > 1000
    assert transitions > 5 * len(seen)


# -- protocols -------------------------------------------------------------

def run_protocol(name, choices, seed):
    rng = random.Random(seed)
    s = new_state(protocol=name, booth_grid=(2, 2))
    proto = get_protocol(name)
    for j, c in enumerate(choices):
        sk = 1000 + j
        key = rng.randbytes(32)
        register(s, sk)
        blinded = proto.blind(c, key)
        cast(s, sk, blinded, proto.prove(c, key, 3))
        if name == "commit-reveal":
            s.submit_opening(addr_of(sk), c, key)
    return close_epoch(s, 1)


@settings(max_examples=15, deadline=None)
@given(st.lists(st.integers(0, 2), max_size=8), st.integers(0, 1000))
def test_protocol_equivalence(choices, seed):
    a = run_protocol("plaintext", choices, seed)
    b = run_protocol("commit-reveal", choices, seed)
    assert a.totals == b.totals
    assert a.per_booth == b.per_booth
    assert a.turnout == len(choices)


def test_commit_reveal_needs_opening():
    s = new_state(protocol="commit-reveal")
    proto = get_protocol("commit-reveal")
    register(s, 7)
    cast(s, 7, proto.blind(0, bytes(32)))
    register(s, 8)
    cast(s, 8, proto.blind(1, bytes(32)))
    s.submit_opening(addr_of(8), 0, bytes(32))
    with pytest.raises(NotValidAddress):
        s.submit_opening(addr_of(9), 0, bytes(32))
    r = close_epoch(s, 1)
    assert r.turnout == 0 and r.rejected == 2


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 5), st.binary(min_size=32, max_size=32), st.integers(0, 31),
       st.integers(1, 255))
def test_commit_reveal_tamper_evidence(choice, key, pos, flip):
    proto = CommitRevealProtocol()
    blinded = bytearray(proto.blind(choice, key))
    votes = {b"x": bytes(blinded)}
    openings = {b"x": (choice, key)}
    assert proto.booth_tally(votes, openings, 6) == ([int(c == choice) for c in range(6)], [])
    blinded[pos] ^= flip
    votes[b"x"] = bytes(blinded)
    assert proto.booth_tally(votes, openings, 6) == ([0] * 6, [b"x"])
