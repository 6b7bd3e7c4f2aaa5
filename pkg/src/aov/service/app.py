"""HTTP surface over the core library.

Stateless endpoints wrap the pure modules. Live elections are kept in memory
per session; each session serializes its writers behind one lock.
"""

from __future__ import annotations

import json
import threading
import uuid
from dataclasses import asdict

from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse

from .. import booth_privacy, scenario as scen, sim
from ..btc_header import BlockHeader, block_hash_hex, check_pow, decode_nbits
from ..contracts import ContractError, ElectionState
from ..trigger import EpochSchedule, MismatchedInput, evaluate_trigger, trigger_modulus
from ..vdf import OpCounter, VdfCertificate, VdfParams, eval_vdf, hash_to_group, prove, verify
from ..wallet import (
    SyncRecord, WalletChain, derive_pk_ea, derive_sk, wallet_address,
)
from . import models as m

app = FastAPI(title="aov", version="0.1.0")


class Conflict(Exception):
    def __init__(self, error: str, detail: str):
        self.error, self.detail = error, detail


@app.exception_handler(ValueError)
async def _invalid(request: Request, exc: ValueError):
    return JSONResponse(status_code=422,
                        content={"error": type(exc).__name__, "detail": str(exc)})


@app.exception_handler(Conflict)
async def _conflict(request: Request, exc: Conflict):
    return JSONResponse(status_code=409, content={"error": exc.error, "detail": exc.detail})


@app.get("/health")
def health():
    return {"status": "ok"}


# -- headers ------------------------------------------------------------------


@app.post("/header/check", response_model=m.HeaderCheckResponse)
def header_check(req: m.HeaderCheckRequest):
    h = BlockHeader.from_hex(req.hex.strip())
    nbits = int(req.nbits, 16) if req.nbits else h.nbits
    target = decode_nbits(nbits)
    return m.HeaderCheckResponse(
        hash=block_hash_hex(h), version=h.version, prev_hash=h.prev_hash[::-1].hex(),
        merkle_root=h.merkle_root[::-1].hex(), timestamp=h.timestamp,
        nbits=f"0x{nbits:08x}", nonce=h.nonce, target=f"{target.value:064x}",
        pow=check_pow(h, target),
    )


# -- vdf ----------------------------------------------------------------------


def _vdf_input(req: m.VdfRequest) -> tuple[VdfParams, int]:
    params = VdfParams(int(req.n), req.tl, req.prime_bits)
    if (req.x is None) == (req.header is None):
        raise ValueError("give exactly one of x or header")
    if req.header is not None:
        return params, hash_to_group(BlockHeader.from_hex(req.header).encode(), params)
    x = int(req.x)
    if not 1 < x < params.modulus:
        raise ValueError("x must lie in [2, n-1]")
    return params, x


@app.post("/vdf/eval", response_model=m.VdfEvalResponse)
def vdf_eval(req: m.VdfRequest):
    params, x = _vdf_input(req)
    counter = OpCounter()
    y = eval_vdf(x, params, counter)
    return m.VdfEvalResponse(x=str(x), y=str(y), tl=params.tl, n=str(params.modulus),
                             squarings=counter.squarings)


@app.post("/vdf/prove", response_model=m.Certificate)
def vdf_prove(req: m.VdfRequest):
    params, x = _vdf_input(req)
    if req.y is None:
        y, pi = eval_vdf(x, params), None
    else:
        y = int(req.y)
        pi = prove(x, y, params, check=True)
    cert = VdfCertificate(x, y, pi if pi is not None else prove(x, y, params), params.tl)
    return m.Certificate(**cert.to_dict(params))


@app.post("/vdf/verify", response_model=m.VdfVerifyResponse)
def vdf_verify(req: m.VdfVerifyRequest):
    c = req.cert
    params = VdfParams(int(c.n), c.tl, req.prime_bits)
    counter = OpCounter()
    ok = verify(VdfCertificate.from_dict(c.model_dump()), params, counter=counter)
    return m.VdfVerifyResponse(valid=ok, squarings=counter.squarings,
                               multiplications=counter.multiplications)


# -- trigger ------------------------------------------------------------------


@app.post("/trigger/verify", response_model=m.TriggerVerdictBody)
def trigger_verify(req: m.TriggerVerifyRequest):
    header = BlockHeader.from_hex(req.header.strip())
    params = VdfParams(int(req.cert.n), req.cert.tl, req.prime_bits)
    schedule = EpochSchedule.from_dict(req.schedule)
    target = int(req.target, 16) if req.target else decode_nbits(header.nbits)
    cert = VdfCertificate.from_dict(req.cert.model_dump())
    try:
        v = evaluate_trigger(cert, params, header, target, schedule)
    except MismatchedInput as e:
        return m.TriggerVerdictBody(pow=check_pow(header, target), vdf=False, b=None,
                                    triggered=False, modulus=trigger_modulus(schedule),
                                    error=str(e))
    return m.TriggerVerdictBody(**v.to_dict(), modulus=trigger_modulus(schedule))


# -- wallet -------------------------------------------------------------------


@app.post("/wallet/derive", response_model=m.WalletDeriveResponse)
def wallet_derive(req: m.WalletDeriveRequest):
    try:
        if req.side == "participant":
            chain = WalletChain.from_dict(req.record)
            curve = chain.curve
            sk = chain.sk0 if req.e == 0 else derive_sk(chain, req.e)
            pk = curve.mul_base(sk)
        else:
            rec = SyncRecord.from_dict(req.record)
            curve, sk = rec.curve, None
            pk = rec.pk0 if req.e == 0 else derive_pk_ea(rec, req.e)
    except KeyError as e:
        raise ValueError(f"record is missing field {e}") from None
    return m.WalletDeriveResponse(
        e=req.e, side=req.side, curve=curve.name,
        address=wallet_address(pk, curve).hex(), public_key=curve.compress(pk).hex(),
        secret_key=None if sk is None else f"{sk:x}",
    )


# -- booth privacy ------------------------------------------------------------


@app.post("/booth/size", response_model=m.BoothSizeResponse)
def booth_size(req: m.BoothSizeRequest):
    try:
        n = booth_privacy.recommend_booth_size(req.electorate, req.p, req.bound, req.mode)
    except booth_privacy.Unsatisfiable as e:
        raise Conflict("Unsatisfiable", str(e)) from None
    return m.BoothSizeResponse(
        booth_size=n, booths=booth_privacy.booth_count(req.electorate, n),
        expected_exposed=booth_privacy.expected_exposed_booths(req.electorate, n, req.p, req.mode),
        unanimity_probability=booth_privacy.all_same_prob(n, req.p, req.mode),
    )


@app.post("/booth/pmf", response_model=m.BoothPmfResponse)
def booth_pmf(req: m.BoothPmfRequest):
    points = booth_privacy.pmf_curve(req.n, req.p)
    return m.BoothPmfResponse(n=req.n, p=req.p, points=points,
                              total=booth_privacy.pmf_total(req.n, req.p))


# -- simulation ---------------------------------------------------------------


def _sim_config(req: m.SimRequest) -> sim.SimConfig:
    try:
        return sim.SimConfig.from_dict(req.config)
    except TypeError as e:
        raise ValueError(f"bad sim config: {e}") from None


@app.post("/sim/epochs", response_model=m.SimResponse)
def sim_epochs(req: m.SimRequest):
    cfg = _sim_config(req)
    runs = sim.run_epoch_sweep(cfg, req.runs)
    rows = [[r, s.epoch_index, s.length_blocks, s.length_headers, s.length_minutes]
            for r, samples in enumerate(runs) for s in samples]
    pooled = [s for samples in runs for s in samples]
    report = {"runs": req.runs, "modulus": trigger_modulus(cfg.schedule),
              "epochs_per_run": [len(r) for r in runs],
              "mean_epochs_per_run": sum(len(r) for r in runs) / req.runs}
    if pooled:
        report["stats"] = sim.summarize(pooled).to_dict()
    return m.SimResponse(kind="epochs", report=report,
                         columns=["run", "epoch", "length_blocks", "length_headers",
                                  "length_minutes"], rows=rows)


@app.post("/sim/adversary", response_model=m.SimResponse)
def sim_adversary(req: m.SimRequest):
    cfg = _sim_config(req)
    if cfg.adversary_mode == "none":
        raise ValueError("adversary_mode must be retry-no-vdf or withhold-with-vdf")
    report = sim.run_adversary_sim(cfg).to_dict()
    return m.SimResponse(kind="adversary", report=report, columns=list(report),
                         rows=[list(report.values())])


@app.post("/sim/provers", response_model=m.SimResponse)
def sim_provers(req: m.SimRequest):
    cfg = _sim_config(req)
    stats = sim.run_prover_schedule(cfg)
    report = stats.to_dict(include_series=False)
    report["min_provers_for_zero_queue"] = sim.min_provers_for_zero_queue(
        cfg.block_time_mean, cfg.prover_job_minutes)
    rows = [[k, s, e] for k, iv in enumerate(stats.busy_intervals) for s, e in iv]
    rows.sort(key=lambda r: (r[1], r[0]))
    return m.SimResponse(kind="provers", report=report, columns=["prover", "start", "end"],
                         rows=rows)


# -- elections ----------------------------------------------------------------


@app.post("/election/run", response_model=m.ElectionRunResponse)
def election_run(req: m.ElectionRunRequest):
    if (req.scenario is None) == (req.bundled is None):
        raise ValueError("give exactly one of scenario or bundled")
    if req.bundled is not None:
        path = scen.bundled_scenario_path(req.bundled)
        if not path.exists():
            raise ValueError(f"no bundled scenario {req.bundled!r}")
        s = scen.load_scenario(path)
    else:
        s = scen.parse_scenario(json.dumps(req.scenario, indent=1))
    result = scen.run_scenario(s, seed=req.seed)
    d = result.to_dict()
    return m.ElectionRunResponse(**d, tallies_csv=scen.tallies_csv(result))


@app.post("/election/replay", response_model=m.ReplayResponse)
def election_replay(req: m.ReplayRequest):
    try:
        h = scen.replay(req.events)
    except scen.DivergenceAt as e:
        raise Conflict("DivergenceAt", str(e)) from None
    matches = None if req.expected_hash is None else h == req.expected_hash
    return m.ReplayResponse(final_state_hash=h, events=len(req.events), matches=matches)


class _Session:
    def __init__(self):
        self.state = ElectionState()
        self.lock = threading.Lock()


_sessions: dict[str, _Session] = {}
_sessions_lock = threading.Lock()


def _session(sid: str) -> _Session:
    s = _sessions.get(sid)
    if s is None:
        raise HTTPException(status_code=404, detail=f"no election {sid}")
    return s


def _view(sid: str, s: _Session) -> m.SessionView:
    st = s.state
    return m.SessionView(id=sid, epoch=st.epoch, winner=st.winner, state_hash=st.state_hash(),
                         events=len(st.events), last_event=st.events[-1] if st.events else None)


@app.post("/elections", response_model=m.SessionCreated, status_code=201)
def create_election():
    sid = uuid.uuid4().hex
    with _sessions_lock:
        _sessions[sid] = _Session()
    return m.SessionCreated(id=sid)


@app.get("/elections/{sid}", response_model=m.SessionView)
def get_election(sid: str):
    s = _session(sid)
    with s.lock:
        return _view(sid, s)


@app.get("/elections/{sid}/events")
def get_events(sid: str, since: int = 0):
    s = _session(sid)
    with s.lock:
        return s.state.events[since:]


@app.post("/elections/{sid}/ops", response_model=m.SessionView)
def apply_op(sid: str, req: m.OperationRequest):
    s = _session(sid)
    with s.lock:
        try:
            result = s.state.apply(req.op, req.args)
        except ContractError as e:
            raise Conflict(type(e).__name__, str(e)) from None
        except (KeyError, TypeError) as e:
            raise ValueError(f"bad arguments for {req.op}: {e}") from None
        view = _view(sid, s)
    if result is not None and hasattr(result, "to_dict"):
        view.last_event = {**(view.last_event or {}), "result": result.to_dict()}
    return view


@app.post("/elections/{sid}/check-trigger")
def check_trigger(sid: str, height: int):
    s = _session(sid)
    with s.lock:
        try:
            return asdict(s.state.check_trigger(height))
        except ContractError as e:
            raise Conflict(type(e).__name__, str(e)) from None


@app.delete("/elections/{sid}", status_code=204)
def delete_election(sid: str):
    with _sessions_lock:
        if _sessions.pop(sid, None) is None:
            raise HTTPException(status_code=404, detail=f"no election {sid}")
