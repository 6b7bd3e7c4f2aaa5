"""Command-line client. Talks to a running service given by --server or
AOV_SERVER, otherwise to an in-process instance of the same app.

Exit codes: 0 success, 1 verification failure, 2 invalid input.
"""

from __future__ import annotations

import csv
import json
import os
import random
import sys
import warnings
from pathlib import Path

import click

from . import scenario as scen
from .btc_header import read_header_file
from .vdf import generate_modulus
from .wallet import new_chain

EXIT_OK, EXIT_FAIL, EXIT_INVALID = 0, 1, 2


class Client:
    def __init__(self, server: str | None):
        if server:
            import httpx
            self._http = httpx.Client(base_url=server, timeout=600)
        else:
            with warnings.catch_warnings():
                # starlette nags about its httpx backend on import
                warnings.simplefilter("ignore")
                from fastapi.testclient import TestClient
            from .service import app
            self._http = TestClient(app, raise_server_exceptions=False)

    def post(self, path: str, body: dict) -> tuple[int, dict]:
        try:
            r = self._http.post(path, json=body)
        except Exception as e:  # transport failures
            _die(f"cannot reach service: {e}", EXIT_INVALID)
        try:
            data = r.json()
        except ValueError:
            data = {"error": "BadResponse", "detail": r.text}
        return r.status_code, data


def _die(msg: str, code: int):
    click.echo(f"error: {msg}", err=True)
    sys.exit(code)


def _call(ctx, path: str, body: dict) -> dict:
    status, data = ctx.obj.post(path, body)
    if status == 200 or status == 201:
        return data
    detail = data.get("detail", data)
    if isinstance(detail, list):  # pydantic validation list
        detail = "; ".join(f"{'.'.join(map(str, d.get('loc', [])))}: {d.get('msg')}"
                           for d in detail)
    label = data.get("error", f"HTTP {status}")
    _die(f"{label}: {detail}", EXIT_FAIL if status == 409 else EXIT_INVALID)


def _load_json(path) -> dict | list:
    try:
        return json.loads(Path(path).read_text())
    except OSError as e:
        _die(f"{path}: {e.strerror}", EXIT_INVALID)
    except json.JSONDecodeError as e:
        _die(f"{path}:{e.lineno}:{e.colno}: {e.msg}", EXIT_INVALID)


def _emit(obj) -> None:
    click.echo(json.dumps(obj, indent=2, sort_keys=True))


def _write_csv(path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        w.writerows(rows)


@click.group()
@click.option("--server", envvar="AOV_SERVER", default=None,
              help="Base URL of a running service; in-process when omitted.")
@click.pass_context
def main(ctx, server):
    """Always-on voting toolkit."""
    ctx.obj = Client(server)


# -- election -----------------------------------------------------------------


@main.group()
def election():
    """Run and replay scripted elections."""


def _env_seed(seed):
    if seed is not None:
        return seed
    raw = os.environ.get("AOV_SEED")
    if raw is None:
        return None
    try:
        return int(raw)
    except ValueError:
        _die(f"AOV_SEED must be an integer, got {raw!r}", EXIT_INVALID)


@election.command("run")
@click.option("--scenario", "scenario_path", required=True, type=click.Path(dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--seed", type=int, default=None, help="Overrides rng_seed (as does AOV_SEED).")
@click.pass_context
def election_run(ctx, scenario_path, out_dir, seed):
    """Run a scenario and write events.jsonl, tallies.csv/json and final_state.json."""
    path = Path(scenario_path)
    try:
        text = path.read_text()
    except OSError as e:
        _die(f"{path}: {e.strerror}", EXIT_INVALID)
    try:
        s = scen.parse_scenario(text, str(path))
    except scen.ScenarioInvalid as e:
        _die(str(e), EXIT_INVALID)
    body = s.model_dump(mode="json")
    if s.headers.file is not None:
        # the service cannot see client files; ship the headers inline
        hp = Path(s.headers.file)
        hp = hp if hp.is_absolute() else path.parent / hp
        try:
            headers = read_header_file(hp)
        except (OSError, ValueError) as e:
            _die(f"{hp}: {e}", EXIT_INVALID)
        body["headers"] = {"fixtures": [h.hex() for h in headers]}
    data = _call(ctx, "/election/run", {"scenario": body, "seed": _env_seed(seed)})
    out = scen.write_artifacts(data, out_dir)
    _emit({k: data[k] for k in ("scenario", "final_state_hash", "winner", "epochs", "aborted")}
          | {"events": len(data["events"]), "out": str(out)})
    if data["aborted"]:
        sys.exit(EXIT_FAIL)


@election.command("replay")
@click.option("--log", "log_path", required=True, type=click.Path(exists=True),
              help="events.jsonl, or a run directory containing it.")
@click.option("--expect", default=None, help="Expected final state hash.")
@click.pass_context
def election_replay(ctx, log_path, expect):
    """Re-execute an event log and check every recorded state hash."""
    path = Path(log_path)
    if path.is_dir():
        final = path / "final_state.json"
        if expect is None and final.exists():
            expect = _load_json(final).get("final_state_hash")
        path = path / "events.jsonl"
    try:
        events = scen.read_event_log(path)
    except (OSError, ValueError) as e:
        _die(str(e), EXIT_INVALID)
    data = _call(ctx, "/election/replay", {"events": events, "expected_hash": expect})
    _emit(data)
    if data.get("matches") is False:
        sys.exit(EXIT_FAIL)


# -- trigger / vdf / header -----------------------------------------------------


@main.group()
def trigger():
    """Epoch-end trigger checks."""


@trigger.command("verify")
@click.option("--header", required=True, help="80-byte header as 160 hex characters.")
@click.option("--cert", "cert_path", required=True, type=click.Path(dir_okay=False))
@click.option("--schedule", "schedule_path", required=True, type=click.Path(dir_okay=False))
@click.option("--prime-bits", default=128, show_default=True)
@click.option("--target", default=None, help="Override the target (hex); default from nBits.")
@click.pass_context
def trigger_verify(ctx, header, cert_path, schedule_path, prime_bits, target):
    """Print {pow, vdf, b, triggered}; exit 0 only if the header ends the epoch."""
    body = {"header": header, "cert": _load_json(cert_path),
            "schedule": _load_json(schedule_path), "prime_bits": prime_bits, "target": target}
    data = _call(ctx, "/trigger/verify", body)
    _emit(data)
    sys.exit(EXIT_OK if data["triggered"] else EXIT_FAIL)


@main.group()
def vdf():
    """Wesolowski delay function over an RSA modulus."""


def _vdf_options(f):
    f = click.option("--n", "modulus", required=True, help="RSA modulus (decimal).")(f)
    f = click.option("--tl", required=True, type=int, help="Number of squarings.")(f)
    f = click.option("--x", default=None, help="Input element (decimal).")(f)
    f = click.option("--header", default=None, help="Derive x from this header (hex).")(f)
    f = click.option("--prime-bits", default=128, show_default=True)(f)
    return f


def _vdf_body(modulus, tl, x, header, prime_bits, **extra):
    return {"n": modulus, "tl": tl, "x": x, "header": header, "prime_bits": prime_bits, **extra}


@vdf.command("eval")
@_vdf_options
@click.pass_context
def vdf_eval(ctx, modulus, tl, x, header, prime_bits):
    """Compute y = x^(2^tl) mod n by repeated squaring."""
    _emit(_call(ctx, "/vdf/eval", _vdf_body(modulus, tl, x, header, prime_bits)))


@vdf.command("prove")
@_vdf_options
@click.option("--y", default=None, help="Known output; evaluated when omitted.")
@click.option("--out", default=None, type=click.Path(dir_okay=False))
@click.pass_context
def vdf_prove(ctx, modulus, tl, x, header, prime_bits, y, out):
    """Produce a certificate {x, y, pi, tl, n}."""
    cert = _call(ctx, "/vdf/prove", _vdf_body(modulus, tl, x, header, prime_bits, y=y))
    if out:
        Path(out).write_text(json.dumps(cert, indent=2, sort_keys=True) + "\n")
    _emit(cert)


@vdf.command("verify")
@click.option("--cert", "cert_path", required=True, type=click.Path(dir_okay=False))
@click.option("--prime-bits", default=128, show_default=True)
@click.pass_context
def vdf_verify(ctx, cert_path, prime_bits):
    """Check a certificate; exit 1 if it does not verify."""
    data = _call(ctx, "/vdf/verify", {"cert": _load_json(cert_path), "prime_bits": prime_bits})
    _emit(data)
    sys.exit(EXIT_OK if data["valid"] else EXIT_FAIL)


@vdf.command("modulus")
@click.option("--bits", default=256, show_default=True)
@click.option("--seed", default=0, show_default=True)
def vdf_modulus(bits, seed):
    """Print a fresh test modulus (factors discarded)."""
    if bits < 16:
        _die("bits must be >= 16", EXIT_INVALID)
    click.echo(generate_modulus(bits, random.Random(seed)))


@main.group()
def header():
    """Bitcoin block header utilities."""


@header.command("check")
@click.option("--hex", "hex_", required=True, help="80-byte header as 160 hex characters.")
@click.option("--nbits", default=None, help="Compact target, e.g. 1d00ffff; default from header.")
@click.pass_context
def header_check(ctx, hex_, nbits):
    """Decode a header and test its proof of work."""
    data = _call(ctx, "/header/check", {"hex": hex_, "nbits": nbits})
    _emit(data)
    sys.exit(EXIT_OK if data["pow"] else EXIT_FAIL)


# -- wallet -----------------------------------------------------------------------


@main.group()
def wallet():
    """Per-epoch wallet derivation."""


@wallet.command("derive")
@click.option("--e", "e", required=True, type=int, help="Iteration index.")
@click.option("--side", required=True, type=click.Choice(["ea", "participant"]))
@click.option("--record", "record_path", required=True, type=click.Path(dir_okay=False),
              help="Sync file {pk0, hk, g, p} for ea; chain file for participant.")
@click.pass_context
def wallet_derive(ctx, e, side, record_path):
    """Derive the wallet for iteration e from one side's view."""
    _emit(_call(ctx, "/wallet/derive",
                {"e": e, "side": side, "record": _load_json(record_path)}))


@wallet.command("new")
@click.option("--seed", type=int, default=None)
@click.option("--chain", "chain_out", required=True, type=click.Path(dir_okay=False))
@click.option("--sync", "sync_out", required=True, type=click.Path(dir_okay=False))
def wallet_new(seed, chain_out, sync_out):
    """Create a participant chain file and the matching sync file for the EA."""
    rng = random.Random(seed) if seed is not None else random.SystemRandom()
    chain = new_chain(rng)
    Path(chain_out).write_text(json.dumps(chain.to_dict(), indent=2) + "\n")
    Path(sync_out).write_text(json.dumps(chain.sync_record().to_dict(), indent=2) + "\n")
    _emit({"address": chain.sync_record().w0.hex()})


# -- booth privacy ------------------------------------------------------------------


@main.command("booth-size")
@click.option("--electorate", required=True, type=int)
@click.option("--p", "p", required=True, type=float, help="Probability of the favourite.")
@click.option("--bound", required=True, type=float, help="Max expected unanimous booths.")
@click.option("--mode", type=click.Choice(["paper", "generalized"]), default="paper",
              show_default=True)
@click.pass_context
def booth_size(ctx, electorate, p, bound, mode):
    """Smallest booth size keeping expected unanimous booths within bound."""
    _emit(_call(ctx, "/booth/size",
                {"electorate": electorate, "p": p, "bound": bound, "mode": mode}))


@main.command("booth-pmf")
@click.option("--n", "n", required=True, type=int)
@click.option("--p", "p", required=True, type=float)
@click.option("--csv", "csv_path", required=True, type=click.Path(dir_okay=False))
@click.pass_context
def booth_pmf(ctx, n, p, csv_path):
    """Write the binomial (x, pmf) curve for one booth."""
    data = _call(ctx, "/booth/pmf", {"n": n, "p": p})
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "pmf"])
        for x, v in data["points"]:
            w.writerow([x, repr(v)])
    _emit({"n": n, "p": p, "total": data["total"], "csv": csv_path})


# -- simulation ---------------------------------------------------------------------


@main.command("sim")
@click.argument("kind", type=click.Choice(["epochs", "adversary", "provers"]))
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False))
@click.option("--csv", "csv_path", required=True, type=click.Path(dir_okay=False))
@click.option("--report", "report_path", default=None, type=click.Path(dir_okay=False),
              help="Also write the JSON report here.")
@click.pass_context
def sim_cmd(ctx, kind, config_path, csv_path, report_path):
    """Run a simulation; rows go to CSV, the report to stdout."""
    cfg = _load_json(config_path)
    if not isinstance(cfg, dict):
        _die(f"{config_path}: expected a JSON object", EXIT_INVALID)
    if "params" in cfg and "script" in cfg:
        # a scenario file: use its sim section
        if not isinstance(cfg.get("sim"), dict):
            _die(f"{config_path}: scenario has no sim section", EXIT_INVALID)
        cfg = cfg["sim"]
    cfg = dict(cfg)
    runs = cfg.pop("runs", 1)
    if os.environ.get("AOV_SEED"):
        cfg["rng_seed"] = _env_seed(None)
    data = _call(ctx, f"/sim/{kind}", {"config": cfg, "runs": runs})
    _write_csv(csv_path, data["columns"], data["rows"])
    if report_path:
        Path(report_path).write_text(json.dumps(data["report"], indent=2, sort_keys=True) + "\n")
    _emit(data["report"])


@main.command("serve")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
def serve(host, port):
    """Run the HTTP service."""
    import uvicorn

    uvicorn.run("aov.service:app", host=host, port=port)


if __name__ == "__main__":
    main()
