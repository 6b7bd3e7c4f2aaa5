"""Request and response bodies for the HTTP service."""

from __future__ import annotations

from typing import Any, Literal

from pydantic import BaseModel, Field


class ErrorBody(BaseModel):
    error: str
    detail: str


class HeaderCheckRequest(BaseModel):
    hex: str
    nbits: str | None = None


class HeaderCheckResponse(BaseModel):
    hash: str
    version: int
    prev_hash: str
    merkle_root: str
    timestamp: int
    nbits: str
    nonce: int
    target: str
    pow: bool


class VdfRequest(BaseModel):
    n: str
    tl: int = Field(ge=1)
    prime_bits: int = 128
    x: str | None = None
    header: str | None = None
    y: str | None = None


class VdfEvalResponse(BaseModel):
    x: str
    y: str
    tl: int
    n: str
    squarings: int


class Certificate(BaseModel):
    x: str
    y: str
    pi: str
    tl: int
    n: str


class VdfVerifyRequest(BaseModel):
    cert: Certificate
    prime_bits: int = 128


class VdfVerifyResponse(BaseModel):
    valid: bool
    squarings: int
    multiplications: int


class TriggerVerifyRequest(BaseModel):
    header: str
    cert: Certificate
    schedule: dict[str, int]
    prime_bits: int = 128
    target: str | None = None


class TriggerVerdictBody(BaseModel):
    pow: bool
    vdf: bool
    b: int | None
    triggered: bool
    modulus: int
    error: str | None = None


class WalletDeriveRequest(BaseModel):
    e: int = Field(ge=0)
    side: Literal["ea", "participant"]
    record: dict[str, Any]


class WalletDeriveResponse(BaseModel):
    e: int
    side: str
    curve: str
    address: str
    public_key: str
    secret_key: str | None = None


class BoothSizeRequest(BaseModel):
    electorate: int = Field(ge=1)
    p: float = Field(ge=0, le=1)
    bound: float = Field(gt=0)
    mode: Literal["paper", "generalized"] = "paper"


class BoothSizeResponse(BaseModel):
    booth_size: int
    booths: int
    expected_exposed: float
    unanimity_probability: float


class BoothPmfRequest(BaseModel):
    n: int = Field(ge=0, le=100_000)
    p: float = Field(ge=0, le=1)


class BoothPmfResponse(BaseModel):
    n: int
    p: float
    points: list[tuple[int, float]]
    total: float


class SimRequest(BaseModel):
    config: dict[str, Any] = {}
    runs: int = Field(1, ge=1, le=10_000)


class SimResponse(BaseModel):
    kind: str
    report: dict[str, Any]
    columns: list[str]
    rows: list[list[Any]]


class ElectionRunRequest(BaseModel):
    scenario: dict[str, Any] | None = None
    bundled: str | None = None
    seed: int | None = None


class ElectionRunResponse(BaseModel):
    scenario: str
    final_state_hash: str
    winner: str
    epochs: int
    aborted: dict[str, Any] | None
    warnings: list[dict[str, Any]]
    candidates: list[str]
    tallies: list[dict[str, Any]]
    tallies_csv: str
    events: list[dict[str, Any]]


class ReplayRequest(BaseModel):
    events: list[dict[str, Any]]
    expected_hash: str | None = None


class ReplayResponse(BaseModel):
    final_state_hash: str
    events: int
    matches: bool | None = None


class SessionCreated(BaseModel):
    id: str


class OperationRequest(BaseModel):
    op: str
    args: dict[str, Any]


class SessionView(BaseModel):
    id: str
    epoch: int
    winner: int | None
    state_hash: str
    events: int
    last_event: dict[str, Any] | None = None
