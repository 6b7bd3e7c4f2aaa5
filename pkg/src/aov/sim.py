"""Discrete-event simulation of block arrivals, epoch lengths, the mining
adversary and the VDF prover fleet. All time is simulated minutes."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Literal

import numpy as np
from scipy import stats

from .trigger import MINUTES_PER_YEAR, EpochSchedule, trigger_modulus

AdversaryMode = Literal["none", "retry-no-vdf", "withhold-with-vdf"]


class EmptySamples(ValueError):
    pass


@dataclass
class SimConfig:
    rng_seed: int = 0
    horizon: float = 4 * MINUTES_PER_YEAR
    block_time_mean: float = 10.0
    schedule: EpochSchedule = field(
        default_factory=lambda: EpochSchedule(total_time=4 * MINUTES_PER_YEAR, ft=8))
    adversary_share: float = 0.0
    adversary_mode: AdversaryMode = "none"
    a_max: int = 10
    prover_count: int = 10
    prover_job_minutes: float = 100.0
    retries: int | None = None
    blocks: int | None = None
    arrivals: Literal["deterministic", "poisson"] = "deterministic"
    maturity_lag: int = 6

    def __post_init__(self):
        if not 0.0 <= self.adversary_share < 1.0:
            raise ValueError("adversary_share must be in [0, 1)")
        if self.prover_count < 1:
            raise ValueError("prover_count must be >= 1")
        if self.adversary_mode not in ("none", "retry-no-vdf", "withhold-with-vdf"):
            raise ValueError(f"unknown adversary_mode {self.adversary_mode!r}")

    @property
    def retry_count(self) -> int:
        return self.retries if self.retries is not None else self.a_max

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        d = dict(d)
        if "schedule" in d and isinstance(d["schedule"], dict):
            d["schedule"] = EpochSchedule.from_dict(d["schedule"])
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class EpochSample:
    epoch_index: int
    length_blocks: int
    length_headers: int
    length_minutes: float
    triggered_by_adversary: bool = False


def _block_times(rng: np.random.Generator, mean: float, horizon: float) -> np.ndarray:
    est = int(horizon / mean * 1.1) + 64
    times = np.cumsum(rng.exponential(mean, size=est))
    while times[-1] < horizon:
        more = times[-1] + np.cumsum(rng.exponential(mean, size=est))
        times = np.concatenate([times, more])
    return times[times < horizon]


def run_epoch_sim(config: SimConfig) -> list[EpochSample]:
    """Completed epochs within the horizon for one benign run.

    Block heights start at 1; every ``stride``-th header is processed and
    reaches the validator ``maturity_lag`` blocks after it was mined.
    """
    if config.adversary_mode != "none":
        raise ValueError("run_epoch_sim models the benign chain; use run_adversary_sim")
    rng = np.random.default_rng(config.rng_seed)
    m = trigger_modulus(config.schedule)
    stride = config.schedule.stride
    times = _block_times(rng, config.block_time_mean, config.horizon)
    lag = config.maturity_lag
    # heights whose delivery (block h + lag) still falls inside the horizon
    deliverable = len(times) - lag
    heights = np.arange(stride, deliverable + 1, stride)
    fired = rng.integers(0, m, size=len(heights)) == 0
    samples = []
    prev_height, prev_time = 0, 0.0
    for h in heights[fired]:
        t = float(times[h - 1 + lag])
        samples.append(EpochSample(
            epoch_index=len(samples),
            length_blocks=int(h - prev_height),
            length_headers=int((h - prev_height) // stride),
            length_minutes=t - prev_time,
        ))
        prev_height, prev_time = int(h), t
    return samples


def run_epoch_sweep(config: SimConfig, runs: int) -> list[list[EpochSample]]:
    seeds = np.random.SeedSequence(config.rng_seed).generate_state(runs)
    out = []
    for s in seeds:
        cfg = SimConfig(**{**asdict(config), "schedule": config.schedule, "rng_seed": int(s)})
        out.append(run_epoch_sim(cfg))
    return out


@dataclass
class AdversaryReport:
    mode: str
    blocks: int
    adversary_blocks: int
    adversary_triggers: int
    honest_triggers: int
    excess_triggers: int
    withheld_blocks: int
    modulus: int
    retries: int
    adversary_trigger_rate: float
    baseline_rate: float
    rate_sigma: float
    per_won_block_rate: float
    per_won_block_expected: float
    adversary_trigger_share: float
    adversary_share: float

    def to_dict(self) -> dict:
        return asdict(self)


def run_adversary_sim(config: SimConfig) -> AdversaryReport:
    """Adversarial miner trying to end epochs early.

    retry-no-vdf: on each won block she checks up to ``retries`` nonces
    instantly and publishes a triggering one if any. withhold-with-vdf: the
    delay leaves her one evaluated candidate per won block, which she may
    withhold if it does not trigger.
    """
    if config.adversary_mode == "none":
        raise ValueError("adversary_mode must not be 'none'")
    rng = np.random.default_rng(config.rng_seed)
    m = trigger_modulus(config.schedule)
    alpha = config.adversary_share
    n = config.blocks if config.blocks is not None else len(
        _block_times(rng, config.block_time_mean, config.horizon))
    won = rng.random(n) < alpha
    n_adv = int(won.sum())
    honest_fire = rng.integers(0, m, size=n - n_adv) == 0
    retries = config.retry_count if config.adversary_mode == "retry-no-vdf" else 1
    tries = rng.integers(0, m, size=(n_adv, max(retries, 1))) == 0
    adv_fire = tries.any(axis=1)
    first_fire = tries[:, 0] if n_adv else np.zeros(0, dtype=bool)
    adv_triggers = int(adv_fire.sum())
    withheld = int((~adv_fire).sum()) if config.adversary_mode == "withhold-with-vdf" else 0
    honest_triggers = int(honest_fire.sum())
    baseline = alpha / m
    total = adv_triggers + honest_triggers
    return AdversaryReport(
        mode=config.adversary_mode,
        blocks=n,
        adversary_blocks=n_adv,
        adversary_triggers=adv_triggers,
        honest_triggers=honest_triggers,
        excess_triggers=int((adv_fire & ~first_fire).sum()),
        withheld_blocks=withheld,
        modulus=m,
        retries=retries,
        adversary_trigger_rate=adv_triggers / n if n else 0.0,
        baseline_rate=baseline,
        rate_sigma=math.sqrt(baseline * (1 - baseline) / n) if n else 0.0,
        per_won_block_rate=adv_triggers / n_adv if n_adv else 0.0,
        per_won_block_expected=1 - (1 - 1 / m) ** retries,
        adversary_trigger_share=adv_triggers / total if total else 0.0,
        adversary_share=alpha,
    )


@dataclass
class FleetStats:
    prover_count: int
    jobs: int
    max_queue_length: int
    max_wait_minutes: float
    final_queue_length: int
    utilization: list[float]
    busy_intervals: list[list[tuple[float, float]]]
    queue_lengths: list[int]

    def to_dict(self, include_series: bool = True) -> dict:
        d = asdict(self)
        if not include_series:
            d.pop("busy_intervals")
            d.pop("queue_lengths")
        return d


def run_prover_schedule(config: SimConfig) -> FleetStats:
    """FIFO dispatch of one VDF job per block to the first idle prover."""
    b, job, c = config.block_time_mean, config.prover_job_minutes, config.prover_count
    if config.arrivals == "deterministic":
        arrivals = np.arange(0.0, config.horizon, b)
    else:
        rng = np.random.default_rng(config.rng_seed)
        arrivals = np.concatenate([[0.0], _block_times(rng, b, config.horizon)])
    free_at = [0.0] * c
    intervals: list[list[tuple[float, float]]] = [[] for _ in range(c)]
    starts = np.empty(len(arrivals))
    for i, a in enumerate(arrivals):
        start = max(a, min(free_at))
        k = next(j for j in range(c) if free_at[j] <= start)
        free_at[k] = start + job
        intervals[k].append((float(start), float(start + job)))
        starts[i] = start
    waits = starts - arrivals
    # waiting jobs seen by each arrival (itself included when it cannot start)
    started = np.searchsorted(starts, arrivals, side="right")
    queue = np.arange(1, len(arrivals) + 1) - np.minimum(started, np.arange(1, len(arrivals) + 1))
    horizon = config.horizon
    util = [sum(max(0.0, min(e, horizon) - s) for s, e in iv) / horizon for iv in intervals]
    return FleetStats(
        prover_count=c,
        jobs=len(arrivals),
        max_queue_length=int(queue.max()) if len(queue) else 0,
        max_wait_minutes=float(waits.max()) if len(waits) else 0.0,
        final_queue_length=int((starts > horizon).sum()),
        utilization=util,
        busy_intervals=intervals,
        queue_lengths=[int(v) for v in queue],
    )


def min_provers_for_zero_queue(block_time: float, job_minutes: float) -> int:
    return math.ceil(job_minutes / block_time)


@dataclass
class EpochStats:
    count: int
    mean: float
    variance: float
    min: int
    max: int
    histogram: list[int]
    bin_edges: list[float]
    geometric_p: float
    chi_square: float
    p_value: float
    dof: int

    def to_dict(self) -> dict:
        return asdict(self)


def _geometric_bins(p: float, n: int) -> list[int]:
    """Lower edges of roughly equiprobable bins over {1, 2, ...}."""
    k = max(2, min(20, n // 5))
    qs = np.linspace(0, 1, k + 1)[1:-1]
    edges = sorted({1, *(int(stats.geom.ppf(q, p)) + 1 for q in qs)})
    return edges


def summarize(samples, p: float | None = None) -> EpochStats:
    """Descriptive statistics of epoch lengths (in processed headers) and a
    chi-square goodness-of-fit test against a geometric distribution.

    ``p`` defaults to the maximum-likelihood estimate 1/mean, in which case
    one degree of freedom is spent on the fit.
    """
    lengths = np.array([s.length_headers if isinstance(s, EpochSample) else int(s)
                        for s in samples])
    if len(lengths) == 0:
        raise EmptySamples("no epoch samples")
    mean = float(lengths.mean())
    fitted = p is None
    p_geo = min(1.0, 1.0 / mean) if fitted else p
    hist, edges = np.histogram(lengths, bins=min(20, max(1, len(np.unique(lengths)))))
    edges_lo = _geometric_bins(p_geo, len(lengths)) if p_geo < 1.0 else [1]
    if len(edges_lo) < 2:
        consistent = bool((lengths == 1).all()) if p_geo >= 1.0 else True
        chi2, pval, dof = 0.0, 1.0 if consistent else 0.0, 0
    else:
        bounds = edges_lo + [None]
        observed, expected = [], []
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            if hi is None:
                observed.append(int((lengths >= lo).sum()))
                expected.append(stats.geom.sf(lo - 1, p_geo))
            else:
                observed.append(int(((lengths >= lo) & (lengths < hi)).sum()))
                expected.append(stats.geom.cdf(hi - 1, p_geo) - stats.geom.cdf(lo - 1, p_geo))
        expected = np.array(expected) / np.sum(expected) * len(lengths)
        ddof = 1 if fitted else 0
        dof = len(observed) - 1 - ddof
        if dof < 1:
            chi2, pval = 0.0, 1.0
        else:
            res = stats.chisquare(observed, expected, ddof=ddof)
            chi2, pval = float(res.statistic), float(res.pvalue)
    return EpochStats(
        count=len(lengths),
        mean=mean,
        variance=float(lengths.var(ddof=1)) if len(lengths) > 1 else 0.0,
        min=int(lengths.min()),
        max=int(lengths.max()),
        histogram=[int(v) for v in hist],
        bin_edges=[float(v) for v in edges],
        geometric_p=float(p_geo),
        chi_square=chi2,
        p_value=pval,
        dof=dof,
    )
