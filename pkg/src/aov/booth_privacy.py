"""How often does a randomly filled booth vote unanimously, and how large
must booths be to keep the expected number of such booths under a bound?"""

from __future__ import annotations

import math
from typing import Literal

Mode = Literal["paper", "generalized"]

# exact integer binomials keep sum-to-one within ~1e-14 at n = 1000;
# lgamma alone drifts to ~4e-13 there
_EXACT_COMB_LIMIT = 2000


class Unsatisfiable(ValueError):
    pass


def binom_pmf(n: int, x: int, p: float) -> float:
    if not 0 <= x <= n:
        raise ValueError(f"x={x} outside [0, {n}]")
    if p <= 0.0:
        return 1.0 if x == 0 else 0.0
    if p >= 1.0:
        return 1.0 if x == n else 0.0
    if n <= _EXACT_COMB_LIMIT:
        log_c = math.log(math.comb(n, x))
    else:
        log_c = math.lgamma(n + 1) - math.lgamma(x + 1) - math.lgamma(n - x + 1)
    return math.exp(log_c + x * math.log(p) + (n - x) * math.log1p(-p))


def pmf_curve(n: int, p: float) -> list[tuple[int, float]]:
    return [(x, binom_pmf(n, x, p)) for x in range(n + 1)]


def pmf_total(n: int, p: float) -> float:
    return math.fsum(v for _, v in pmf_curve(n, p))


def all_same_prob(n: int, p: float, mode: Mode = "paper") -> float:
    """Probability that all ``n`` booth members voted alike.

    ``paper`` counts only unanimity for the favourite (p^n); ``generalized``
    also counts unanimity against it.
    """
    prob = binom_pmf(n, n, p)
    if mode == "generalized":
        prob += binom_pmf(n, 0, p)
    elif mode != "paper":
        raise ValueError(f"unknown mode {mode!r}")
    return prob


def booth_count(electorate: int, n: int) -> int:
    return -(-electorate // n)


def expected_exposed_booths(electorate: int, n: int, p: float, mode: Mode = "paper") -> float:
    return booth_count(electorate, n) * all_same_prob(n, p, mode)


def recommend_booth_size(electorate: int, p: float, max_expected_exposed: float,
                         mode: Mode = "paper") -> int:
    """Smallest booth size whose expected number of unanimous booths is within bound.

    Relies on the expectation being non-increasing in the booth size.
    """
    if max_expected_exposed <= 0:
        raise ValueError("bound must be positive")

    def ok(n: int) -> bool:
        return expected_exposed_booths(electorate, n, p, mode) <= max_expected_exposed

    if not ok(electorate):
        raise Unsatisfiable(
            f"no booth size <= {electorate} keeps expected exposure <= {max_expected_exposed}")
    hi = 1
    while not ok(hi):
        hi = min(2 * hi, electorate)
    lo = hi // 2  # ok(lo) is False unless hi == 1
    if hi == 1:
        return 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi
