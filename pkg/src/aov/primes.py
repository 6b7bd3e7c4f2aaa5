import math
import random

SMALL_PRIMES = [p for p in range(3, 2000) if all(p % d for d in range(2, int(p ** 0.5) + 1))]
# deterministic witness set: the first 64 primes
_WITNESSES = [2] + SMALL_PRIMES[:63]
_DETERMINISTIC_BOUND = 3317044064679887385961981
# one gcd against this product replaces trial division by every small prime
_SMALL_PRODUCT = math.prod(SMALL_PRIMES)
_SMALL_SET = frozenset(SMALL_PRIMES)


def miller_rabin(n: int, rounds: int = 64) -> bool:
    if n < 2:
        return False
    if n in (2, 3):
        return True
    if n % 2 == 0:
        return False
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    # the first 13 prime bases already decide every n below this bound exactly,
    # so further rounds cannot change the answer
    if n < _DETERMINISTIC_BOUND:
        rounds = min(rounds, 13)
    for a in _WITNESSES[:rounds]:
        a %= n
        if a in (0, 1, n - 1):
            continue
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def is_probable_prime(n: int, rounds: int = 64) -> bool:
    if n < 2:
        return False
    if n <= SMALL_PRIMES[-1]:
        return n == 2 or n in _SMALL_SET
    if n % 2 == 0 or math.gcd(n, _SMALL_PRODUCT) != 1:
        return False
    return miller_rabin(n, rounds)


def next_prime(n: int, rounds: int = 64) -> int:
    """Smallest probable prime >= n (odd candidates only once n > 2)."""
    if n <= 2:
        return 2
    if n % 2 == 0:
        n += 1
    while not is_probable_prime(n, rounds):
        n += 2
    return n


def random_prime(bits: int, rng: random.Random) -> int:
    while True:
        candidate = rng.getrandbits(bits) | (1 << (bits - 1)) | 1
        if is_probable_prime(candidate):
            return candidate
