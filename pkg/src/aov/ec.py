"""Short-Weierstrass curve arithmetic (y^2 = x^3 + ax + b over F_p).

Points are affine ``(x, y)`` tuples; ``None`` is the point at infinity.
Scalar multiplication runs in Jacobian coordinates; the base point gets a
precomputed fixed-window table.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property, lru_cache

try:
    from gmpy2 import invert as _invert, mpz
except ImportError:  # pure-int fallback, roughly 2-3x slower
    mpz = int

    def _invert(x, m):
        return pow(x, -1, m)

Point = tuple[int, int] | None

_WINDOW = 4
_BASE_WINDOW = 8


@dataclass(frozen=True)
class CurveParams:
    name: str
    p: int
    a: int
    b: int
    gx: int
    gy: int
    q: int

    def __post_init__(self):
        if not self.is_on_curve((self.gx, self.gy)):
            raise ValueError(f"{self.name}: base point not on curve")

    @property
    def base_point(self) -> tuple[int, int]:
        return (self.gx, self.gy)

    @property
    def field_bytes(self) -> int:
        return (self.p.bit_length() + 7) // 8

    @property
    def scalar_bytes(self) -> int:
        return (self.q.bit_length() + 7) // 8

    def is_on_curve(self, pt: Point) -> bool:
        if pt is None:
            return True
        x, y = pt
        return (y * y - x * x * x - self.a * x - self.b) % self.p == 0

    # -- Jacobian internals -------------------------------------------------

    @cached_property
    def _pm(self):
        return mpz(self.p)

    def _to_affine(self, J) -> Point:
        X, Y, Z = J
        if Z == 0:
            return None
        p = self._pm
        zi = _invert(Z, p)
        zi2 = zi * zi % p
        return (int(X * zi2 % p), int(Y * zi2 * zi % p))

    def _double(self, J):
        X, Y, Z = J
        p = self._pm
        if Z == 0 or Y == 0:
            return (1, 1, 0)
        if self.a == 0:
            A = X * X % p
            B = Y * Y % p
            C = B * B % p
            D = 2 * ((X + B) * (X + B) - A - C) % p
            E = 3 * A
            X3 = (E * E - 2 * D) % p
            return (X3, (E * (D - X3) - 8 * C) % p, 2 * Y * Z % p)
        YY = Y * Y % p
        S = 4 * X * YY % p
        ZZ = Z * Z % p
        M = (3 * X * X + self.a * ZZ * ZZ) % p
        X3 = (M * M - 2 * S) % p
        Y3 = (M * (S - X3) - 8 * YY * YY) % p
        Z3 = 2 * Y * Z % p
        return (X3, Y3, Z3)

    def _add(self, J1, J2):
        X1, Y1, Z1 = J1
        X2, Y2, Z2 = J2
        if Z1 == 0:
            return J2
        if Z2 == 0:
            return J1
        p = self._pm
        Z1Z1 = Z1 * Z1 % p
        U2 = X2 * Z1Z1 % p
        S2 = Y2 * Z1 * Z1Z1 % p
        if Z2 == 1:
            # mixed addition against a normalized point
            U1, S1 = X1, Y1
        else:
            Z2Z2 = Z2 * Z2 % p
            U1 = X1 * Z2Z2 % p
            S1 = Y1 * Z2 * Z2Z2 % p
        if U1 == U2:
            if S1 != S2:
                return (1, 1, 0)
            return self._double(J1)
        H = (U2 - U1) % p
        R = (S2 - S1) % p
        HH = H * H % p
        HHH = H * HH % p
        V = U1 * HH % p
        X3 = (R * R - HHH - 2 * V) % p
        Y3 = (R * (V - X3) - S1 * HHH) % p
        Z3 = H * Z1 % p if Z2 == 1 else H * Z1 * Z2 % p
        return (X3, Y3, Z3)

    def _normalize(self, J):
        P = self._to_affine(J)
        return (1, 1, 0) if P is None else (*P, 1)

    @cached_property
    def _base_table(self):
        return self._comb_table(self.base_point, min(_BASE_WINDOW, max(1, self.q.bit_length() // 2)))

    # -- public operations ----------------------------------------------------

    def add(self, P: Point, Q: Point) -> Point:
        if P is None:
            return Q
        if Q is None:
            return P
        return self._to_affine(self._add((*P, 1), (*Q, 1)))

    def neg(self, P: Point) -> Point:
        return None if P is None else (P[0], (-P[1]) % self.p)

    def _comb_table(self, P, w: int):
        windows = (self.q.bit_length() + w - 1) // w
        table = []
        step = (*P, 1)
        for _ in range(windows):
            row = [(1, 1, 0), step]
            for _ in range((1 << w) - 2):
                row.append(self._add(row[-1], step))
            step = self._normalize(self._add(row[-1], step))
            table.append([row[0]] + [self._normalize(J) for J in row[1:]])
        return w, table

    def _comb_mul(self, k: int, w: int, table) -> Point:
        acc = (1, 1, 0)
        mask = (1 << w) - 1
        for row in table:
            if k == 0:
                break
            d = k & mask
            if d:
                acc = self._add(acc, row[d])
            k >>= w
        return self._to_affine(acc)

    @cached_property
    def _endo(self):
        """(beta, lambda, basis) when the curve has an efficient cube-root
        endomorphism (a = 0, p = q = 1 mod 3), else None."""
        p, q = self.p, self.q
        if self.a != 0 or p % 3 != 1 or q % 3 != 1 or q.bit_length() < 32:
            return None
        beta = next(b for b in (pow(g, (p - 1) // 3, p) for g in range(2, 100)) if b != 1)
        lam = next(v for v in (pow(g, (q - 1) // 3, q) for g in range(2, 100)) if v != 1)
        G = self.base_point
        if self.mul_base(lam) != (beta * G[0] % p, G[1]):
            lam = lam * lam % q
        # short lattice basis for {(a, b): a + b*lam = 0 mod q}
        bound = math.isqrt(q)
        r0, r1, t0, t1 = q, lam, 0, 1
        while r1 >= bound:
            quo = r0 // r1
            r0, r1, t0, t1 = r1, r0 - quo * r1, t1, t0 - quo * t1
        quo = r0 // r1
        r2, t2 = r0 - quo * r1, t0 - quo * t1
        v1 = (r1, -t1)
        v2 = min((r0, -t0), (r2, -t2), key=lambda v: v[0] * v[0] + v[1] * v[1])
        return beta, lam, v1, v2

    def _split(self, k: int):
        _, lam, (a1, b1), (a2, b2) = self._endo
        q = self.q

        def rdiv(x, y):
            return (2 * x + y) // (2 * y)

        c1 = rdiv(b2 * k, q)
        c2 = rdiv(-b1 * k, q)
        return k - c1 * a1 - c2 * a2, -c1 * b1 - c2 * b2

    def _row(self, J):
        row = [(1, 1, 0), J]
        for _ in range((1 << _WINDOW) - 2):
            row.append(self._add(row[-1], J))
        return row

    def _multi_mul(self, pairs) -> Point:
        """Sum of k_i * P_i with non-negative k_i (Jacobian P_i), sharing doublings."""
        mask = (1 << _WINDOW) - 1
        rows, digit_lists = [], []
        for k, J in pairs:
            rows.append(self._row(J))
            digits = []
            while k:
                digits.append(k & mask)
                k >>= _WINDOW
            digit_lists.append(digits)
        width = max(len(d) for d in digit_lists)
        acc = (1, 1, 0)
        for i in reversed(range(width)):
            for _ in range(_WINDOW):
                acc = self._double(acc)
            for row, digits in zip(rows, digit_lists):
                if i < len(digits) and digits[i]:
                    acc = self._add(acc, row[digits[i]])
        return self._to_affine(acc)

    def mul(self, k: int, P: Point) -> Point:
        k %= self.q
        if P is None or k == 0:
            return None
        if P == self.base_point:
            return self.mul_base(k)
        table = _hot_table(self, P)
        if table is not None:
            return self._comb_mul(k, *table)
        if self._endo is None:
            return self._multi_mul([(k, (*P, 1))])
        k1, k2 = self._split(k)
        x, y = P
        p = self.p
        J1 = (x, y if k1 >= 0 else p - y, 1)
        J2 = (self._endo[0] * x % p, y if k2 >= 0 else p - y, 1)
        return self._multi_mul([(abs(k1), J1), (abs(k2), J2)])

    def mul_base(self, k: int) -> Point:
        return self._comb_mul(k % self.q, *self._base_table)

    def compress(self, P: Point) -> bytes:
        if P is None:
            raise ValueError("cannot encode the point at infinity")
        x, y = P
        return bytes([2 + (y & 1)]) + x.to_bytes(self.field_bytes, "big")

    def decompress(self, raw: bytes) -> tuple[int, int]:
        if len(raw) != 1 + self.field_bytes or raw[0] not in (2, 3):
            raise ValueError("bad compressed point encoding")
        return _decompress(self, bytes(raw))

    def _decompress(self, raw: bytes) -> tuple[int, int]:
        x = int.from_bytes(raw[1:], "big")
        rhs = (x * x * x + self.a * x + self.b) % self.p
        y = _sqrt_mod(rhs, self.p)
        if y is None:
            raise ValueError("x coordinate not on curve")
        if (y & 1) != (raw[0] & 1):
            y = self.p - y
        return (x, y)


# points multiplied this often get their own comb table (e.g. an authority key)
_HOT_AFTER = 8
_hot_counts: dict = {}
_hot_tables: dict = {}


def _hot_table(curve: CurveParams, P):
    key = (curve.name, P)
    table = _hot_tables.get(key)
    if table is None:
        n = _hot_counts.get(key, 0) + 1
        if len(_hot_counts) > 65536:
            _hot_counts.clear()
        _hot_counts[key] = n
        if n >= _HOT_AFTER and len(_hot_tables) < 64:
            table = _hot_tables[key] = curve._comb_table(P, _WINDOW)
    return table


@lru_cache(maxsize=4096)
def _decompress(curve: CurveParams, raw: bytes) -> tuple[int, int]:
    return curve._decompress(raw)


def _sqrt_mod(a: int, p: int) -> int | None:
    """Tonelli-Shanks; returns None for non-residues."""
    a %= p
    if a == 0:
        return 0
    if p % 4 == 3:
        r = pow(a, (p + 1) // 4, p)
        return r if r * r % p == a else None
    if pow(a, (p - 1) // 2, p) != 1:
        return None
    q, s = p - 1, 0
    while q % 2 == 0:
        q //= 2
        s += 1
    z = 2
    while pow(z, (p - 1) // 2, p) != p - 1:
        z += 1
    m, c, t, r = s, pow(z, q, p), pow(a, q, p), pow(a, (q + 1) // 2, p)
    while t != 1:
        i, t2 = 0, t
        while t2 != 1:
            t2 = t2 * t2 % p
            i += 1
        b = pow(c, 1 << (m - i - 1), p)
        m, c, t, r = i, b * b % p, t * b * b % p, r * b % p
    return r


SECP256K1 = CurveParams(
    name="secp256k1",
    p=0xFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFEFFFFFC2F,
    a=0,
    b=7,
    gx=0x79BE667EF9DCBBAC55A06295CE870B07029BFCDB2DCE28D959F2815B16F81798,
    gy=0x483ADA7726A3C4655DA4FBFC0E1108A8FD17B448A68554199C47D08FFB10D4B8,
    q=0xFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFEBAAEDCE6AF48A03BBFD25E8CD0364141,
)

# y^2 = x^3 + 3x + 12 over F_1019 has prime order 1051
TOY_CURVE = CurveParams(name="toy1019", p=1019, a=3, b=12, gx=1, gy=4, q=1051)

CURVES = {c.name: c for c in (SECP256K1, TOY_CURVE)}
