"""Bounded-precision p-adic arithmetic for odd primes.

A p-adic number is stored as p^val * unit with the unit known modulo
p^prec (relative precision).  Zero is a valuation sentinel, never an
all-zero digit vector, so norms are total.  All values are immutable;
arithmetic returns new objects and tracks precision loss explicitly.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction

from .errors import NotASquare, PrecisionExhausted, QSError

INF = math.inf

DEFAULT_PRECISION = 64


def _is_prime(n: int) -> bool:
    if n < 2:
        return False
    for q in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37):
        if n % q == 0:
            return n == q
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for a in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37):
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


def check_odd_prime(p: int) -> int:
    if p == 2:
        raise QSError("p = 2 is not supported (odd primes only)")
    if not _is_prime(p):
        raise QSError(f"{p} is not prime")
    return p


def valuation(x, p: int):
    """p-adic valuation of a rational; INF for zero."""
    check_odd_prime(p)
    x = Fraction(x)
    if x == 0:
        return INF
    v = 0
    num, den = x.numerator, x.denominator
    while num % p == 0:
        num //= p
        v += 1
    while den % p == 0:
        den //= p
        v -= 1
    return v


def _strip_p(n: int, p: int):
    v = 0
    while n % p == 0:
        n //= p
        v += 1
    return n, v


class PadicNumber:
    """p^val * unit with unit invertible mod p, known mod p^prec."""

    __slots__ = ("p", "val", "unit", "prec")

    def __init__(self, p, val, unit, prec, _checked=False):
        if not _checked:
            check_odd_prime(p)
            if val is INF:
                unit, prec = 0, 0
            else:
                if prec <= 0:
                    raise PrecisionExhausted("no significant digits left")
                unit %= p ** prec
                if unit % p == 0:
                    raise QSError("unit digit must be coprime to p")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "val", val)
        object.__setattr__(self, "unit", unit)
        object.__setattr__(self, "prec", prec)

    def __setattr__(self, *a):
        raise AttributeError("PadicNumber is immutable")

    # -- construction -------------------------------------------------

    @classmethod
    def zero(cls, p: int) -> "PadicNumber":
        check_odd_prime(p)
        return cls(p, INF, 0, 0, _checked=True)

    @classmethod
    def from_rational(cls, x, p: int, prec: int = DEFAULT_PRECISION) -> "PadicNumber":
        check_odd_prime(p)
        x = Fraction(x)
        if x == 0:
            return cls.zero(p)
        num, vn = _strip_p(x.numerator, p)
        den, vd = _strip_p(x.denominator, p)
        m = p ** prec
        unit = num * pow(den, -1, m) % m
        return cls(p, vn - vd, unit, prec, _checked=True)

    # -- basics --------------------------------------------------------

    @property
    def is_zero(self) -> bool:
        return self.val is INF

    def norm(self) -> Fraction:
        """|x|_p = p^(-val) as an exact rational."""
        if self.is_zero:
            return Fraction(0)
        return Fraction(self.p) ** (-self.val)

    def abs_precision(self):
        """Value is known modulo p^abs_precision."""
        if self.is_zero:
            return INF
        return self.val + self.prec

    def residue(self, k: int) -> int:
        """Integer r with x ≡ r (mod p^k); requires val >= 0 and enough digits."""
        if self.is_zero:
            return 0
        if self.val < 0:
            raise QSError("residue undefined for negative valuation")
        if self.abs_precision() < k:
            raise PrecisionExhausted(f"value known only mod p^{self.abs_precision()}")
        return self.unit * self.p ** self.val % self.p ** k

    def digits(self, count: int):
        """Little-endian base-p digits of the unit part."""
        u, out = self.unit, []
        for _ in range(count):
            u, d = divmod(u, self.p)
            out.append(d)
        return out

    def rational_approx(self) -> Fraction:
        """The canonical rational p^val * (unit mod p^prec)."""
        if self.is_zero:
            return Fraction(0)
        return Fraction(self.p) ** self.val * self.unit

    # -- arithmetic ----------------------------------------------------

    def _coerce(self, other) -> "PadicNumber":
        if isinstance(other, PadicNumber):
            if other.p != self.p:
                raise QSError("mixed primes")
            return other
        return PadicNumber.from_rational(other, self.p, self.prec if not self.is_zero else DEFAULT_PRECISION)

    def __mul__(self, other):
        other = self._coerce(other)
        if self.is_zero or other.is_zero:
            return PadicNumber.zero(self.p)
        prec = min(self.prec, other.prec)
        m = self.p ** prec
        return PadicNumber(self.p, self.val + other.val, self.unit * other.unit % m, prec, _checked=True)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._coerce(other)
        if other.is_zero:
            raise ZeroDivisionError("p-adic division by zero")
        if self.is_zero:
            return PadicNumber.zero(self.p)
        prec = min(self.prec, other.prec)
        m = self.p ** prec
        return PadicNumber(self.p, self.val - other.val, self.unit * pow(other.unit, -1, m) % m, prec, _checked=True)

    def __neg__(self):
        if self.is_zero:
            return self
        m = self.p ** self.prec
        return PadicNumber(self.p, self.val, -self.unit % m, self.prec, _checked=True)

    def __add__(self, other):
        other = self._coerce(other)
        if self.is_zero:
            return other
        if other.is_zero:
            return self
        abs_prec = min(self.abs_precision(), other.abs_precision())
        lo = min(self.val, other.val)
        m = self.p ** max(abs_prec - lo, 1)
        s = (self.unit * self.p ** (self.val - lo) + other.unit * self.p ** (other.val - lo)) % m
        if s == 0:
            # indistinguishable from zero at the joint precision
            raise PrecisionExhausted(
                f"sum is O(p^{abs_prec}); increase working precision to resolve")
        u, dv = _strip_p(s, self.p)
        val = lo + dv
        prec = abs_prec - val
        if prec <= 0:
            raise PrecisionExhausted("cancellation consumed all digits")
        return PadicNumber(self.p, val, u % self.p ** prec, prec, _checked=True)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) + (-self)

    def congruent(self, other, k: int) -> bool:
        """x ≡ y mod p^k, certified at the stated precisions."""
        other = self._coerce(other)
        for z in (self, other):
            if not z.is_zero and z.abs_precision() < k:
                raise PrecisionExhausted("operands too coarse for mod p^k comparison")
        a = 0 if self.is_zero else self.rational_approx()
        b = 0 if other.is_zero else other.rational_approx()
        return valuation(Fraction(a) - Fraction(b), self.p) >= k if a != b else True

    def __repr__(self):
        if self.is_zero:
            return f"O(p=inf; {self.p})"
        return f"PadicNumber({self.p}^{self.val} * {self.unit} + O({self.p}^{self.abs_precision()}))"


# -- square roots ------------------------------------------------------


def legendre(a: int, p: int) -> int:
    """Legendre symbol (a|p) in {-1, 0, 1} for odd prime p."""
    a %= p
    if a == 0:
        return 0
    t = pow(a, (p - 1) // 2, p)
    return 1 if t == 1 else -1


def smallest_nonresidue(p: int) -> int:
    """The fixed non-residue representative u used for square classes."""
    for u in range(2, p):
        if legendre(u, p) == -1:
            return u
    raise QSError("no non-residue found")  # unreachable for p > 2


def _sqrt_mod_p(a: int, p: int) -> int:
    """Tonelli-Shanks square root mod an odd prime."""
    a %= p
    if a == 0:
        return 0
    if legendre(a, p) != 1:
        raise NotASquare(f"{a} is not a QR mod {p}")
    if p % 4 == 3:
        return pow(a, (p + 1) // 4, p)
    q, s = p - 1, 0
    while q % 2 == 0:
        q //= 2
        s += 1
    z = smallest_nonresidue(p)
    m, c, t, r = s, pow(z, q, p), pow(a, q, p), pow(a, (q + 1) // 2, p)
    while t != 1:
        t2, i = t, 0
        while t2 != 1:
            t2 = t2 * t2 % p
            i += 1
        b = pow(c, 1 << (m - i - 1), p)
        m, c, t, r = i, b * b % p, t * b * b % p, r * b % p
    return r


def sqrt_padic(x, N: int = DEFAULT_PRECISION, p: int | None = None) -> PadicNumber:
    """Square root in Q_p with result^2 ≡ x mod p^N (odd p).

    The root is normalized deterministically: its leading digit lies in
    {1, ..., (p-1)/2}.  Raises NotASquare on odd valuation or a
    non-residue leading unit.
    """
    if not isinstance(x, PadicNumber):
        if p is None:
            raise QSError("prime required for rational input")
        x = PadicNumber.from_rational(x, p, max(N, DEFAULT_PRECISION))
    p = x.p
    if x.is_zero:
        return x
    if x.val % 2 != 0:
        raise NotASquare("odd valuation")
    need = N  # digits of the root's unit
    if x.prec < need:
        raise PrecisionExhausted(f"need {need} unit digits, have {x.prec}")
    u = x.unit
    r = _sqrt_mod_p(u, p)
    # Hensel with doubling: r -> r - (r^2-u)/(2r)
    k = 1
    while k < need:
        k = min(2 * k, need)
        m = p ** k
        r = (r - (r * r - u) * pow(2 * r, -1, m)) % m
    if r % p > (p - 1) // 2:
        r = (-r) % p ** need
    return PadicNumber(p, x.val // 2, r, need, _checked=True)


# -- Hilbert symbol ----------------------------------------------------


def _val_unit(x, p: int):
    if isinstance(x, PadicNumber):
        if x.is_zero:
            raise QSError("Hilbert symbol needs nonzero arguments")
        if x.prec < 1:
            raise PrecisionExhausted("unit digit unknown")
        return x.val, x.unit % p
    x = Fraction(x)
    if x == 0:
        raise QSError("Hilbert symbol needs nonzero arguments")
    num, vn = _strip_p(x.numerator, p)
    den, vd = _strip_p(x.denominator, p)
    return vn - vd, num * pow(den, -1, p) % p


def hilbert_symbol(a, b, p: int) -> int:
    """(a, b)_p for odd p: +1 iff z^2 = a x^2 + b y^2 has a nontrivial solution."""
    check_odd_prime(p)
    alpha, u = _val_unit(a, p)
    beta, v = _val_unit(b, p)
    alpha %= 2
    beta %= 2
    eps = (p - 1) // 2 % 2  # parity governing (-1|p)
    sign = 1
    if alpha and beta and eps:
        sign = -sign
    if beta:
        sign *= legendre(u, p)
    if alpha:
        sign *= legendre(v, p)
    return sign


# -- norms on vectors and exterior products ----------------------------


def vector_norm_p(vec, p: int) -> Fraction:
    """Max norm ||v||_p = max |v_i|_p over rational coordinates."""
    best = None
    for c in vec:
        if isinstance(c, PadicNumber):
            if c.is_zero:
                continue
            v = c.val
        else:
            c = Fraction(c)
            if c == 0:
                continue
            v = valuation(c, p)
        best = v if best is None else min(best, v)
    if best is None:
        return Fraction(0)
    return Fraction(p) ** (-best)


def _fraction_det(rows):
    n = len(rows)
    if n == 1:
        return rows[0][0]
    if n == 2:
        return rows[0][0] * rows[1][1] - rows[0][1] * rows[1][0]
    det = Fraction(0)
    for j in range(n):
        minor = [r[:j] + r[j + 1:] for r in rows[1:]]
        term = rows[0][j] * _fraction_det(minor)
        det += term if j % 2 == 0 else -term
    return det


def pluecker_coordinates(vectors):
    """All i*i minors of the i x n coordinate matrix, indexed by column subsets."""
    rows = [[Fraction(c) for c in v] for v in vectors]
    i, n = len(rows), len(rows[0])
    out = {}
    for J in itertools.combinations(range(n), i):
        out[J] = _fraction_det([[r[j] for j in J] for r in rows])
    return out

def wedge_norm_p(vectors, p: int) -> Fraction:
    """||v1 ∧ ... ∧ vi||_p = max_J |Pluecker_J|_p (rational-exact input)."""
    check_odd_prime(p)
    if any(isinstance(c, PadicNumber) for v in vectors for c in v):
        return _wedge_norm_padic(vectors, p)
    best = None
    for minor in pluecker_coordinates(vectors).values():
        if minor == 0:
            continue
        v = valuation(minor, p)
        best = v if best is None else min(best, v)
    if best is None:
        return Fraction(0)
    return Fraction(p) ** (-best)


def _wedge_norm_padic(vectors, p):
    vecs = []
    abs_prec = INF
    for v in vectors:
        row = []
        for c in v:
            if not isinstance(c, PadicNumber):
                c = PadicNumber.from_rational(c, p)
            if not c.is_zero:
                abs_prec = min(abs_prec, c.abs_precision())
            row.append(c.rational_approx())
        vecs.append(row)
    i = len(vecs)
    best = None
    for minor in pluecker_coordinates(vecs).values():
        if minor == 0:
            continue
        v = valuation(minor, p)
        best = v if best is None else min(best, v)
    # every minor accumulates i-fold products; certified digits shrink accordingly
    if best is None or best >= abs_prec * i:
        raise PrecisionExhausted("max Pluecker coordinate not certified at this precision")
    return Fraction(p) ** (-best)


def wedge_norm_inf_sq(vectors) -> Fraction:
    """Squared Euclidean norm of the wedge: sum of squared Pluecker minors."""
    return sum((m * m for m in pluecker_coordinates(vectors).values()), Fraction(0))


def wedge_norm_inf(vectors) -> float:
    return math.sqrt(float(wedge_norm_inf_sq(vectors)))


# -- Cartan valuations -------------------------------------------------


def cartan_valuations(g, p: int):
    """Sorted exponents (λ1 <= ... <= λn) of g = k1 diag(p^λi) k2, ki in GL_n(Z_p).

    Implemented by elementary row/column reduction over Z_p: repeatedly
    pivot on a minimal-valuation entry and clear its row and column.
    Their sum equals v_p(det g).
    """
    check_odd_prime(p)
    rows = [[Fraction(c.rational_approx() if isinstance(c, PadicNumber) else c) for c in row] for row in g]
    n = len(rows)
    prec_floor = min(
        (c.abs_precision() for row in g for c in row
         if isinstance(c, PadicNumber) and not c.is_zero),
        default=INF,
    )
    vals = []
    active = rows
    while active:
        pivot, pv = None, None
        for i, row in enumerate(active):
            for j, c in enumerate(row):
                if c == 0:
                    continue
                v = valuation(c, p)
                if pv is None or v < pv:
                    pv, pivot = v, (i, j)
        if pivot is None:
            raise PrecisionExhausted("matrix not invertible at stated precision")
        if prec_floor is not INF and pv >= prec_floor:
            raise PrecisionExhausted("pivot valuation not certified")
        i0, j0 = pivot
        vals.append(pv)
        piv = active[i0][j0]
        reduced = []
        for i, row in enumerate(active):
            if i == i0:
                continue
            factor = row[j0] / piv
            reduced.append([row[j] - factor * active[i0][j] for j in range(len(row)) if j != j0])
        active = reduced
    if len(vals) != n:
        raise PrecisionExhausted("matrix not invertible at stated precision")
    return tuple(sorted(vals))


# -- S-adic scalars and vectors ---------------------------------------


class SScalar:
    """One component per place: a real plus one PadicNumber per finite p."""

    __slots__ = ("real", "padic", "exact")

    def __init__(self, real, padic, exact=None):
        object.__setattr__(self, "real", float(real))
        object.__setattr__(self, "padic", dict(padic))
        object.__setattr__(self, "exact", Fraction(exact) if exact is not None else None)

    def __setattr__(self, *a):
        raise AttributeError("SScalar is immutable")

    @classmethod
    def from_rational(cls, x, primes, prec: int = DEFAULT_PRECISION) -> "SScalar":
        x = Fraction(x)
        return cls(float(x), {p: PadicNumber.from_rational(x, p, prec) for p in primes}, exact=x)

    def norm(self) -> float:
        out = abs(self.real)
        for x in self.padic.values():
            out *= float(x.norm())
        return out

    def __repr__(self):
        return f"SScalar(real={self.real}, primes={sorted(self.padic)})"


def normalization_factor(norm_value, p):
    """x° for a place: p^{-n} viewed p-adically for x = p^n, x itself at ∞."""
    if p == "inf":
        return norm_value
    f = Fraction(norm_value)
    v = valuation(f, p)
    if f != Fraction(p) ** v:
        raise QSError("finite-place norm must be a power of p")
    return Fraction(p) ** (-v)


class SVector:
    """n-tuple of per-place components; rational-exact when built from Q^n."""

    __slots__ = ("entries", "primes")

    def __init__(self, entries, primes):
        object.__setattr__(self, "entries", tuple(Fraction(e) for e in entries))
        object.__setattr__(self, "primes", tuple(primes))

    def __setattr__(self, *a):
        raise AttributeError("SVector is immutable")

    @property
    def n(self):
        return len(self.entries)

    def norm_at(self, p) -> float:
        if p == "inf":
            return math.sqrt(sum(float(e) * float(e) for e in self.entries))
        return float(vector_norm_p(self.entries, p))

    def norm(self) -> float:
        out = self.norm_at("inf")
        for p in self.primes:
            out *= self.norm_at(p)
        return out

    def __repr__(self):
        return f"SVector({[str(e) for e in self.entries]}, S_f={list(self.primes)})"
