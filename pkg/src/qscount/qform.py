"""Quadratic forms over Q_p and Q_S, and the counting-problem data types
(S-times, S-adic intervals, radial regions).

Finite-place Gram matrices are exact rationals; the real place may carry
irrational (float) coefficients.  Classification over Q_p (odd p) is by
rank, discriminant square class and Hasse invariant.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import linalg
from .errors import (DegenerateForm, NotIsotropic, PrecisionExhausted, QSError)
from .padic import (DEFAULT_PRECISION, PadicNumber, check_odd_prime,
                    hilbert_symbol, legendre, smallest_nonresidue, valuation)

INF_PLACE = "inf"

SIG_TOL = 1e-9  # relative eigenvalue tolerance at the real place


def _sym_check(gram):
    n = len(gram)
    for row in gram:
        if len(row) != n:
            raise QSError("Gram matrix must be square")
    for i in range(n):
        for j in range(i):
            if gram[i][j] != gram[j][i]:
                raise QSError("Gram matrix must be symmetric")
    return n


class QuadraticFormP:
    """A non-degenerate quadratic form at one place."""

    def __init__(self, place, gram):
        if place != INF_PLACE:
            check_odd_prime(place)
        self.p = place
        if place == INF_PLACE:
            self.gram = [[float(c) for c in row] for row in gram]
        else:
            self.gram = [[Fraction(c.rational_approx() if isinstance(c, PadicNumber) else c)
                          for c in row] for row in gram]
        self.n = _sym_check(self.gram)
        if place == INF_PLACE:
            arr = np.array(self.gram, dtype=float)
            eig = np.linalg.eigvalsh(arr)
            scale = max(abs(eig).max(), 1e-300)
            if min(abs(eig)) <= SIG_TOL * scale:
                raise DegenerateForm("real Gram matrix is numerically singular")
        else:
            if linalg.det(self.gram) == 0:
                raise DegenerateForm("Gram matrix is singular")

    def evaluate(self, v):
        if self.p == INF_PLACE:
            return sum(self.gram[i][j] * float(v[i]) * float(v[j])
                       for i in range(self.n) for j in range(self.n))
        v = [Fraction(x) for x in v]
        return sum(self.gram[i][j] * v[i] * v[j] for i in range(self.n) for j in range(self.n))

    def bilinear(self, v, w):
        v = [Fraction(x) for x in v]
        w = [Fraction(x) for x in w]
        return sum(self.gram[i][j] * v[i] * w[j] for i in range(self.n) for j in range(self.n))

    def signature(self):
        """(r, s) at the real place."""
        if self.p != INF_PLACE:
            raise QSError("signature is a real-place notion")
        eig = np.linalg.eigvalsh(np.array(self.gram, dtype=float))
        r = int((eig > 0).sum())
        return (r, self.n - r)

    def __repr__(self):
        return f"QuadraticFormP(p={self.p}, n={self.n})"


# -- diagonalization and invariants -------------------------------------

def diagonalize(gram):
    """Congruence diagonalization: returns (diag entries, P) with Pᵗ G P diagonal.

    Deterministic pivoting: smallest usable index first.
    """
    G = linalg.frac_matrix(gram)
    n = len(G)
    P = linalg.identity(n)

    def add_col(dst, src, f):
        # column op x_dst += f * x_src, applied congruently
        for i in range(n):
            G[i][dst] += f * G[i][src]
        for j in range(n):
            G[dst][j] += f * G[src][j]
        for i in range(n):
            P[i][dst] += f * P[i][src]

    def swap_col(a, b):
        for i in range(n):
            G[i][a], G[i][b] = G[i][b], G[i][a]
        G[a], G[b] = G[b], G[a]
        for i in range(n):
            P[i][a], P[i][b] = P[i][b], P[i][a]

    for k in range(n):
        if G[k][k] == 0:
            j = next((j for j in range(k + 1, n) if G[j][j] != 0), None)
            if j is not None:
                swap_col(k, j)
            else:
                pair = next(((i, j) for i in range(k, n) for j in range(i + 1, n)
                             if G[i][j] != 0), None)
                if pair is None:
                    raise DegenerateForm("degenerate block during diagonalization")
                add_col(pair[0], pair[1], Fraction(1))
                if pair[0] != k:
                    swap_col(k, pair[0])
        for j in range(k + 1, n):
            if G[k][j] != 0:
                add_col(j, k, -G[k][j] / G[k][k])
    return [G[i][i] for i in range(n)], P


@dataclass(frozen=True)
class Invariants:
    rank: int
    disc_parity: int      # v_p(det) mod 2
    disc_residue: int     # Legendre symbol of the unit part of det
    hasse: int

    @property
    def disc_trivial(self):
        return self.disc_parity == 0 and self.disc_residue == 1

    def as_tuple(self):
        return (self.rank, self.disc_parity, self.disc_residue, self.hasse)


def invariants(q: QuadraticFormP) -> Invariants:
    """(rank, discriminant class, Hasse invariant) at a finite odd place."""
    if q.p == INF_PLACE:
        raise QSError("invariants() is for finite places; use signature() at ∞")
    p = q.p
    diag, _ = diagonalize(q.gram)
    d = Fraction(1)
    for a in diag:
        d *= a
    parity = valuation(d, p) % 2
    unit = d / Fraction(p) ** valuation(d, p)
    residue = legendre(unit.numerator * pow(unit.denominator, -1, p) % p, p)
    h = 1
    for i in range(len(diag)):
        for j in range(i + 1, len(diag)):
            h *= hilbert_symbol(diag[i], diag[j], p)
    return Invariants(q.n, parity, residue, h)


def equivalent(q1: QuadraticFormP, q2: QuadraticFormP) -> bool:
    """Equivalence over Q_p: same rank, discriminant class and Hasse invariant."""
    if q1.p != q2.p:
        raise QSError("forms live at different places")
    if q1.p == INF_PLACE:
        return q1.signature() == q2.signature()
    return invariants(q1).as_tuple() == invariants(q2).as_tuple()


# -- isotropy ------------------------------------------------------------

def _square_free_units(diag, p):
    """Split scaled diagonal entries into unit-level and p-level unit residues."""
    units, punits = [], []
    for a in diag:
        v = valuation(a, p)
        u = a / Fraction(p) ** v
        r = u.numerator * pow(u.denominator, -1, p) % p
        (units if v % 2 == 0 else punits).append(r)
    return units, punits


def _binary_zero_mod_p(u1, u2, p):
    """x with u1 + u2 x^2 ≡ 0 mod p, or None."""
    target = (-u1 * pow(u2, -1, p)) % p
    if legendre(target, p) != 1:
        return None
    from .padic import _sqrt_mod_p
    return _sqrt_mod_p(target, p)


def _unit_block_zero(units, p):
    """Lexicographically first nontrivial zero of sum u_i x_i^2 mod p."""
    m = len(units)
    if m < 2:
        return None
    if m == 2:
        x = _binary_zero_mod_p(units[0], units[1], p)
        return None if x is None else [1, x]
    for combo in itertools.product(range(p), repeat=m - 2):
        # fix trailing coordinates, solve the leading binary part
        tail = sum(units[i + 2] * combo[i] ** 2 for i in range(m - 2)) % p
        for x0 in range(p):
            rhs = (-(units[0] * x0 * x0 + tail)) % p
            if rhs == 0:
                if x0 or any(combo):
                    return [x0, 0, *combo]
                continue
            r = (rhs * pow(units[1], -1, p)) % p
            if legendre(r, p) == 1:
                from .padic import _sqrt_mod_p
                return [x0, _sqrt_mod_p(r, p), *combo]
    return None


def is_isotropic(q: QuadraticFormP) -> bool:
    """Does q have a nontrivial zero over its field?

    Real place: indefinite.  Finite odd p: residue search on the scaled
    diagonalization; rank >= 5 is always isotropic.
    """
    if q.p == INF_PLACE:
        r, s = q.signature()
        return r > 0 and s > 0
    p = q.p
    diag, _ = diagonalize(q.gram)
    units, punits = _square_free_units(diag, p)
    for blk in (units, punits):
        if len(blk) >= 3:
            return True
        if len(blk) == 2 and legendre((-blk[0] * blk[1]) % p, p) == 1:
            return True
    return False


def find_isotropic_vector(q: QuadraticFormP, N: int = 20):
    """A unit-norm vector v with q(v) ≡ 0 mod p^N, Hensel-certified.

    Searches residue vectors of the scaled diagonalization
    lexicographically, lifts the zero, and maps back.  Raises
    NotIsotropic when the residue search proves there is no zero.
    """
    p = q.p
    if p == INF_PLACE:
        raise QSError("finite places only")
    if not is_isotropic(q):
        raise NotIsotropic("form is anisotropic")
    diag, P = diagonalize(q.gram)
    n = q.n
    work = N + 8
    # scale each column so the diagonal entry is p^(0 or 1) * unit
    scaled = []
    for i, a in enumerate(diag):
        v = valuation(a, p)
        shift = -(v // 2)
        f = Fraction(p) ** shift
        for r in range(n):
            P[r][i] *= f
        scaled.append(a * f * f)
    units_idx = [i for i, a in enumerate(scaled) if valuation(a, p) == 0]
    punits_idx = [i for i, a in enumerate(scaled) if valuation(a, p) == 1]

    def unit_res(i):
        u = scaled[i] / Fraction(p) ** valuation(scaled[i], p)
        return u.numerator * pow(u.denominator, -1, p) % p

    for idx, level in ((units_idx, 0), (punits_idx, 1)):
        res = [unit_res(i) for i in idx]
        z = _unit_block_zero(res, p)
        if z is None:
            continue
        x = [Fraction(0)] * n
        for t, i in enumerate(idx):
            x[i] = Fraction(z[t])
        # Hensel-lift the pivot coordinate of f(y) = sum scaled_i y_i^2 / p^level
        pivot = idx[next(t for t in range(len(idx)) if z[t] % p)]
        # exact rational Newton on the pivot coordinate
        for _ in range(work + 2):
            val = sum(scaled[i] * x[i] * x[i] for i in idx) / Fraction(p) ** level
            vv = valuation(val, p)
            if vv == math.inf or vv >= work + 2:
                break
            grad = 2 * scaled[pivot] * x[pivot] / Fraction(p) ** level
            num = val / grad
            # subtract the p-adic truncation of val/grad from the pivot
            vnum = valuation(num, p)
            unit = num / Fraction(p) ** vnum
            m2 = p ** (work + 2 - max(vnum, 0))
            approx = unit.numerator * pow(unit.denominator, -1, m2) % m2
            x[pivot] -= Fraction(p) ** vnum * approx
        vec = linalg.mat_vec(P, x)
        mval = min(valuation(c, p) for c in vec if c != 0)
        vec = [c / Fraction(p) ** mval for c in vec]
        qv = q.evaluate(vec)
        if qv != 0 and valuation(qv, p) < N:
            raise PrecisionExhausted("lift failed to certify the zero")
        vec = [_truncate_rational(c, p, work) for c in vec]
        qv = q.evaluate(vec)
        if qv != 0 and valuation(qv, p) < N:
            raise PrecisionExhausted("truncation broke the certified zero")
        return vec
    raise NotIsotropic("no residue zero found")  # pragma: no cover


def _truncate_rational(c, p, k):
    """Rational representative of c modulo p^k (p-integral c)."""
    if c == 0:
        return Fraction(0)
    v = valuation(c, p)
    if v >= k:
        return Fraction(0)
    shift = min(v, 0)
    u = c / Fraction(p) ** shift
    m = p ** (k - shift)
    r = u.numerator * pow(u.denominator, -1, m) % m
    return Fraction(r) * Fraction(p) ** shift


# -- standard form -------------------------------------------------------

def standard_gram(n, coeffs, p):
    """Gram of x1*xn + a2 x2^2 + ... + a_{n-1} x_{n-1}^2."""
    G = [[Fraction(0)] * n for _ in range(n)]
    G[0][n - 1] = G[n - 1][0] = Fraction(1, 2)
    for i, a in enumerate(coeffs, start=1):
        G[i][i] = Fraction(a)
    return G


def square_class_rep(a, p):
    """Representative of the square class of a in {1, p, u, p*u}."""
    v = valuation(a, p) % 2
    unit = a / Fraction(p) ** valuation(a, p)
    r = unit.numerator * pow(unit.denominator, -1, p) % p
    upart = 1 if legendre(r, p) == 1 else smallest_nonresidue(p)
    return Fraction(p) ** v * upart


def to_standard(q: QuadraticFormP, N: int = DEFAULT_PRECISION):
    """Reduce an isotropic form to x1*xn + a2 x2^2 + ... (odd finite p).

    Returns (coeffs, g, warning) with q(g x) ≡ standard(x) mod p^N
    entrywise on Gram matrices.  The warning flag is set when no pair
    (a_j, a_k) has -a_j/a_k a non-square (rank <= 3, or rank 4 split).

    The construction loses digits when intermediate pairings carry
    positive valuation; the working precision is raised until the final
    congruence certifies.
    """
    last = None
    for guard in (12, 28, 60):
        try:
            return _to_standard_at(q, N, N + guard)
        except PrecisionExhausted as exc:
            last = exc
    raise last


def _to_standard_at(q: QuadraticFormP, N: int, work: int):
    p = q.p
    if p == INF_PLACE:
        raise QSError("finite places only")
    if q.n < 3:
        raise QSError("standard form needs rank >= 3")
    v = find_isotropic_vector(q, work)
    n = q.n
    # complete v to a hyperbolic pair (v, w): q(w) = 0, beta(v, w) = 1/2;
    # pick the pairing of minimal valuation (pairings at the working
    # precision are approximation noise, not usable denominators)
    w0, b0, best = None, None, None
    for j in range(n):
        e = [Fraction(int(i == j)) for i in range(n)]
        b = q.bilinear(v, e)
        if b == 0:
            continue
        val = valuation(b, p)
        if best is None or val < best:
            w0, b0, best = e, b, val
    if w0 is None or best > work // 2:
        raise PrecisionExhausted("no usable hyperbolic pairing at this precision")
    w1 = [c / (2 * b0) for c in w0]
    qw = q.evaluate(w1)
    w = [w1[i] - qw * v[i] for i in range(n)]
    # orthogonal complement of span(v, w)
    rows = [[q.bilinear(v, [Fraction(int(i == j)) for i in range(n)]) for j in range(n)],
            [q.bilinear(w, [Fraction(int(i == j)) for i in range(n)]) for j in range(n)]]
    comp = linalg.kernel_basis(rows)
    if len(comp) != n - 2:
        raise PrecisionExhausted("complement has wrong dimension")
    Gc = [[q.bilinear(u1, u2) for u2 in comp] for u1 in comp]
    dc, Pc = diagonalize(Gc)
    mids = []
    coeffs = []
    for t in range(n - 2):
        u = [sum(comp[s][i] * Pc[s][t] for s in range(n - 2)) for i in range(n)]
        a = dc[t]
        rep = square_class_rep(a, p)
        ratio = rep / a
        root = _padic_sqrt_rational(ratio, p, work)
        u = [c * root for c in u]
        mids.append([_truncate_rational(c, p, work) for c in u])
        coeffs.append(rep)
    cols = [v] + mids + [w]
    g = [[cols[j][i] for j in range(n)] for i in range(n)]
    target = standard_gram(n, coeffs, p)
    got = linalg.mat_mul(linalg.transpose(g), linalg.mat_mul(q.gram, g))
    for i in range(n):
        for j in range(n):
            diff = got[i][j] - target[i][j]
            if diff != 0 and valuation(diff, p) < N:
                raise PrecisionExhausted("standard-form congruence not met")
    warning = not _has_nonsquare_ratio(coeffs, p)
    return [Fraction(c) for c in coeffs], g, warning


def _padic_sqrt_rational(x, p, k):
    """Rational representative (mod p^k) of sqrt(x) in Q_p."""
    from .padic import sqrt_padic
    r = sqrt_padic(Fraction(x), N=k, p=p)
    return Fraction(r.unit) * Fraction(p) ** r.val


def _has_nonsquare_ratio(coeffs, p):
    for a in coeffs:
        for b in coeffs:
            r = -a / b
            if valuation(r, p) % 2 != 0:
                return True
            unit = r / Fraction(p) ** valuation(r, p)
            if legendre(unit.numerator * pow(unit.denominator, -1, p) % p, p) == -1:
                return True
    return False


def is_split(q: QuadraticFormP) -> bool:
    """Rank 4 and equivalent to x1 x4 + x2^2 - x3^2 at this place."""
    if q.n != 4:
        return False
    if q.p == INF_PLACE:
        return q.signature() == (2, 2)
    split = QuadraticFormP(q.p, standard_gram(4, [1, -1], q.p))
    return equivalent(q, split)


# -- S-tuples ------------------------------------------------------------

class QuadraticFormS:
    """An S-tuple of forms, one per place, with a user-declared rationality flag."""

    def __init__(self, places, irrational=False):
        self.places = {}
        n = None
        for key, form in places.items():
            if not isinstance(form, QuadraticFormP):
                form = QuadraticFormP(key, form)
            if form.p != key:
                raise QSError("place key does not match the form's place")
            if n is None:
                n = form.n
            elif form.n != n:
                raise QSError("all places must share the rank")
            self.places[key] = form
        if INF_PLACE not in self.places:
            raise QSError("the real place is required")
        self.n = n
        self.irrational = bool(irrational)

    @property
    def finite_primes(self):
        return sorted(p for p in self.places if p != INF_PLACE)

    def at(self, p) -> QuadraticFormP:
        return self.places[p]

    def is_isotropic(self) -> bool:
        return all(is_isotropic(f) for f in self.places.values())

    def __repr__(self):
        return f"QuadraticFormS(n={self.n}, S_f={self.finite_primes})"


def is_exceptional(q: QuadraticFormS) -> bool:
    """Rank <= 3, or rank 4 and split at some place."""
    if q.n <= 3:
        return True
    if q.n == 4:
        return any(is_split(f) for f in q.places.values())
    return False


# -- S-times, intervals, regions ------------------------------------------

class STime:
    """Per-place dilation radii: positive real at ∞, p-power at finite p."""

    def __init__(self, t_inf, exponents):
        if t_inf <= 0:
            raise QSError("T_inf must be positive")
        self.t_inf = float(t_inf)
        self.exponents = {check_odd_prime(p): int(e) for p, e in exponents.items()}

    def at(self, p):
        if p == INF_PLACE:
            return self.t_inf
        return Fraction(p) ** self.exponents[p]

    @property
    def primes(self):
        return sorted(self.exponents)

    def norm(self) -> float:
        out = self.t_inf
        for p, e in self.exponents.items():
            out *= float(p) ** e
        return out

    def min_component(self) -> float:
        return min([self.t_inf] + [float(p) ** e for p, e in self.exponents.items()])

    def dominates(self, other: "STime") -> bool:
        if set(self.exponents) != set(other.exponents):
            raise QSError("S-times over different place sets")
        return self.t_inf >= other.t_inf and all(
            self.exponents[p] >= other.exponents[p] for p in self.exponents)

    def __repr__(self):
        return f"STime(inf={self.t_inf}, " + ", ".join(
            f"{p}^{e}" for p, e in sorted(self.exponents.items())) + ")"


class SInterval:
    """Product of a real interval (a, b) and p-adic intervals a_p + p^{b_p} Z_p."""

    def __init__(self, real, finite):
        a, b = real
        if not float(a) < float(b):
            raise QSError("real interval must be nonempty")
        self.real = (a, b)
        self.finite = {}
        for p, (center, scale) in finite.items():
            check_odd_prime(p)
            if isinstance(center, PadicNumber):
                center = center  # kept as-is; resolved at use sites
            else:
                center = Fraction(center)
            self.finite[p] = (center, int(scale))

    def center_residue(self, p, k):
        """Integer residue of the center mod p^k (denominator prime to p)."""
        center, _ = self.finite[p]
        if isinstance(center, PadicNumber):
            return center.residue(k)
        c = Fraction(center)
        v = valuation(c, p)
        if c != 0 and v < 0:
            raise QSError("interval center must be p-integral for this operation")
        m = p ** k
        return c.numerator * pow(c.denominator, -1, m) % m

    def measure(self) -> float:
        out = float(self.real[1]) - float(self.real[0])
        for p, (_, b) in self.finite.items():
            out *= float(p) ** (-b)
        return out

    def contains_real(self, x) -> bool:
        return float(self.real[0]) < x < float(self.real[1])

    def __repr__(self):
        return f"SInterval(real={self.real}, finite={self.finite})"


class Region:
    """Product of radial sets: per place, a ball or a table of radii.

    Finite places: radius p^z, constant ('ball') or per residue class of
    U_p^n mod p^k ('table', unit-invariant).  Real place: a Euclidean
    ball of radius R, or a positive function on the unit sphere.
    """

    def __init__(self, n, inf=("ball", 1.0), finite=None):
        self.n = n
        kind = inf[0]
        if kind == "ball":
            self.inf = ("ball", float(inf[1]))
        elif kind == "func":
            func, rho_max = inf[1], float(inf[2])
            self.inf = ("func", func, rho_max)
        else:
            raise QSError("unknown real-place region kind")
        self.finite = {}
        for p, spec in (finite or {}).items():
            check_odd_prime(p)
            if spec[0] == "ball":
                self.finite[p] = ("ball", int(spec[1]))
            elif spec[0] == "table":
                _, k, table = spec
                self.finite[p] = ("table", int(k), dict(table))
                self._check_unit_invariance(p)
            else:
                raise QSError("unknown finite-place region kind")

    def _check_unit_invariance(self, p):
        _, k, table = self.finite[p]
        m = p ** k
        for cls, z in table.items():
            for u in range(1, m):
                if u % p == 0:
                    continue
                moved = tuple(u * c % m for c in cls)
                if table.get(moved, z) != z:
                    raise QSError("radial table is not unit-invariant")

    def spec_at(self, p):
        if p == INF_PLACE:
            return self.inf
        return self.finite.get(p, ("ball", 0))

    def rho_inf(self, direction) -> float:
        if self.inf[0] == "ball":
            return self.inf[1]
        return float(self.inf[1](direction))

    def rho_max_inf(self) -> float:
        return self.inf[1] if self.inf[0] == "ball" else self.inf[2]

    def rho_exponent(self, p, cls=None) -> int:
        spec = self.spec_at(p)
        if spec[0] == "ball":
            return spec[1]
        _, k, table = spec
        try:
            return table[tuple(cls)]
        except KeyError:
            raise QSError(f"residue class {cls} missing from radial table")

    def rho_max_exponent(self, p) -> int:
        spec = self.spec_at(p)
        if spec[0] == "ball":
            return spec[1]
        return max(spec[2].values())

    def is_ball(self, p) -> bool:
        return self.spec_at(p)[0] == "ball"

    @classmethod
    def unit_balls(cls, n, primes):
        return cls(n, inf=("ball", 1.0), finite={p: ("ball", 0) for p in primes})

    @classmethod
    def from_lattice_transform(cls, g, p, n, inf=("ball", 1.0), max_depth=6):
        """Radial table for the set g^{-1} Z_p^n (a transformed unit ball)."""
        check_odd_prime(p)
        G = linalg.frac_matrix(g)
        k = 1
        while k <= max_depth:
            m = p ** k
            table = {}
            ok = True
            for res in itertools.product(range(m), repeat=n):
                if all(c % p == 0 for c in res):
                    continue
                img = linalg.mat_vec(G, [Fraction(c) for c in res])
                mu = min((valuation(c, p) for c in img if c != 0), default=math.inf)
                if mu >= k:  # class does not resolve the radius at this depth
                    ok = False
                    break
                table[res] = int(mu)
            if ok:
                return cls(n, inf=inf, finite={p: ("table", k, table)})
            k += 1
        raise QSError("transformed ball needs a deeper residue table than allowed")
