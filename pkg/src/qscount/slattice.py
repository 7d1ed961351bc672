"""S-lattices in Q_S^n: covolumes of rational subspaces, the alpha
function, projection to covolume-1 real lattices, and the Siegel
transform of product-ball indicators.

Rational-exact lattices only for alpha/projection: a basis matrix over Q
(columns are generators) read diagonally at every place.  Covolume data
is kept as exact squared rationals; float views are provided on top.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction


import numpy as np

from . import linalg
from .errors import BudgetExceeded, NotSaturated, NotUnimodular, QSError
from .padic import (check_odd_prime, valuation, wedge_norm_inf_sq,
                    wedge_norm_p)

ALPHA_BUDGET = 2_000_000


def _strip_s(x: int, primes) -> int:
    for p in primes:
        while x % p == 0:
            x //= p
    return x


class SLattice:
    """Z_S-module A * Z_S^n with A an invertible rational matrix (columns)."""

    def __init__(self, basis, primes):
        self.primes = tuple(sorted(check_odd_prime(p) for p in primes))
        self.basis = linalg.frac_matrix(basis)
        self.n = len(self.basis)
        d = linalg.det(self.basis)
        if d == 0:
            raise QSError("basis is singular")
        self.det = d

    def is_unimodular(self) -> bool:
        """Product of |det|_p over all places of S equals 1: det is ± an S-unit."""
        num = _strip_s(abs(self.det.numerator), self.primes)
        den = _strip_s(self.det.denominator, self.primes)
        return num == 1 and den == 1

    def vector(self, coords):
        return linalg.mat_vec(self.basis, [Fraction(c) for c in coords])

    def coords(self, vector):
        return linalg.solve(self.basis, [Fraction(c) for c in vector])

    def __repr__(self):
        return f"SLattice(n={self.n}, S_f={list(self.primes)})"


@dataclass
class RationalSubspace:
    """Span of generators drawn from the lattice (ambient rational vectors)."""
    generators: list

    @property
    def dim(self):
        return len(self.generators)


def _coords_in_zs(lattice: SLattice, vectors, allow_scaling=False):
    coords = []
    for v in vectors:
        c = lattice.coords(v)
        mult = 1
        for x in c:
            den = _strip_s(x.denominator, lattice.primes)
            if den != 1:
                if not allow_scaling:
                    raise QSError("generator does not lie in the lattice")
                mult = mult * den // math.gcd(mult, den)
        coords.append([x * mult for x in c])
    return coords


def _integerize_columns(coords, primes):
    """Scale each column by an S-unit to make it integral (same Z_S-span).

    Callers must pass Z_S-coordinates (denominators supported on S).
    """
    out = []
    for c in coords:
        mult = 1
        for p in primes:
            e = max((-valuation(x, p) for x in c if x != 0), default=0)
            if e > 0:
                mult *= p ** e
        col = [x * mult for x in c]
        if any(x.denominator != 1 for x in col):
            raise QSError("coordinates are not S-integral")
        out.append([int(x) for x in col])
    return out


def _clear_s_denominators(columns, primes):
    """Scale each column by an S-unit so no entry has an S-prime denominator.

    Entries may keep denominators prime to S; those are p-adic units at
    every finite place of S.
    """
    out = []
    for c in columns:
        mult = Fraction(1)
        for p in primes:
            e = max((-valuation(x, p) for x in c if x != 0), default=0)
            if e > 0:
                mult *= Fraction(p) ** e
        out.append([Fraction(x) * mult for x in c])
    return out


def saturate(lattice: SLattice, vectors):
    """Z_S-basis of (span vectors) ∩ lattice, by integer saturation of coordinates.

    The spanning set may be any rational vectors; scaling a generator
    does not change the subspace.
    """
    coords = _coords_in_zs(lattice, vectors, allow_scaling=True)
    cols = _integerize_columns(coords, lattice.primes)
    sat = linalg.saturation_basis(cols, lattice.n)
    return [lattice.vector(c) for c in sat]


def is_saturated_basis(lattice: SLattice, vectors) -> bool:
    coords = _coords_in_zs(lattice, vectors)
    cols = _integerize_columns(coords, lattice.primes)
    M = [[cols[j][i] for j in range(len(cols))] for i in range(lattice.n)]
    _, D, _ = linalg.smith_normal_form(M)
    k = min(len(D), len(D[0]) if D else 0)
    divisors = [D[i][i] for i in range(k) if D[i][i] != 0]
    if len(divisors) != len(vectors):
        return False
    return all(_strip_s(abs(d), lattice.primes) == 1 for d in divisors)


def d_subspace_sq(lattice: SLattice, subspace: RationalSubspace,
                  auto_saturate=True) -> Fraction:
    """Exact square of d(L) = prod_p ||v1 ∧ ... ∧ vi||_p over a basis of L ∩ Δ."""
    gens = subspace.generators
    if not gens:
        return Fraction(1)
    if auto_saturate:
        basis = saturate(lattice, gens)
    else:
        if not is_saturated_basis(lattice, gens):
            raise NotSaturated("generators do not span L ∩ Δ over Z_S")
        basis = [[Fraction(c) for c in v] for v in gens]
    out = wedge_norm_inf_sq(basis)
    for p in lattice.primes:
        out *= wedge_norm_p(basis, p) ** 2
    return out


def d_subspace(lattice: SLattice, subspace: RationalSubspace,
               auto_saturate=True) -> float:
    return math.sqrt(float(d_subspace_sq(lattice, subspace, auto_saturate)))


def subspace_sum(a: RationalSubspace, b: RationalSubspace) -> RationalSubspace:
    gens = [list(map(Fraction, v)) for v in a.generators + b.generators]
    rows = []
    for v in gens:
        if _rank(rows + [v]) > len(rows):
            rows.append(v)
    return RationalSubspace(rows)


def subspace_intersection(a: RationalSubspace, b: RationalSubspace) -> RationalSubspace:
    """Intersection via the kernel of the stacked coefficient problem."""
    A = [list(map(Fraction, v)) for v in a.generators]
    B = [list(map(Fraction, v)) for v in b.generators]
    n = len(A[0]) if A else len(B[0])
    # x = sum s_i A_i = sum t_j B_j: solve [A^T | -B^T] (s,t) = 0
    rows = [[A[i][r] for i in range(len(A))] + [-B[j][r] for j in range(len(B))]
            for r in range(n)]
    out = []
    for sol in linalg.kernel_basis(rows):
        s = sol[:len(A)]
        v = [sum(A[i][r] * s[i] for i in range(len(A))) for r in range(n)]
        if any(c != 0 for c in v):
            out.append(v)
    # reduce to an independent spanning set
    span = []
    for v in out:
        if _rank(span + [v]) > len(span):
            span.append(v)
    return RationalSubspace(span)


def _rank(rows):
    if not rows:
        return 0
    M = [list(map(Fraction, r)) for r in rows]
    ncols = len(M[0])
    r = 0
    for c in range(ncols):
        piv = next((i for i in range(r, len(M)) if M[i][c] != 0), None)
        if piv is None:
            continue
        M[r], M[piv] = M[piv], M[r]
        inv = 1 / M[r][c]
        M[r] = [x * inv for x in M[r]]
        for i in range(len(M)):
            if i != r and M[i][c] != 0:
                f = M[i][c]
                M[i] = [x - f * y for x, y in zip(M[i], M[r])]
        r += 1
    return r


# -- projection to the real place -------------------------------------------

def project_to_real(lattice: SLattice):
    """Z-basis of pi(Δ) = real parts of lattice points with p-integral
    components at every finite place; covolume 1 for unimodular input.

    Z_S-column operations drive every finite-place basis matrix into
    GL_n(Z_p); the real components of the adjusted basis are returned.
    """
    if not lattice.is_unimodular():
        raise NotUnimodular("projection needs a unimodular lattice")
    n = lattice.n
    cols = _clear_s_denominators([[lattice.basis[r][c] for r in range(n)]
                                  for c in range(n)], lattice.primes)
    A = [[cols[j][i] for j in range(n)] for i in range(n)]
    for p in lattice.primes:
        while True:
            d = linalg.det(A)
            v = valuation(d, p)
            if v == 0:
                break
            if v < 0:  # pragma: no cover - cleared above
                raise QSError("determinant has a p-denominator after clearing")
            rows = [[(A[i][j].numerator * pow(A[i][j].denominator, -1, p)) % p
                     for j in range(n)] for i in range(n)]
            ker = linalg.kernel_mod_p(rows, p)
            if ker is None:  # pragma: no cover
                raise QSError("no kernel though determinant is divisible")
            j0 = next(j for j in range(n) if ker[j] % p)
            # normalize so the change of basis has determinant 1/p (an S-unit)
            inv = pow(ker[j0], -1, p)
            ker = [k * inv % p for k in ker]
            assert ker[j0] == 1
            newcol = [sum(Fraction(ker[j]) * A[i][j] for j in range(n)) / p
                      for i in range(n)]
            assert all(c == 0 or valuation(c, p) >= 0 for c in newcol)
            for i in range(n):
                A[i][j0] = newcol[i]
    d = linalg.det(A)
    if abs(d) != 1:
        raise NotUnimodular("reduced determinant is not ±1")  # pragma: no cover
    return A


# -- alpha ---------------------------------------------------------------------

def _gram_sq(B):
    """Exact Gram matrix B^T B."""
    n = len(B)
    return [[sum(B[k][i] * B[k][j] for k in range(n)) for j in range(n)] for i in range(n)]


def _short_vectors(B, bound_sq: Fraction, budget=ALPHA_BUDGET):
    """All primitive integer coefficient vectors c with ||B c||^2 <= bound_sq."""
    n = len(B)
    Binv = linalg.inverse(B)
    bound = math.sqrt(float(bound_sq)) * 1.0000001
    limits = []
    for i in range(n):
        row_norm = math.sqrt(sum(float(Binv[i][j]) ** 2 for j in range(n)))
        limits.append(int(math.floor(row_norm * bound + 1e-9)) + 1)
    total = 1
    for L in limits:
        total *= 2 * L + 1
    if total > budget:
        raise BudgetExceeded(f"short-vector box {total} exceeds the budget")
    G = _gram_sq(B)
    Gnum = np.array([[float(x) for x in row] for row in G])
    axes = [np.arange(-L, L + 1, dtype=np.int64) for L in limits]
    mesh = np.meshgrid(*axes, indexing="ij")
    C = np.stack([m.reshape(-1) for m in mesh], axis=1)
    nsq = np.einsum("ij,jk,ik->i", C.astype(float), Gnum, C.astype(float))
    cand = C[nsq <= float(bound_sq) * (1 + 1e-9)]
    out = []
    seen = set()
    for c in cand:
        c = [int(x) for x in c]
        if all(x == 0 for x in c):
            continue
        g = math.gcd(*[abs(x) for x in c])
        c = tuple(x // g for x in c)
        if c in seen or tuple(-x for x in c) in seen:
            continue
        seen.add(c)
        # exact confirmation
        vsq = sum(G[i][j] * c[i] * c[j] for i in range(n) for j in range(n))
        if vsq <= bound_sq:
            out.append((vsq, list(c)))
    out.sort(key=lambda t: (t[0], t[1]))
    return out


def _lambda1_sq(B, budget=ALPHA_BUDGET) -> Fraction:
    """Exact squared first minimum, by doubling the search radius."""
    n = len(B)
    guess = min(sum(B[i][j] ** 2 for i in range(n)) for j in range(n))
    while True:
        found = _short_vectors(B, guess, budget)
        if found:
            return found[0][0]
        guess *= 4


def alpha_i_sq(lattice: SLattice, i: int, budget=ALPHA_BUDGET) -> Fraction:
    """Exact square of alpha_i(Δ) = sup 1/d(L) over i-dim Δ-rational subspaces.

    Computed on the projected real lattice (the two agree); i = 1 and
    i = n-1 via first minima of the lattice and its dual, other i by
    bounded pair enumeration with exact saturation.
    """
    n = lattice.n
    if i < 0 or i > n:
        raise QSError("dimension out of range")
    if i in (0, n):
        if not lattice.is_unimodular():
            raise NotUnimodular("alpha is defined for unimodular lattices here")
        return Fraction(1)
    B = project_to_real(lattice)
    if i == 1:
        return 1 / _lambda1_sq(B, budget)
    if i == n - 1:
        Bdual = linalg.transpose(linalg.inverse(B))
        return 1 / _lambda1_sq(Bdual, budget)
    if i != 2:
        raise QSError("alpha enumeration implemented for i in {0,1,2,n-1,n}")
    # rank-2: enumerate short vector pairs, saturate exactly
    lam1 = _lambda1_sq(B, budget)
    lam2 = _second_minimum_sq(B, lam1, budget)
    # Minkowski-reduced bases of a minimal rank-2 sublattice fit in this radius
    radius = Fraction(4, 3) * lam2 * 4
    cand = _short_vectors(B, radius, budget)
    G = _gram_sq(B)
    best = None
    for (sq1, c1), (sq2, c2) in itertools.combinations(cand, 2):
        minors = [c1[a] * c2[b] - c1[b] * c2[a]
                  for a in range(n) for b in range(a + 1, n)]
        if all(m == 0 for m in minors):
            continue
        g = 0
        for m in minors:
            g = math.gcd(g, abs(m))
        gram2 = [[sum(G[a][b] * u[a] * v[b] for a in range(n) for b in range(n))
                  for v in (c1, c2)] for u in (c1, c2)]
        dsq = (gram2[0][0] * gram2[1][1] - gram2[0][1] * gram2[1][0]) / (g * g)
        if best is None or dsq < best:
            best = dsq
    if best is None:
        raise BudgetExceeded("no rank-2 sublattice found in the search radius")
    return 1 / best


def _second_minimum_sq(B, lam1_sq, budget):
    bound = lam1_sq
    while True:
        vecs = _short_vectors(B, bound, budget)
        for sq, c in vecs:
            if sq > lam1_sq or not _parallel(vecs[0][1], c):
                pass
        # find two independent vectors within the bound
        for idx in range(1, len(vecs)):
            if not _parallel(vecs[0][1], vecs[idx][1]):
                return vecs[idx][0]
        bound *= 4


def _parallel(a, b):
    n = len(a)
    return all(a[i] * b[j] - a[j] * b[i] == 0 for i in range(n) for j in range(n))


def alpha_sq(lattice: SLattice, budget=ALPHA_BUDGET) -> Fraction:
    """max_i alpha_i^2 over 0 <= i <= n (n <= 4 fully supported)."""
    out = Fraction(1)
    for i in range(lattice.n + 1):
        if 2 < i < lattice.n - 1:
            continue  # not reachable for n <= 4
        out = max(out, alpha_i_sq(lattice, i, budget))
    return out


def alpha(lattice: SLattice, i: int | None = None, budget=ALPHA_BUDGET) -> float:
    if i is None:
        return math.sqrt(float(alpha_sq(lattice, budget)))
    return math.sqrt(float(alpha_i_sq(lattice, i, budget)))


# -- Siegel transform ----------------------------------------------------------

def siegel_transform(lattice: SLattice, real_radius: float,
                     finite_radii: dict | None = None, budget=ALPHA_BUDGET):
    """Sum of the indicator of a product ball over the lattice: the number
    of lattice points v with ||v||_inf <= R and ||v||_p <= p^{m_p}.

    The lattice points obeying the finite-place conditions form a real
    lattice; its LLL-reduced Z-basis keeps the enumeration box close to
    the actual count even for badly skewed lattices.  Exact membership
    checks on rational coordinates decide every candidate.
    """
    n = lattice.n
    finite_radii = dict(finite_radii or {})
    for p in lattice.primes:
        finite_radii.setdefault(p, 0)
    # ||v||_p <= p^(m_p) iff ||s v||_p <= 1 for s = prod p^(m_p), so the
    # admissible points are (1/s) * pi(s Δ)
    s = Fraction(1)
    for p in lattice.primes:
        s *= Fraction(p) ** finite_radii[p]
    scaled = SLattice([[c * s for c in row] for row in lattice.basis],
                      lattice.primes)
    P = project_to_real(scaled)
    cols = [[P[i][j] / s for i in range(n)] for j in range(n)]
    cols = linalg.lll_reduce(cols)
    B = [[cols[j][i] for j in range(n)] for i in range(n)]
    Binv = linalg.inverse(B)
    limits = []
    for i in range(n):
        row_norm = math.sqrt(sum(float(Binv[i][j]) ** 2 for j in range(n)))
        limits.append(int(math.floor(row_norm * real_radius + 1e-9)) + 1)
    total = 1
    for L in limits:
        total *= 2 * L + 1
    if total > budget:
        raise BudgetExceeded(f"Siegel enumeration box {total} exceeds the budget")
    axes = [np.arange(-L, L + 1, dtype=np.int64) for L in limits]
    mesh = np.meshgrid(*axes, indexing="ij")
    W = np.stack([m.reshape(-1) for m in mesh], axis=1)
    Bf = np.array([[float(c) for c in row] for row in B])
    V = W.astype(float) @ Bf.T
    mask = (V * V).sum(axis=1) <= real_radius * real_radius * (1 + 1e-9) + 1e-9
    count = 0
    Rsq = Fraction(real_radius) ** 2
    for w in W[mask]:
        v = [sum(B[i][j] * int(w[j]) for j in range(n)) for i in range(n)]
        if sum(c * c for c in v) <= Rsq:
            count += 1
    return count
