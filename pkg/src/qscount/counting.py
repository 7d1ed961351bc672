"""Counting S-integral vectors in dilated regions with form values in
prescribed S-adic intervals, plus the ternary null-vector constructions.

The counter writes v = w / D with D clearing all admissible S-denominators,
iterates the first n-1 integer coordinates (one as a vectorized axis),
prunes by per-place congruence tables mod p^L, and resolves the last
coordinate as real intervals intersected with an arithmetic progression.
Real comparisons are outward-rounded; boundary hits that the rounding
cannot decide are counted separately in `undecided`.
"""

from __future__ import annotations

import itertools
import math
import time as _time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import NegativeSquare, NotASquare, PrecisionExhausted, QSError
from .padic import PadicNumber, SScalar, sqrt_padic, valuation
from .qform import INF_PLACE, QuadraticFormP, QuadraticFormS, Region, SInterval, STime

FAST_MODULUS_CAP = 700
SLOW_BOX_CAP = 120
RANK_CAP = 12
EPS = 1e-7


def _pack_solutions(table, cap):
    """Residue lists per (beta, gamma) cell, padded to `cap` with -1.

    Cells with more solutions than the cap are flagged; the counters fall
    back to the dense per-residue loop for elements in those cells.
    """
    mod = table.shape[0]
    counts = table.sum(axis=2)
    overflow = counts > cap
    packed = np.full((mod, mod, cap), -1, dtype=np.int64)
    be, ga, a = np.nonzero(table)
    order = np.lexsort((a, ga, be))
    be, ga, a = be[order], ga[order], a[order]
    # rank within each (beta, gamma) run
    new = np.ones(len(be), dtype=bool)
    new[1:] = (be[1:] != be[:-1]) | (ga[1:] != ga[:-1])
    idx = np.arange(len(be))
    start = np.maximum.accumulate(np.where(new, idx, 0))
    rank = idx - start
    keep = rank < cap
    packed[be[keep], ga[keep], rank[keep]] = a[keep]
    return packed, overflow


# -- plan -------------------------------------------------------------------

@dataclass
class PlaceStride:
    p: int
    L: int            # congruence level; <= 0 means vacuous
    modulus: int
    alpha: int        # coefficient of w_last^2
    cross: list       # cross coefficients (2*G[last][j] scaled), j != last
    rest_quad: dict   # quadratic part on the first n-1 coordinates
    rest_lin: list
    rest_const: int   # includes the -D^2 a_p target
    never: bool = False  # congruence provably unsatisfiable
    table: np.ndarray | None = None  # allowed[beta, gamma, a] boolean
    packed: np.ndarray | None = None  # packed[beta, gamma, rank] = residue or -1
    packed_overflow: np.ndarray | None = None  # cells with > rank_cap solutions

    def pruning_factor(self):
        if self.never:
            return 0.0
        if self.L <= 0 or self.table is None:
            return 1.0
        return float(self.table.mean())


@dataclass
class EnumerationPlan:
    n: int
    D: int
    box: int
    order: tuple
    places: list
    fast: bool
    notes: str = ""

    def total_modulus(self):
        out = 1
        for st in self.places:
            if st.L > 0:
                out *= st.modulus
        return out


@dataclass
class CountResult:
    count: int
    undecided: int
    plan: EnumerationPlan
    wall_ms: float


def _clear_to_int(c: Fraction, p, mod):
    """Integer representative mod p^L of a rational with p-free denominator."""
    if valuation(c, p) < 0:
        raise QSError("p in denominator after scaling; enlarge the level")
    return c.numerator * pow(c.denominator, -1, mod) % mod


def build_plan(q: QuadraticFormS, interval: SInterval, region: Region,
               T: STime) -> EnumerationPlan:
    n = q.n
    primes = q.finite_primes
    if sorted(T.exponents) != primes or sorted(interval.finite) != primes:
        raise QSError("time/interval places must match the form's finite places")
    for p, e in T.exponents.items():
        if e < 0:
            raise QSError("negative p-adic dilation exponents are not supported")
    D = 1
    mexp = {}
    for p in primes:
        mexp[p] = T.exponents[p] + max(region.rho_max_exponent(p), 0)
        D *= p ** mexp[p]
    box = int(math.floor(T.t_inf * region.rho_max_inf() * D + EPS))
    places = []
    last = n - 1
    for p in primes:
        center, b = interval.finite[p]
        if isinstance(center, PadicNumber):
            need = b + 2 * mexp[p] + 2
            if center.abs_precision() < need:
                raise PrecisionExhausted("interval center too coarse for this time")
            center = center.rational_approx()
        center = Fraction(center)
        gram = q.at(p).gram
        coeffs = {}
        for i in range(n):
            for j in range(i, n):
                c = Fraction(gram[i][j]) * (1 if i == j else 2)
                if c:
                    coeffs[(i, j)] = c
        target = center * D * D
        vals = [valuation(c, p) for c in coeffs.values()]
        if target != 0:
            vals.append(valuation(target, p))
        kappa = min(0, min(vals, default=0))
        L = b + 2 * mexp[p] - kappa
        never = False
        if target != 0 and valuation(target, p) < min(
                min((valuation(c, p) for c in coeffs.values()), default=10 ** 9),
                b + 2 * mexp[p]):
            never = True  # the target's valuation can never be matched
        if L <= 0 and not never:
            places.append(PlaceStride(p, L, 1, 0, [0] * n, {}, [0] * n, 0))
            continue
        L = max(L, 1)
        mod = p ** L
        scale = Fraction(p) ** (-kappa)
        alpha = _clear_to_int(coeffs.get((last, last), Fraction(0)) * scale, p, mod)
        cross = [0] * n
        rest_quad, rest_lin = {}, [0] * n
        for (i, j), c in coeffs.items():
            ci = _clear_to_int(c * scale, p, mod)
            if i == last and j == last:
                continue
            if j == last:
                cross[i] = ci
            elif i == last:
                cross[j] = ci
            else:
                rest_quad[(i, j)] = ci
        rest_const = _clear_to_int(-target * scale, p, mod)
        st = PlaceStride(p, L, mod, alpha, cross, rest_quad, rest_lin, rest_const,
                         never=never)
        if mod <= FAST_MODULUS_CAP:
            a = np.arange(mod, dtype=np.int64)
            be = np.arange(mod, dtype=np.int64)[:, None, None]
            ga = np.arange(mod, dtype=np.int64)[None, :, None]
            st.table = ((alpha * a * a + be * a + ga) % mod == 0)
            st.packed, st.packed_overflow = _pack_solutions(st.table, RANK_CAP)
        places.append(st)
    fast = (all(region.is_ball(p) for p in primes)
            and region.inf[0] == "ball"
            and all(st.table is not None or st.L <= 0 for st in places))
    notes = "fast last-coordinate resolution" if fast else "generic membership scan"
    return EnumerationPlan(n, D, box, tuple(range(n)), places, fast, notes)


# -- the fast kernel ---------------------------------------------------------

def _real_last_intervals(A, Bv, Cv, lo, hi, big):
    """Solutions of A x^2 + Bv x + Cv in (lo, hi) as up to two intervals."""
    shape = Bv.shape
    L1 = np.full(shape, 1.0)
    R1 = np.full(shape, 0.0)
    L2 = np.full(shape, 1.0)
    R2 = np.full(shape, 0.0)
    if abs(A) > 0:
        disc_hi = Bv * Bv - 4 * A * (Cv - hi)
        disc_lo = Bv * Bv - 4 * A * (Cv - lo)
        with np.errstate(invalid="ignore"):
            sq_hi = np.sqrt(np.maximum(disc_hi, 0.0))
            sq_lo = np.sqrt(np.maximum(disc_lo, 0.0))
        r1h = (-Bv - sq_hi) / (2 * A)
        r2h = (-Bv + sq_hi) / (2 * A)
        r1h, r2h = np.minimum(r1h, r2h), np.maximum(r1h, r2h)
        r1l = (-Bv - sq_lo) / (2 * A)
        r2l = (-Bv + sq_lo) / (2 * A)
        r1l, r2l = np.minimum(r1l, r2l), np.maximum(r1l, r2l)
        if A > 0:
            has = disc_hi > 0
            inner = disc_lo > 0  # the (lo) parabola cuts out the middle
            L1 = np.where(has, r1h, 1.0)
            R1 = np.where(has, np.where(inner, np.minimum(r1l, r2h), r2h), 0.0)
            L2 = np.where(has & inner, np.maximum(r2l, r1h), 1.0)
            R2 = np.where(has & inner, r2h, 0.0)
        else:
            has = disc_lo > 0
            outer = disc_hi > 0
            L1 = np.where(has, r1l, 1.0)
            R1 = np.where(has, np.where(outer, np.minimum(r1h, r2l), r2l), 0.0)
            L2 = np.where(has & outer, np.maximum(r2h, r1l), 1.0)
            R2 = np.where(has & outer, r2l, 0.0)
    else:
        nz = Bv != 0
        with np.errstate(divide="ignore", invalid="ignore"):
            e1 = (lo - Cv) / np.where(nz, Bv, 1.0)
            e2 = (hi - Cv) / np.where(nz, Bv, 1.0)
        lo_b = np.minimum(e1, e2)
        hi_b = np.maximum(e1, e2)
        allv = (~nz) & (Cv > lo) & (Cv < hi)
        L1 = np.where(nz, lo_b, np.where(allv, -big, 1.0))
        R1 = np.where(nz, hi_b, np.where(allv, big, 0.0))
    return (L1, R1), (L2, R2)


def _count_progressions(L, R, masks_by_a, M, eps):
    """Count integers in [L+eps, R-eps] across residues a with boolean masks."""
    total = 0
    Ls = L + eps
    Rs = R - eps
    ok = Rs >= Ls
    if not ok.any():
        return 0
    hi = np.floor(Rs)
    lo = np.ceil(Ls)
    for a, mask in masks_by_a:
        m = mask & ok
        if not m.any():
            continue
        cnt = np.floor((hi - a) / M) - np.floor((lo - 1 - a) / M)
        total += int(cnt[m].sum())
    return total


def count_N(q: QuadraticFormS, interval: SInterval, region: Region, T: STime,
            workers: int = 1, plan: EnumerationPlan | None = None) -> CountResult:
    """card{v in Z_S^n ∩ T*Omega : q_p(v) in I_p for all p}, exactly.

    `undecided` counts real-boundary hits the outward rounding cannot
    классify; it must be 0 for a certified result.
    """
    start = _time.perf_counter()
    plan = plan or build_plan(q, interval, region, T)
    if any(st.never for st in plan.places):
        return CountResult(0, 0, plan, (_time.perf_counter() - start) * 1e3)
    if plan.fast:
        count, undecided = _count_fast(q, interval, region, T, plan, workers)
    else:
        count, undecided = _count_generic(q, interval, region, T, plan, workers)
    return CountResult(count, undecided, plan, (_time.perf_counter() - start) * 1e3)


def _count_fast(q, interval, region, T, plan, workers):
    n, D, B = plan.n, plan.D, plan.box
    last = n - 1
    grid_coords = list(range(1, n - 1))
    ginf = np.array([[float(c) for c in row] for row in q.at(INF_PLACE).gram])
    lo = float(interval.real[0]) * D * D
    hi = float(interval.real[1]) * D * D
    Rsq = (T.t_inf * region.rho_max_inf() * D) ** 2
    strides = [st for st in plan.places if st.L > 0]
    M = 1
    for st in strides:
        M *= st.modulus
    rng = np.arange(-B, B + 1, dtype=np.int64)
    mesh = np.meshgrid(*([rng] * len(grid_coords)), indexing="ij")
    gvals = {c: m.reshape(-1) for c, m in zip(grid_coords, mesh)}
    gflt = {c: v.astype(float) for c, v in gvals.items()}
    big = float(B + 2)
    A = ginf[last, last]
    ball_exact = abs(Rsq - round(Rsq)) < 1e-9 and Rsq < 2 ** 52

    def work(w0_values):
        total = 0
        undec = 0
        for w0 in w0_values:
            w0 = int(w0)
            Bv = 2 * ginf[last, 0] * w0
            Cv = ginf[0, 0] * float(w0) * float(w0)
            sumsq = float(w0) * float(w0)
            for c in grid_coords:
                Bv = Bv + 2 * ginf[last, c] * gflt[c]
                Cv = Cv + 2 * ginf[0, c] * w0 * gflt[c]
                sumsq = sumsq + gflt[c] * gflt[c]
            for ci in grid_coords:
                for cj in grid_coords:
                    Cv = Cv + ginf[ci, cj] * gflt[ci] * gflt[cj]
            if np.isscalar(Bv) or Bv.shape == ():
                Bv = np.full(len(next(iter(gvals.values()))), float(Bv))
            (L1, R1), (L2, R2i) = _real_last_intervals(A, Bv, Cv, lo, hi, big)
            if ball_exact:
                # strict open ball with integral radius^2: decide exactly
                cap = np.round(Rsq) - sumsq - 1.0
                dead = cap < 0
                with np.errstate(invalid="ignore"):
                    sb = np.floor(np.sqrt(np.maximum(cap, 0.0)) + 1e-9) + 0.25
            else:
                s_ball = Rsq - sumsq
                dead = s_ball < 0
                with np.errstate(invalid="ignore"):
                    sb = np.sqrt(np.maximum(s_ball, 0.0))
            L1 = np.where(dead, 1.0, np.maximum(L1, -sb))
            R1 = np.where(dead, 0.0, np.minimum(R1, sb))
            L2 = np.where(dead, 1.0, np.maximum(L2, -sb))
            R2i = np.where(dead, 0.0, np.minimum(R2i, sb))
            intervals = ((L1, R1), (L2, R2i))
            if len(strides) == 1 and strides[0].packed is not None:
                bidx, gidx = _stride_indices(strides[0], w0, gvals)
                inner = _count_by_rank(strides[0], bidx, gidx, intervals, EPS)
                outer_ct = _count_by_rank(strides[0], bidx, gidx, intervals, -EPS)
            else:
                masks = _stride_masks(strides, w0, gvals, M)
                inner = sum(_count_progressions(L, R, masks, M, EPS)
                            for L, R in intervals)
                outer_ct = sum(_count_progressions(L, R, masks, M, -EPS)
                               for L, R in intervals)
            total += inner
            undec += outer_ct - inner
        return total, undec

    values = list(range(-B, B + 1))
    if workers <= 1 or len(values) < 4:
        total, undec = work(values)
    else:
        chunks = [values[i::workers] for i in range(workers)]
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(work, chunks))
        total = sum(p[0] for p in parts)
        undec = sum(p[1] for p in parts)
    return total, undec


def _stride_indices(st, w0, gvals):
    """Per-grid-element (beta, gamma) residues for one stride place."""
    size = len(next(iter(gvals.values()))) if gvals else 1
    mod = st.modulus
    be = np.full(size, st.cross[0] * w0, dtype=np.int64)
    ga = np.full(size, st.rest_const
                 + st.rest_quad.get((0, 0), 0) * (w0 % mod) * (w0 % mod),
                 dtype=np.int64)
    for c, arr in gvals.items():
        am = arr % mod
        be = be + st.cross[c] * am
        ga = ga + st.rest_quad.get((c, c), 0) * am * am
        ga = ga + st.rest_quad.get((0, c), 0) * (w0 % mod) * am
    coords = sorted(gvals)
    for x in range(len(coords)):
        for y in range(x + 1, len(coords)):
            ci, cj = coords[x], coords[y]
            cf = st.rest_quad.get((ci, cj), 0)
            if cf:
                ga = ga + cf * (gvals[ci] % mod) * (gvals[cj] % mod)
    return (be % mod).astype(np.int64), (ga % mod).astype(np.int64)


def _stride_masks(strides, w0, gvals, M):
    """(a, boolean mask over the grid) pairs for w_last residues mod M."""
    size = len(next(iter(gvals.values()))) if gvals else 1
    if not strides:
        return [(a, np.ones(size, dtype=bool)) for a in range(M)]
    pairs = [_stride_indices(st, w0, gvals) for st in strides]
    out = []
    for a in range(M):
        mask = None
        for st, (bi, gi) in zip(strides, pairs):
            m = st.table[bi, gi, a % st.modulus]
            mask = m if mask is None else (mask & m)
        if mask.any():
            out.append((a, mask))
    return out


def _count_by_rank(st, bidx, gidx, intervals, eps):
    """Single-place counting via packed per-cell residue lists."""
    M = st.modulus
    total = 0
    ovf = st.packed_overflow[bidx, gidx]
    for L, R in intervals:
        Ls = L + eps
        Rs = R - eps
        ok = Rs >= Ls
        if not ok.any():
            continue
        hi = np.floor(Rs)
        lo = np.ceil(Ls)
        base = ok & ~ovf
        for r in range(st.packed.shape[2]):
            a_vec = st.packed[bidx, gidx, r]
            m = base & (a_vec >= 0)
            if not m.any():
                break
            cnt = np.floor((hi - a_vec) / M) - np.floor((lo - 1 - a_vec) / M)
            total += int(cnt[m].sum())
        heavy = ok & ovf
        if heavy.any():
            idx = np.flatnonzero(heavy)
            cells = {}
            for t in idx:
                cells.setdefault((int(bidx[t]), int(gidx[t])), []).append(t)
            for (b, g), members in cells.items():
                residues = np.flatnonzero(st.table[b, g])
                mem = np.array(members)
                for a in residues:
                    cnt = (np.floor((hi[mem] - a) / M)
                           - np.floor((lo[mem] - 1 - a) / M))
                    total += int(cnt.sum())
    return total


# -- generic membership scan (tables, sphere functions, odd shapes) ----------

def _count_generic(q, interval, region, T, plan, workers):
    n, D, B = plan.n, plan.D, plan.box
    if B > SLOW_BOX_CAP:
        raise QSError(f"generic path caps the box at {SLOW_BOX_CAP}; got {B}")
    primes = q.finite_primes
    lo = float(interval.real[0]) * D * D
    hi = float(interval.real[1]) * D * D
    ginf = np.array([[float(c) for c in row] for row in q.at(INF_PLACE).gram])
    rng = np.arange(-B, B + 1, dtype=np.int64)

    def work(w0_values):
        count = undec = 0
        for w0 in w0_values:
            grids = np.meshgrid(np.array([w0], dtype=np.int64),
                                *([rng] * (n - 1)), indexing="ij")
            W = np.stack([g.reshape(-1) for g in grids], axis=1)
            Wf = W.astype(float)
            qv = np.einsum("ij,jk,ik->i", Wf, ginf, Wf)
            inner = (qv > lo + EPS) & (qv < hi - EPS)
            outer = (qv > lo - EPS) & (qv < hi + EPS)
            inner &= _region_mask_inf(W, region, T, D, -EPS)
            outer &= _region_mask_inf(W, region, T, D, EPS)
            for p in primes:
                mask_p = _place_mask(q, interval, region, T, p, W, D)
                inner &= mask_p
                outer &= mask_p
            count += int(inner.sum())
            undec += int(outer.sum() - inner.sum())
        return count, undec

    values = list(range(-B, B + 1))
    if workers <= 1 or len(values) < 4:
        return work(values)
    chunks = [values[i::workers] for i in range(workers)]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        parts = list(ex.map(work, chunks))
    return sum(p[0] for p in parts), sum(p[1] for p in parts)


def _region_mask_inf(W, region, T, D, eps):
    norms = np.sqrt((W.astype(float) ** 2).sum(axis=1))
    if region.inf[0] == "ball":
        return norms <= T.t_inf * region.inf[1] * D + eps
    out = np.ones(len(W), dtype=bool)
    nz = norms > 0
    dirs = np.zeros_like(W, dtype=float)
    dirs[nz] = W[nz].astype(float) / norms[nz][:, None]
    rho = np.array([region.rho_inf(d) if ok else 1.0 for d, ok in zip(dirs, nz)])
    out[nz] = norms[nz] <= T.t_inf * rho[nz] * D + eps
    return out


def _place_mask(q, interval, region, T, p, W, D):
    n = W.shape[1]
    mexp = 0
    d = D
    while d % p == 0:
        d //= p
        mexp += 1
    center, b = interval.finite[p]
    if isinstance(center, PadicNumber):
        center = center.rational_approx()
    center = Fraction(center)
    # congruence on q_p(w) - D^2 a_p
    gram = q.at(p).gram
    coeffs = {}
    for i in range(n):
        for j in range(i, n):
            c = Fraction(gram[i][j]) * (1 if i == j else 2)
            if c:
                coeffs[(i, j)] = c
    target = center * D * D
    vals = [valuation(c, p) for c in coeffs.values()]
    if target != 0:
        vals.append(valuation(target, p))
    kappa = min(0, min(vals, default=0))
    L = b + 2 * mexp - kappa
    if L > 0:
        mod = p ** L
        scale = Fraction(p) ** (-kappa)
        acc = np.full(len(W), _clear_to_int(-target * scale, p, mod), dtype=np.int64)
        Wm = (W % mod).astype(np.int64)
        for (i, j), c in coeffs.items():
            ci = _clear_to_int(c * scale, p, mod)
            acc = (acc + ci * Wm[:, i] * Wm[:, j]) % mod
        cong = acc == 0
    else:
        cong = np.ones(len(W), dtype=bool)
    # norm/direction condition: val(w) >= mexp - n_p - rho(class)
    spec = region.spec_at(p)
    n_p = T.exponents[p]
    vals_w = _vec_valuations(W, p)
    if spec[0] == "ball":
        need = mexp - n_p - spec[1]
        normok = vals_w >= need
    else:
        _, k, table = spec
        mod = p ** k
        normok = np.zeros(len(W), dtype=bool)
        for idx in range(len(W)):
            v = vals_w[idx]
            if v >= 10 ** 8:
                normok[idx] = True  # zero vector: norm 0, always inside
                continue
            cls = tuple(int(c) // p ** v % mod for c in W[idx])
            normok[idx] = v >= mexp - n_p - table.get(cls, min(table.values()))
    return cong & normok


def _vec_valuations(W, p):
    out = np.full(len(W), 10 ** 8, dtype=np.int64)
    cur = W.copy()
    alive = (W != 0).any(axis=1)
    v = 0
    while alive.any() and v < 64:
        div = alive & (cur % p == 0).all(axis=1)
        exact = alive & ~div
        out[exact] = v
        alive = div
        cur = np.where(cur % p == 0, cur // p, cur)
        v += 1
    return out


# -- ternary null vectors and the perturbed forms -----------------------------

def transport_matrices(alpha):
    """Two exact isometries carrying x1 x2 - x3^2 = 0 onto x1^2 + x2^2 - a^2 x3^2 = 0."""
    a = Fraction(alpha)
    if a == 0:
        raise QSError("alpha must be nonzero")
    A1 = [[Fraction(1), Fraction(-1), Fraction(0)],
          [Fraction(0), Fraction(0), Fraction(2)],
          [1 / a, 1 / a, Fraction(0)]]
    A2 = [A1[1], A1[0], A1[2]]
    return A1, A2


def null_vectors(alpha, T: STime, shell=None):
    """Vectors x in Z_S^3 with x1 x2 = x3^2, |x_i|_p = T_p, ||x||_inf <= T_inf.

    Parametrized as x = a k (u^2, v^2, u v) with a = prod p^{-n_p}, all of
    k, u, v prime to every p in S_f and gcd(u, v) = 1; k runs over both
    signs.  `shell=(c1, c2)` restricts a*|k|*(u^2+v^2) to
    [c1*C, c2*C] with C = alpha*T_inf/sqrt(1+alpha^2), the range whose
    image lands in the Euclidean T_inf-ball under the transports.
    """
    a = Fraction(alpha)
    if a <= 0:
        raise QSError("alpha must be positive")
    primes = T.primes
    afac = Fraction(1)
    for p in primes:
        afac /= Fraction(p) ** T.exponents[p]
    t_inf = Fraction(T.t_inf)
    # exact threshold: (a k (u^2+v^2))^2 (1 + alpha^2) <= alpha^2 T^2
    bound_sq = a * a * t_inf * t_inf / (1 + a * a)
    lo_sq = Fraction(0)
    if shell is not None:
        c1, c2 = Fraction(shell[0]), Fraction(shell[1])
        lo_sq = bound_sq * c1 * c1
        bound_sq = bound_sq * c2 * c2
    out = []
    k = 0
    while True:
        k += 1
        if any(k % p == 0 for p in primes):
            continue
        base = afac * k
        if base * base * 4 > bound_sq:  # u^2+v^2 >= 2
            break
        smax = _isqrt_frac(bound_sq / (base * base))
        for u in range(1, _isqrt_int(smax) + 1):
            if any(u % p == 0 for p in primes):
                continue
            vmax = _isqrt_int(smax - u * u) if smax >= u * u else 0
            for v in range(-vmax, vmax + 1):
                if v == 0 or math.gcd(u, abs(v)) != 1:
                    continue
                if any(v % p == 0 for p in primes):
                    continue
                s = u * u + v * v
                t = base * base * s * s
                if t > bound_sq or (shell is not None and t < lo_sq):
                    continue
                for sign in (1, -1):
                    kk = sign * k
                    x = (afac * kk * u * u, afac * kk * v * v, afac * kk * u * v)
                    out.append(x)
    out.sort(key=lambda x: (abs(x[0] + x[1]), x))
    return out


def _isqrt_int(fr):
    fr = Fraction(fr)
    if fr < 0:
        return 0
    return math.isqrt(fr.numerator // fr.denominator)


def _isqrt_frac(fr):
    return Fraction(fr)


def mapped_null_vectors(alpha, T: STime, shell=None, half_maps=True):
    """Distinct images of the null family on the cone of x1^2+x2^2-a^2 x3^2.

    Applies both transports and, when the result stays S-integral, the
    half-scaled copies; every output satisfies the cone equation exactly
    and lies in the Euclidean T_inf-ball.
    """
    a = Fraction(alpha)
    prims = T.primes
    A1, A2 = transport_matrices(alpha)
    raw = null_vectors(alpha, T, shell=shell)
    seen = set()
    out = []

    def s_integral(y):
        for c in y:
            den = Fraction(c).denominator
            for p in prims:
                while den % p == 0:
                    den //= p
            if den != 1:
                return False
        return True

    for x in raw:
        for Amat in (A1, A2):
            y = tuple(sum(Amat[i][j] * x[j] for j in range(3)) for i in range(3))
            cands = [y]
            if half_maps and shell is None:
                h = tuple(c / 2 for c in y)
                if s_integral(h):
                    cands.append(h)
            for cand in cands:
                if cand in seen:
                    continue
                assert cand[0] ** 2 + cand[1] ** 2 == a * a * cand[2] ** 2
                seen.add(cand)
                out.append(cand)
    return out


@dataclass
class PerturbedForm:
    alpha: Fraction
    beta_sq_inf: Fraction
    beta_sq_p: dict
    beta: SScalar
    exponents: dict

    def form(self, irrational=True) -> QuadraticFormS:
        places = {INF_PLACE: QuadraticFormP(INF_PLACE, _diag3(float(self.beta_sq_inf)))}
        for p, bsq in self.beta_sq_p.items():
            places[p] = QuadraticFormP(p, _diag3(bsq))
        return QuadraticFormS(places, irrational=irrational)


def _diag3(bsq):
    return [[1, 0, 0], [0, 1, 0], [0, 0, -bsq]]


def perturb_beta(alpha, T: STime, unit_choices=None, prec=64) -> PerturbedForm:
    """beta with beta_inf^2 = a^2 - (1+a^2)/T_inf^2 and
    beta_p^2 = a^2 + u_p p^{2 n_p}; deterministic square roots.

    The exponent 2*n_p makes q^beta(x) land in Z_p exactly for every
    constructed null vector (|x_3|_p <= T_p).  Raises NegativeSquare or
    NotASquare when a component of T is too small.
    """
    a = Fraction(alpha)
    t_inf = Fraction(T.t_inf)
    bsq_inf = a * a - (1 + a * a) / (t_inf * t_inf)
    if bsq_inf <= 0:
        raise NegativeSquare("T_inf too small: beta_inf^2 <= 0")
    unit_choices = unit_choices or {}
    bsq_p, padics, exps = {}, {}, {}
    for p in T.primes:
        u = int(unit_choices.get(p, 1))
        if u % p == 0:
            raise QSError("u_p must be a unit")
        m = 2 * T.exponents[p]
        exps[p] = m
        bsq = a * a + u * Fraction(p) ** m
        try:
            root = sqrt_padic(bsq, N=prec, p=p)
        except NotASquare as exc:
            raise NotASquare(f"alpha^2 + u_p p^{m} is not a square in Q_{p}") from exc
        bsq_p[p] = bsq
        padics[p] = root
    beta = SScalar(math.sqrt(float(bsq_inf)), padics)
    return PerturbedForm(a, bsq_inf, bsq_p, beta, exps)
