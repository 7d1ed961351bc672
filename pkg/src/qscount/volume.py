"""p-adic volumes by residue counting, orbit volumes on unit cones,
the J kernel, per-place volume constants, and the volume function V.

The core engine counts solutions of an integer quadratic congruence
f(x) ≡ 0 mod p^l exactly: smooth residue points contribute
p^((m-1)(l-1)) lifts each, singular points recurse on the rescaled
polynomial two levels down.  Everything returned is an exact Fraction
except the real place, which carries a Monte-Carlo standard error.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import BudgetExceeded, NotStandardForm, QSError
from .padic import valuation
from .qform import INF_PLACE, QuadraticFormP, Region, SInterval, to_standard
from .ortho import standard_coefficients

DEFAULT_BUDGET = 200_000


# -- integer quadratic polynomials ---------------------------------------

class QuadPoly:
    """f(x) = sum_{i<=j} q[i,j] x_i x_j + sum b_i x_i + c with integer coefficients."""

    __slots__ = ("m", "quad", "lin", "const")

    def __init__(self, m, quad=None, lin=None, const=0):
        self.m = m
        self.quad = {k: int(v) for k, v in (quad or {}).items() if v}
        self.lin = [int(x) for x in (lin or [0] * m)]
        self.const = int(const)

    @classmethod
    def from_gram(cls, gram, p, level):
        """Integer congruence representative of x^t G x at the given level.

        Denominators prime to p are inverted mod p^level; a p-power
        denominator is an error (clear it first).
        """
        n = len(gram)
        mod = p ** level
        quad = {}
        for i in range(n):
            for j in range(i, n):
                c = Fraction(gram[i][j]) * (1 if i == j else 2)
                if c == 0:
                    continue
                if valuation(c, p) < 0:
                    raise QSError("Gram entry has a p in the denominator; scale the form")
                quad[(i, j)] = c.numerator * pow(c.denominator, -1, mod) % mod
        return cls(n, quad)

    def evaluate_int(self, x):
        out = self.const
        for (i, j), c in self.quad.items():
            out += c * x[i] * x[j]
        for i, b in enumerate(self.lin):
            out += b * x[i]
        return out

    def gradient_int(self, x):
        g = list(self.lin)
        for (i, j), c in self.quad.items():
            if i == j:
                g[i] += 2 * c * x[i]
            else:
                g[i] += c * x[j]
                g[j] += c * x[i]
        return g

    def shift_scale(self, r, k, p):
        """f(r + p^k y) as a QuadPoly in y."""
        pk = p ** k
        const = self.evaluate_int(r)
        grad = self.gradient_int(r)
        lin = [pk * g for g in grad]
        quad = {key: pk * pk * c for key, c in self.quad.items()}
        return QuadPoly(self.m, quad, lin, const)

    def content_valuation(self, p):
        v = None
        for c in itertools.chain(self.quad.values(), self.lin, [self.const]):
            if c:
                cv = 0
                while c % p == 0:
                    c //= p
                    cv += 1
                v = cv if v is None else min(v, cv)
                if v == 0:
                    return 0
        return v  # None means f == 0

    def divide(self, p, s):
        ps = p ** s
        return QuadPoly(self.m,
                        {k: c // ps for k, c in self.quad.items()},
                        [b // ps for b in self.lin],
                        self.const // ps)

    def key(self, p, level):
        mod = p ** level
        return (self.m, level,
                tuple(sorted((k, c % mod) for k, c in self.quad.items() if c % mod)),
                tuple(b % mod for b in self.lin), self.const % mod)


_grid_cache = {}


def _grid(p, m):
    if (p, m) not in _grid_cache:
        idx = np.arange(p ** m, dtype=np.int64)
        coords = []
        for i in range(m):
            coords.append(idx // p ** i % p)
        _grid_cache[(p, m)] = coords
    return _grid_cache[(p, m)]


class _Counter:
    def __init__(self, p, budget=DEFAULT_BUDGET):
        self.p = p
        self.budget = budget
        self.nodes = 0
        self.cache = {}

    def count(self, f: QuadPoly, level: int, unit=False) -> int:
        """#{x mod p^level : f(x) ≡ 0 mod p^level}, optionally x != 0 mod p."""
        p, m = self.p, f.m
        if level <= 0:
            return 1
        key = (f.key(p, level), unit)
        if key in self.cache:
            return self.cache[key]
        self.nodes += 1
        if self.nodes > self.budget:
            raise BudgetExceeded("residue-count recursion budget exceeded")
        coords = _grid(p, m)
        vals = np.full(p ** m, f.const % p, dtype=np.int64)
        for (i, j), c in f.quad.items():
            vals += (c % p) * coords[i] * coords[j]
        for i, b in enumerate(f.lin):
            if b % p:
                vals += (b % p) * coords[i]
        roots = np.flatnonzero(vals % p == 0)
        if unit and len(roots) and roots[0] == 0:
            roots = roots[1:]
        if level == 1:
            total = int(len(roots))
            self.cache[key] = total
            return total
        grads = np.zeros((m, p ** m), dtype=np.int64)
        for (i, j), c in f.quad.items():
            if i == j:
                grads[i] += (2 * c % p) * coords[i]
            else:
                grads[i] += (c % p) * coords[j]
                grads[j] += (c % p) * coords[i]
        for i, b in enumerate(f.lin):
            if b % p:
                grads[i] += b % p
        grads %= p
        smooth_mask = (grads[:, roots] != 0).any(axis=0)
        total = int(smooth_mask.sum()) * p ** ((m - 1) * (level - 1))
        for t in roots[~smooth_mask]:
            x0 = [int(c[t]) for c in coords]
            fx0 = f.evaluate_int(x0)
            g = f.gradient_int(x0)
            c1 = fx0 // p
            if level == 2:
                total += p ** m if c1 % p == 0 else 0
                continue
            if c1 % p:
                continue
            sub = QuadPoly(m, f.quad, [gi // p for gi in g], c1 // p)
            total += p ** m * self.count(sub, level - 2)
        self.cache[key] = total
        return total

    def count_in_class(self, f: QuadPoly, level: int, r, k: int,
                       cond_level: int | None = None) -> int:
        """#{x mod p^level : x ≡ r mod p^k, f(x) ≡ 0 mod p^cond_level}."""
        p, m = self.p, f.m
        cond = level if cond_level is None else cond_level
        if level < k:
            raise QSError("counting level below the class depth")
        if cond <= 0:
            return p ** (m * (level - k))
        F = f.shift_scale(list(r), k, p)
        s = F.content_valuation(p)
        if s is None or s >= cond:
            return p ** (m * (level - k))
        g = F.divide(p, s)
        depth = cond - s
        rng = level - k
        base = self.count(g, depth)
        if rng >= depth:
            return base * p ** (m * (rng - depth))
        q, rem = divmod(base, p ** (m * (depth - rng)))
        if rem:
            raise QSError("class count not coset-aligned")  # pragma: no cover
        return q


# -- normalized variety volumes ------------------------------------------

@dataclass
class ResidueCount:
    p: int
    level: int
    dim: int
    raw: int
    normalized: Fraction
    stabilized: bool = False
    stable_from: int | None = None
    table: dict = field(default_factory=dict)


def residue_count(p, f: QuadPoly, level, unit=False, budget=DEFAULT_BUDGET) -> int:
    return _Counter(p, budget).count(f, level, unit=unit)


def variety_volume(p, f: QuadPoly, d, level, unit=False, budget=DEFAULT_BUDGET) -> ResidueCount:
    """Normalized residue count #Y_l / p^(d*l) for Y = {f ≡ 0} (unit vectors optional)."""
    raw = residue_count(p, f, level, unit=unit, budget=budget)
    return ResidueCount(p, level, d, raw, Fraction(raw, p ** (d * level)))


def stabilized_volume(p, f: QuadPoly, d, unit=False, max_level=6,
                      budget=DEFAULT_BUDGET) -> ResidueCount:
    """Run levels 1..max_level; report the stabilized normalized value.

    Never averages: raises BudgetExceeded when no two consecutive levels
    agree within the allowance.
    """
    counter = _Counter(p, budget)
    table = {}
    for level in range(1, max_level + 1):
        raw = counter.count(f, level, unit=unit)
        table[level] = Fraction(raw, p ** (d * level))
    stable_from = None
    for level in range(1, max_level):
        if all(table[t] == table[level] for t in range(level, max_level + 1)):
            stable_from = level
            break
    if stable_from is None:
        raise BudgetExceeded("normalized counts did not stabilize", best=table)
    raw = counter.count(f, stable_from, unit=unit)
    out = ResidueCount(p, stable_from, d, raw, table[stable_from],
                       stabilized=True, stable_from=stable_from, table=table)
    return out


def cone_poly(q: QuadraticFormP, level_hint=24) -> QuadPoly:
    gram = _p_integral_gram(q)[0]
    return QuadPoly.from_gram(gram, q.p, level_hint)


def _p_integral_gram(q: QuadraticFormP):
    """Scale the Gram by a p-power to make it p-integral and primitive.

    Returns (gram, shift) with gram = p^shift * q.gram.
    """
    p = q.p
    vmin = min(valuation(c, p) for row in q.gram for c in row if c != 0)
    shift = -min(vmin, 0)
    f = Fraction(p) ** shift
    return [[c * f for c in row] for row in q.gram], shift


def orbit_volume(q: QuadraticFormP, max_level=6, budget=DEFAULT_BUDGET):
    """Stabilized (n-1)-volume of the unit cone {u in U_p^n : q(u) = 0}.

    For a standard isotropic form this is the mass written vol(K·e1);
    also exposes c(K_p) = vol / (1 - 1/p).
    """
    standard_coefficients(q)  # raises NotStandardForm otherwise
    p = q.p
    f = cone_poly(q, level_hint=2 * max_level + 8)
    rc = stabilized_volume(p, f, q.n - 1, unit=True, max_level=max_level, budget=budget)
    c_k = rc.normalized / (1 - Fraction(1, p))
    return rc, c_k


# -- class-restricted cone measures ---------------------------------------

def cone_class_measures(q: QuadraticFormP, k=1, max_level=7, budget=DEFAULT_BUDGET):
    """Exact cone measure per unit residue class mod p^k (normalized by p^{(n-1)l})."""
    p, n = q.p, q.n
    f = cone_poly(q, level_hint=2 * max_level + 8)
    counter = _Counter(p, budget)
    out = {}
    mod = p ** k
    for cls in itertools.product(range(mod), repeat=n):
        if all(c % p == 0 for c in cls):
            continue
        vals = {}
        for level in range(k, max_level + 1):
            raw = counter.count_in_class(f, level, list(cls), k)
            vals[level] = Fraction(raw, p ** ((n - 1) * level))
        stable = None
        for level in sorted(vals)[:-1]:
            if all(vals[t] == vals[level] for t in vals if t >= level):
                stable = level
                break
        if stable is None:
            raise BudgetExceeded("class measure did not stabilize", best=vals)
        out[cls] = vals[stable]
    return out


# -- lambda constants -------------------------------------------------------

def lambda_p(q: QuadraticFormP, region: Region, max_level=7, budget=DEFAULT_BUDGET) -> Fraction:
    """Volume constant at a finite place: vol{v in T*Omega_p : q(v) in I_p}
    is asymptotically lambda_p * |I_p| * T^(n-2).

    For standard forms this is the z-sum
        sum_z p^{(n-2)z} * (cone measure of classes with radius >= p^z),
    i.e. cone-measure-weighted radii with the geometric shell factor
    1/(1 - p^-(n-2)).  Non-standard rational forms are routed through
    their standard reduction (transformed region, |det g|_p factor).
    """
    p, n = q.p, q.n
    if p == INF_PLACE:
        raise QSError("finite places only")
    try:
        standard_coefficients(q)
        std, g = q, None
    except NotStandardForm:
        if not region.is_ball(p):
            raise NotStandardForm("non-standard form with a table region needs transition data")
        coeffs, g, _ = to_standard(q)
        from .qform import standard_gram
        std = QuadraticFormP(p, standard_gram(n, coeffs, p))
    if g is not None:
        # lambda(q, ball p^c) = |det g|_p * lambda(std, g^{-1} ball)
        c = region.rho_max_exponent(p)
        scaled = [[Fraction(x) * Fraction(p) ** (-c) for x in row] for row in g]
        inv_region = Region.from_lattice_transform(scaled, p, n)
        detg = Fraction(1)
        from . import linalg
        dv = valuation(linalg.det(linalg.frac_matrix(g)), p)
        detg = Fraction(p) ** (-dv)
        return detg * lambda_p(std, inv_region, max_level=max_level, budget=budget)

    shell = 1 - Fraction(p) ** (-(n - 2)) if n > 2 else None
    if shell is None:
        raise QSError("lambda_p needs rank >= 3")
    if region.is_ball(p):
        rc, _ = orbit_volume(q, max_level=max_level, budget=budget)
        z0 = region.rho_max_exponent(p)
        return rc.normalized * Fraction(p) ** ((n - 2) * z0) / shell
    spec = region.spec_at(p)
    _, k, table = spec
    measures = cone_class_measures(q, k=k, max_level=max_level, budget=budget)
    total = Fraction(0)
    for cls, mass in measures.items():
        if mass == 0:
            continue
        z = table[tuple(cls)]
        total += mass * Fraction(p) ** ((n - 2) * z)
    return total / shell


def volume_V_p(q: QuadraticFormP, interval: SInterval, region: Region, t: int,
               budget=DEFAULT_BUDGET) -> Fraction:
    """Exact vol{v in Q_p^n : ||v|| <= p^t * rho(dir v), q(v) in I_p} (Haar)."""
    p, n = q.p, q.n
    gram, shift = _p_integral_gram(q)
    center, b = interval.finite[p]
    # scaling q by p^shift scales the interval identically
    center = Fraction(center if not hasattr(center, "rational_approx") else center.rational_approx())
    center *= Fraction(p) ** shift
    b = b + shift
    va = valuation(center, p) if center != 0 else math.inf
    counter = _Counter(p, budget)
    k = 1 if region.is_ball(p) else region.spec_at(p)[1]
    rho_exps = {}
    if region.is_ball(p):
        rho_all = region.rho_max_exponent(p)
    else:
        rho_all = None
        rho_exps = region.spec_at(p)[2]
    smax = t + region.rho_max_exponent(p)
    total = Fraction(0)
    s = smax
    while True:
        L = b + 2 * s
        # vacuity / emptiness by the center's valuation
        if va < min(-2 * s, b):
            empty_shell = True
        else:
            empty_shell = False
        if not empty_shell and L <= 0 and s <= t + (0 if rho_all is not None else min(rho_exps.values())):
            # all deeper shells fully count: closed-form ball volume
            if rho_all is None or s <= t + rho_all:
                total += Fraction(p) ** (n * s)
                break
        lev = max(L, k, 1)
        mod = p ** lev
        if not empty_shell:
            # the shell condition is q(u) ≡ center * p^(2s)  (mod p^(b+2s))
            tfrac = center * Fraction(p) ** (2 * s)
            if center == 0 or valuation(tfrac, p) >= lev:
                target = 0
            else:
                target = tfrac.numerator * pow(tfrac.denominator, -1, mod) % mod
        if rho_all is not None:
            allowed_all = s <= t + rho_all
            if allowed_all and not empty_shell:
                fpoly = QuadPoly.from_gram(gram, p, lev + 2)
                fpoly = QuadPoly(n, fpoly.quad, fpoly.lin, fpoly.const - target)
                raw = counter.count(fpoly, lev, unit=True) if L > 0 else \
                    (p ** (n * lev) - p ** (n * (lev - 1)))
                total += Fraction(p) ** (n * s) * Fraction(raw, p ** (n * lev))
        else:
            if not empty_shell:
                fpoly = QuadPoly.from_gram(gram, p, lev + 2)
                fpoly = QuadPoly(n, fpoly.quad, fpoly.lin, fpoly.const - target)
                for cls, z in rho_exps.items():
                    if s > t + z:
                        continue
                    raw = counter.count_in_class(fpoly, lev, list(cls), k,
                                                 cond_level=max(L, 0))
                    total += Fraction(p) ** (n * s) * Fraction(raw, p ** (n * lev))
        s -= 1
        if s < -(abs(b) + 2 * abs(t) + 40):  # pragma: no cover - safety stop
            break
    return total


def lambda_p_direct(q: QuadraticFormP, region: Region, budget=DEFAULT_BUDGET) -> Fraction:
    """lambda_p from exact volumes at consecutive large dilations.

    V(p^t) = lambda * p^((n-2)t) + c0 for t beyond a stabilization level
    (the deep-shell tail is t-independent), so consecutive differences
    isolate lambda exactly.
    """
    p, n = q.p, q.n
    iv = SInterval((-1.0, 1.0), {p: (0, 0)})
    vols = {}
    prev = None
    for t in range(2, 10):
        vols[t] = volume_V_p(q, iv, region, t)
        if t - 1 in vols:
            lam = (vols[t] - vols[t - 1]) / (
                Fraction(p) ** ((n - 2) * t) - Fraction(p) ** ((n - 2) * (t - 1)))
            if prev is not None and lam == prev:
                return lam
            prev = lam
    raise BudgetExceeded("direct lambda differences did not stabilize", best=prev)


# -- parallelepiped volumes ---------------------------------------------------

def parallelepiped_residue_count(vectors, p, level) -> int:
    """#distinct residues of Z_p v_1 + ... + Z_p v_d modulo p^level.

    Exact via elementary divisors of the p^r-scaled integer matrix
    (r clears denominators): the image of Z_p^d in (Z/p^(level+r))^n has
    size prod_i p^(max(0, level + r - e_i)).
    """
    from . import linalg
    r = max((max((-valuation(c, p) for c in v if c != 0), default=0)
             for v in vectors), default=0)
    r = max(r, 0)
    cols = [[int(Fraction(c) * p ** r) for c in v] for v in vectors]
    M = [[cols[j][i] for j in range(len(cols))] for i in range(len(cols[0]))]
    evals = linalg.elementary_divisor_valuations(M, p)
    if len(evals) != len(vectors):
        raise QSError("parallelepiped generators are dependent")
    L = level + r
    out = 1
    for e in evals:
        out *= p ** max(0, L - e)
    return out


def parallelepiped_residue_volume(vectors, p, max_level=12):
    """Stabilized #Y_l / p^(d*l) of the parallelepiped's residue images."""
    d = len(vectors)
    prev = None
    for level in range(1, max_level + 1):
        val = Fraction(parallelepiped_residue_count(vectors, p, level),
                       p ** (d * level))
        if prev is not None and val == prev:
            return val, level - 1
        prev = val
    raise BudgetExceeded("parallelepiped count did not stabilize", best=prev)


def parallelepiped_wedge_volume(vectors, p) -> Fraction:
    """The tangent-space value ||v_1 ∧ ... ∧ v_d||_p."""
    from .padic import wedge_norm_p
    return wedge_norm_p(vectors, p)


# -- the J kernel -----------------------------------------------------------

def j_kernel(q: QuadraticFormP, balls, r: int, zeta, budget=DEFAULT_BUDGET) -> Fraction:
    """J_f(p^{-r}, zeta) for f the indicator of a product of balls c_i + p^{s_i} Z_p.

    J = p^{-r(n-2)} * vol{(x_2..x_{n-1}) in middle balls :
            p^{-r} in ball_1 and p^r (zeta - q0(x)) in ball_n},
    with q0 the middle-coefficient diagonal part of the standard form.
    """
    p, n = q.p, q.n
    coeffs = standard_coefficients(q)
    if len(balls) != n:
        raise QSError("need one ball per coordinate")
    c1, s1 = balls[0]
    # first coordinate: is p^{-r} in the ball?
    if valuation(Fraction(p) ** (-r) - Fraction(c1), p) < s1:
        return Fraction(0)
    cn, sn = balls[n - 1]
    zeta = Fraction(zeta)
    # p^r (zeta - q0) ∈ c_n + p^{s_n} Z_p  <=>  q0 ∈ (zeta - p^{-r} c_n) + p^{s_n - r} Z_p
    tgt_center = zeta - Fraction(p) ** (-r) * Fraction(cn)
    tgt_scale = sn - r
    m = n - 2
    # substitute x_i = c_i + p^{s_i} y_i, y in Z_p^m
    shift_mod = 0
    centers = [Fraction(balls[i + 1][0]) for i in range(m)]
    scales = [balls[i + 1][1] for i in range(m)]
    # q0(x) - tgt_center as a rational quadratic in y, then clear p powers
    terms = {}
    lin = [Fraction(0)] * m
    const = -tgt_center
    for i in range(m):
        a = Fraction(coeffs[i])
        terms[(i, i)] = a * Fraction(p) ** (2 * scales[i])
        lin[i] = 2 * a * centers[i] * Fraction(p) ** scales[i]
        const += a * centers[i] ** 2
    vmin = min([valuation(c, p) for c in list(terms.values()) + lin + [const] if c != 0]
               + [tgt_scale])
    shift = -min(vmin, 0)
    fshift = Fraction(p) ** shift
    L = tgt_scale + shift
    if L <= 0:
        vol = Fraction(1)
    else:
        mod = p ** (L + 2)

        def toint(c):
            c = c * fshift
            return c.numerator * pow(c.denominator, -1, mod) % mod

        fpoly = QuadPoly(m, {k: toint(v) for k, v in terms.items()},
                         [toint(v) for v in lin], toint(const))
        raw = _Counter(p, budget).count(fpoly, L)
        vol = Fraction(raw, p ** (m * L))
    for s in scales:
        vol *= Fraction(p) ** (-s)
    return Fraction(p) ** (-r * (n - 2)) * vol


# -- the real place ----------------------------------------------------------

def _sphere_surface(n):
    return 2 * math.pi ** (n / 2) / math.gamma(n / 2)


def mc_real_volume(q: QuadraticFormP, region: Region, interval, T, samples, seed,
                   chunk=200_000):
    """Monte-Carlo vol{v in T*Omega : q(v) in (a, b)} with exact radial integration.

    Directions are sampled on the sphere (orthant-symmetrized); per
    direction the admissible radius set is resolved in closed form, so
    only the angular average is stochastic.  For ball regions the
    near-cone directions (where the radial mass blows up like
    |q(dir)|^(-n/2)) are integrated against a locally fitted model of
    the cone measure instead of raw sampling.  Returns (value, stderr).
    """
    if region.inf[0] == "ball":
        return _mc_ball_volume(q, region.inf[1], interval, T, samples, seed, chunk)
    return _mc_plain_volume(q, region, interval, T, samples, seed, chunk)


def _mc_plain_volume(q, region, interval, T, samples, seed, chunk=200_000):
    if q.p != INF_PLACE:
        raise QSError("real place only")
    a, b = float(interval[0]), float(interval[1])
    n = q.n
    rng = np.random.default_rng(seed)
    gram = np.array([[float(c) for c in row] for row in q.gram])
    batch_sums = []
    batch_counts = []
    remaining = int(samples)
    signs = np.array(list(itertools.product([1.0, -1.0], repeat=n)))
    while remaining > 0:
        k = min(chunk, remaining) // len(signs) + 1
        base = rng.standard_normal((k, n))
        norms = np.linalg.norm(base, axis=1, keepdims=True)
        norms[norms == 0] = 1.0
        base /= norms
        dirs = (base[:, None, :] * signs[None, :, :]).reshape(-1, n)
        qw = np.einsum("ij,jk,ik->i", dirs, gram, dirs)
        if region.inf[0] == "ball":
            rho = np.full(len(dirs), region.inf[1])
        else:
            rho = np.array([region.rho_inf(d) for d in dirs])
        rmax2 = (T * rho) ** 2
        with np.errstate(divide="ignore", invalid="ignore"):
            lo = np.where(qw > 0, a / qw, b / qw)
            hi = np.where(qw > 0, b / qw, a / qw)
        tiny = np.abs(qw) < 1e-300
        inside_zero = (a < 0.0) & (b > 0.0)
        lo = np.where(tiny, np.where(inside_zero, 0.0, 1.0), lo)
        hi = np.where(tiny, np.where(inside_zero, np.inf, 0.0), hi)
        s1 = np.clip(lo, 0.0, rmax2)
        s2 = np.clip(hi, 0.0, rmax2)
        F = np.maximum(s2, 0.0) ** (n / 2) - np.maximum(s1, 0.0) ** (n / 2)
        F = np.maximum(F, 0.0) / n
        # batch means: an honest error bar even with heavy-tailed integrands
        for part in np.array_split(F, 8):
            if len(part):
                batch_sums.append(float(part.sum()))
                batch_counts.append(len(part))
        remaining -= len(F)
    surf = _sphere_surface(n)
    count = sum(batch_counts)
    mean = sum(batch_sums) / count
    bmeans = [s / c for s, c in zip(batch_sums, batch_counts)]
    nb = len(bmeans)
    bvar = sum((m - mean) ** 2 for m in bmeans) / max(nb - 1, 1)
    value = surf * mean
    stderr = surf * math.sqrt(bvar / nb)
    return value, stderr


def _radial_mass(qv, a, b, rmax2, n):
    """Per-direction integral of r^(n-1) over {r <= rmax, r^2 q in (a,b)}."""
    with np.errstate(divide="ignore", invalid="ignore"):
        lo = np.where(qv > 0, a / qv, b / qv)
        hi = np.where(qv > 0, b / qv, a / qv)
    tiny = np.abs(qv) < 1e-300
    inside_zero = (a < 0.0) & (b > 0.0)
    lo = np.where(tiny, np.where(inside_zero, 0.0, 1.0), lo)
    hi = np.where(tiny, np.where(inside_zero, np.inf, 0.0), hi)
    s1 = np.clip(lo, 0.0, rmax2)
    s2 = np.clip(hi, 0.0, rmax2)
    F = np.maximum(s2, 0.0) ** (n / 2) - np.maximum(s1, 0.0) ** (n / 2)
    return np.maximum(F, 0.0) / n


def _tail_integral(sign, a_lin, b_quad, s_cut, aa, bb, R2, n):
    """Closed form of ∫_0^{s_cut} F(sign*q) dμ(q) for μ = a_lin q + b_quad q^2.

    F is the radial mass of a direction with form value sign*q against
    the interval (aa, bb) inside radius sqrt(R2).
    """
    # on the positive side the window is (aa/q, bb/q); negative side swaps
    top, bot = (bb, aa) if sign > 0 else (-aa, -bb)
    # for q <= bot/R2 (when bot > 0) the window clears the ball: F = 0
    # for q <= top/R2 the upper endpoint is capped at R2
    out = 0.0
    if top <= 0:
        return 0.0
    q_cap = top / R2

    def F_of(qv):
        s2 = min(top / qv, R2) if qv > 0 else R2
        s1 = max(bot / qv, 0.0) if bot > 0 else 0.0
        s1 = min(s1, R2)
        return max(s2 ** (n / 2) - s1 ** (n / 2), 0.0) / n

    # integrate F(q) * (a_lin + 2 b_quad q) dq on (0, s_cut] piecewise;
    # breakpoints where the clipping changes
    brk = sorted({0.0, min(q_cap, s_cut), min(bot / R2, s_cut) if bot > 0 else 0.0, s_cut})
    for lo_q, hi_q in zip(brk, brk[1:]):
        if hi_q <= lo_q:
            continue
        mid = 0.5 * (lo_q + hi_q)
        # piecewise exact: F = (c1 q^{-n/2} - c2 q^{-n/2} or constants)/n
        s2_cap = (mid > 0) and (top / mid > R2)
        s1_act = bot > 0 and bot / mid > 0 and bot / mid < R2
        # build exact antiderivatives of q^k and q^{k - n/2}
        for coeff, power in ((a_lin, 0.0), (2 * b_quad, 1.0)):
            if coeff == 0:
                continue
            if s2_cap:
                term2 = R2 ** (n / 2) * _poly_int(lo_q, hi_q, power)
            else:
                term2 = top ** (n / 2) * _poly_int(lo_q, hi_q, power - n / 2)
            if s1_act:
                term1 = bot ** (n / 2) * _poly_int(lo_q, hi_q, power - n / 2)
            elif bot > 0 and bot / max(mid, 1e-300) >= R2:
                term1 = R2 ** (n / 2) * _poly_int(lo_q, hi_q, power)
            else:
                term1 = 0.0
            out += coeff * (term2 - term1) / n
    return out


def _poly_int(lo, hi, k):
    if abs(k + 1) < 1e-12:
        return math.log(hi / lo)
    return (hi ** (k + 1) - lo ** (k + 1)) / (k + 1)


def _mc_ball_volume(q, radius, interval, T, samples, seed, chunk=200_000):
    """Split estimator: plain MC away from the cone, modeled tail near it.

    The cone measure mu_±(s) = P(0 < ±q(dir) <= s) is locally linear;
    its density is fitted by Richardson extrapolation from two band
    counts, and the singular radial mass is integrated in closed form
    against the fitted density.  The model residual (from a third band)
    is folded into the reported standard error.
    """
    a, b = float(interval[0]), float(interval[1])
    n = q.n
    gram = np.array([[float(c) for c in row] for row in q.gram])
    eig = np.linalg.eigvalsh(gram)
    s_top = float(np.abs(eig).max())
    R = T * radius
    R2 = R * R
    scale = max(abs(a), abs(b))
    s_mid = s_top / 32.0
    if scale / R2 * 4 >= s_mid or scale == 0.0:
        # the cap zone is not deep: the plain estimator is already tame
        return _mc_plain_volume(q, Region(n, inf=("ball", radius)), interval,
                                T, samples, seed, chunk)
    rng = np.random.default_rng(seed)
    signs = np.array(list(itertools.product([1.0, -1.0], repeat=n)))
    batch_sums, batch_counts = [], []
    hits = {("+", 1): 0, ("+", 2): 0, ("+", 4): 0, ("-", 1): 0, ("-", 2): 0, ("-", 4): 0}
    total_draws = 0
    remaining = int(samples)
    while remaining > 0:
        k = min(chunk, remaining) // len(signs) + 1
        base = rng.standard_normal((k, n))
        norms = np.linalg.norm(base, axis=1, keepdims=True)
        norms[norms == 0] = 1.0
        base /= norms
        dirs = (base[:, None, :] * signs[None, :, :]).reshape(-1, n)
        qv = np.einsum("ij,jk,ik->i", dirs, gram, dirs)
        outer = np.abs(qv) > s_mid
        F = np.where(outer, _radial_mass(qv, a, b, R2, n), 0.0)
        for part in np.array_split(F, 8):
            if len(part):
                batch_sums.append(float(part.sum()))
                batch_counts.append(len(part))
        for div in (1, 2, 4):
            s = s_mid / div
            hits[("+", div)] += int(((qv > 0) & (qv <= s)).sum())
            hits[("-", div)] += int(((qv < 0) & (qv >= -s)).sum())
        total_draws += len(F)
        remaining -= len(F)
    count = sum(batch_counts)
    mean_outer = sum(batch_sums) / count
    bmeans = [s / c for s, c in zip(batch_sums, batch_counts)]
    nb = len(bmeans)
    bvar = sum((m - mean_outer) ** 2 for m in bmeans) / max(nb - 1, 1)
    err_outer = math.sqrt(bvar / nb)

    tail_val = 0.0
    tail_err = 0.0
    for sgn, key in ((1, "+"), (-1, "-")):
        P1 = hits[(key, 1)] / total_draws
        P2 = hits[(key, 2)] / total_draws
        P4 = hits[(key, 4)] / total_draws
        # mu(s) = a_lin s + b_quad s^2 through (s_mid, P1), (s_mid/2, P2)
        a_lin = (4 * P2 - P1) / s_mid
        b_quad = (2 * P1 - 4 * P2) / (s_mid * s_mid)
        val = _tail_integral(sgn, a_lin, b_quad, s_mid, a, b, R2, n)
        # statistical error of the fit, dominated by the band counts
        rel_stat = 2.0 / math.sqrt(max(hits[(key, 2)], 1))
        # model residual: compare the fit against the s_mid/4 count
        pred4 = a_lin * s_mid / 4 + b_quad * (s_mid / 4) ** 2
        rel_model = abs(pred4 - P4) / max(P4, 1e-300) if P4 else 0.0
        tail_val += val
        tail_err += (abs(val) * (rel_stat + rel_model)) ** 2
    surf = _sphere_surface(n)
    value = surf * (mean_outer + tail_val)
    stderr = surf * math.hypot(err_outer, math.sqrt(tail_err))
    return value, stderr


def lambda_inf(q: QuadraticFormP, region: Region, samples, seed,
               rel_error_bound=0.5, T0=48.0, consistency_sigmas=6.0,
               consistency_slack=0.15):
    """Monte-Carlo estimate of the real volume constant lambda_inf.

    vol{v in T*Omega : q(v) in (a,b)} ~ lambda_inf (b-a) T^(n-2);
    estimated at T0 and 2*T0, reporting the larger-T value.  The guard
    parameters reject gross T-inconsistency; callers wanting the tight
    3-sigma oracle run it on their own instances.
    """
    n = q.n
    iv = (0.0, 1.0)
    # the companion runs at T0/2, which the sampler resolves whenever T0 does
    v1, e1 = mc_real_volume(q, region, iv, T0 / 2, samples, seed + 1)
    v2, e2 = mc_real_volume(q, region, iv, T0, samples, seed)
    l1, s1 = v1 / (T0 / 2) ** (n - 2), e1 / (T0 / 2) ** (n - 2)
    l2, s2 = v2 / T0 ** (n - 2), e2 / T0 ** (n - 2)
    if abs(l1 - l2) > consistency_sigmas * math.hypot(s1, s2) + consistency_slack * abs(l2):
        raise QSError("lambda_inf estimates at T/2 and T disagree; raise T0 or samples")
    if s2 > rel_error_bound * abs(l2):
        raise QSError("lambda_inf stderr exceeds the configured relative bound")
    return l2, s2


@dataclass
class LambdaConstants:
    finite: dict
    inf_value: float
    inf_stderr: float

    @property
    def product(self):
        out = self.inf_value
        for v in self.finite.values():
            out *= float(v)
        return out

    @property
    def product_stderr(self):
        scale = 1.0
        for v in self.finite.values():
            scale *= float(v)
        return abs(scale) * self.inf_stderr


def lambda_constants(qs, region: Region, samples, seed, T0=16.0) -> LambdaConstants:
    """All per-place volume constants for an S-form and region.

    T0 trades the finite-dilation bias of the real-place estimate against
    its near-cone sampling noise; the drift between T0/2 and T0 is
    guarded internally.
    """
    finite = {}
    for p in qs.finite_primes:
        finite[p] = lambda_p(qs.at(p), region)
    value, err = lambda_inf(qs.at(INF_PLACE), region, samples, seed, T0=T0)
    return LambdaConstants(finite, value, err)


def volume_V(qs, interval: SInterval, region: Region, time, samples, seed):
    """V(T) = vol{v in Q_S^n ∩ T*Omega : q_p(v) in I_p for all p}.

    Finite places are exact; the real place is Monte-Carlo.  Returns
    (value, stderr).
    """
    if float(interval.real[0]) >= float(interval.real[1]):
        return 0.0, 0.0
    out = Fraction(1)
    for p in qs.finite_primes:
        out *= volume_V_p(qs.at(p), interval, region, time.exponents[p])
    vinf, einf = mc_real_volume(qs.at(INF_PLACE), region, interval.real,
                                time.t_inf, samples, seed)
    return float(out) * vinf, float(out) * einf
