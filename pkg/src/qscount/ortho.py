"""Orthogonal groups of standard forms: diagonal flows, reflections,
membership in K_p = SL_n(Z_p) ∩ SO(q), and iterative construction of a
p-integral isometry with prescribed first column.

The lifting works digit by digit.  Writing the Gram matrix (after a
coordinate permutation) as blockdiag(B', p*B'') with both blocks unit
mod p, the corrections to the B''-rows lag one digit behind the
B'-rows; each stage solves small symmetric Sylvester systems mod p.
"""

from __future__ import annotations

import math
from fractions import Fraction

from . import linalg
from .errors import (NoIsometry, NotStandardForm, PrecisionExhausted, QSError,
                     ValueMismatch)
from .padic import PadicNumber, valuation
from .qform import QuadraticFormP, standard_gram

INF_PLACE = "inf"


# -- flows ---------------------------------------------------------------

class FlowElement:
    """a_t = diag(p^t, 1, ..., 1, p^-t) at a finite place (e^-t, ..., e^t at ∞)."""

    def __init__(self, place, t, matrix):
        self.p = place
        self.t = t
        self.matrix = matrix

    def __matmul__(self, other):
        if not isinstance(other, FlowElement) or other.p != self.p:
            raise QSError("flow composition needs the same place")
        prod = [[sum(a * b for a, b in zip(row, col)) for col in zip(*other.matrix)]
                for row in self.matrix]
        return FlowElement(self.p, self.t + other.t, prod)


def standard_coefficients(q: QuadraticFormP):
    """Extract (a_2, ..., a_{n-1}) when the Gram is in standard shape."""
    n = q.n
    coeffs = [q.gram[i][i] for i in range(1, n - 1)]
    if q.gram != standard_gram(n, coeffs, q.p if q.p != INF_PLACE else 3):
        raise NotStandardForm("Gram is not x1*xn + sum a_i x_i^2")
    return coeffs


def flow(q: QuadraticFormP, t) -> FlowElement:
    """The one-parameter diagonal subgroup preserving a standard form."""
    standard_coefficients(q)
    n = q.n
    if q.p == INF_PLACE:
        d = [math.exp(-t)] + [1.0] * (n - 2) + [math.exp(t)]
        mat = [[d[i] if i == j else 0.0 for j in range(n)] for i in range(n)]
        return FlowElement(INF_PLACE, float(t), mat)
    t = int(t)
    d = [Fraction(q.p) ** t] + [Fraction(1)] * (n - 2) + [Fraction(q.p) ** (-t)]
    mat = [[d[i] if i == j else Fraction(0) for j in range(n)] for i in range(n)]
    return FlowElement(q.p, t, mat)


# -- finite-field Witt step ----------------------------------------------

def _qval(S, v, p):
    """2*Q(v) = v^t S v mod p, with S = 2*Gram reduced mod p."""
    m = len(v)
    return sum(S[i][j] * v[i] * v[j] for i in range(m) for j in range(m)) % p


def _reflection_mod_p(S, w, p):
    """Matrix of x -> x - (x^t S w) / Q(w) * w mod p (Q(w) = w^t S w / 2)."""
    m = len(w)
    qw2 = _qval(S, w, p)  # 2*Q(w)
    inv = pow(qw2 % p, -1, p)
    Sw = [sum(S[i][j] * w[j] for j in range(m)) % p for i in range(m)]
    out = [[(int(i == k) - 2 * inv * w[i] * Sw[k]) % p for k in range(m)] for i in range(m)]
    return out


def witt_finite(S, v1, v2, p):
    """Isometry of the unimodular symmetric S (= 2*Gram) mod p sending v1 to v2.

    Built from at most two reflections; requires Q(v1) = Q(v2) and both
    vectors nonzero mod p.  Raises NoIsometry otherwise.
    """
    m = len(v1)
    v1 = [x % p for x in v1]
    v2 = [x % p for x in v2]
    if all(x == 0 for x in v1) or all(x == 0 for x in v2):
        raise NoIsometry("zero vector")
    if _qval(S, v1, p) != _qval(S, v2, p):
        raise NoIsometry("form values differ mod p")
    if v1 == v2:
        return [[int(i == j) for j in range(m)] for i in range(m)]
    w = [(a - b) % p for a, b in zip(v1, v2)]
    if _qval(S, w, p) % p:
        return _reflection_mod_p(S, w, p)
    # route through an auxiliary mirror: first y (lex order) that works
    for code in range(1, p ** m):
        y, c = [], code
        for _ in range(m):
            c, d = divmod(c, p)
            y.append(d)
        if _qval(S, y, p) % p == 0:
            continue
        R = _reflection_mod_p(S, y, p)
        v1p = [sum(R[i][j] * v1[j] for j in range(m)) % p for i in range(m)]
        wp = [(a - b) % p for a, b in zip(v1p, v2)]
        if all(x == 0 for x in wp):
            return R
        if _qval(S, wp, p) % p:
            R2 = _reflection_mod_p(S, wp, p)
            return [[sum(R2[i][k] * R[k][j] for k in range(m)) % p
                     for j in range(m)] for i in range(m)]
    raise NoIsometry("no reflection route found")  # pragma: no cover


def solve_symmetric_sylvester(A, C, p):
    """X with X^t A + A X ≡ C (mod p); A symmetric invertible, C symmetric.

    The system restricted to upper-triangular targets has full rank
    n(n+1)/2; free variables are set to 0.
    """
    m = len(A)
    rows, rhs = [], []
    for i in range(m):
        for j in range(i, m):
            row = [0] * (m * m)
            for k in range(m):
                row[k * m + i] += A[k][j]   # (X^t A)_{ij} term
                row[k * m + j] += A[i][k]   # (A X)_{ij} term
            rows.append([x % p for x in row])
            rhs.append(C[i][j] % p)
    x = linalg.solve_mod_p(rows, rhs, p)
    if x is None:
        raise QSError("symmetric Sylvester system inconsistent")  # pragma: no cover
    return [[x[i * m + j] % p for j in range(m)] for i in range(m)]


def _sylvester_first_column(A, C, col, p):
    """Like solve_symmetric_sylvester but with X e1 = col prescribed."""
    m = len(A)
    rows, rhs = [], []
    for i in range(m):
        for j in range(i, m):
            row = [0] * (m * m)
            val = C[i][j]
            for k in range(m):
                row[k * m + i] += A[k][j]
                row[k * m + j] += A[i][k]
            # move the prescribed first column into the RHS
            for k in range(m):
                val -= row[k * m + 0] * col[k]
                row[k * m + 0] = 0
            rows.append([x % p for x in row])
            rhs.append(val % p)
    # drop the first-column unknowns
    keep = [k * m + j for k in range(m) for j in range(1, m)]
    rows = [[r[t] for t in keep] for r in rows]
    x = linalg.solve_mod_p(rows, rhs, p)
    if x is None:
        return None
    X = [[0] * m for _ in range(m)]
    for i in range(m):
        X[i][0] = col[i] % p
    for t, idx in enumerate(keep):
        X[idx // m][idx % m] = x[t] % p
    return X


# -- the p-integral lift ---------------------------------------------------

class OrthoElement:
    """An element of K_p = SL_n(Z_p) ∩ SO(q) known mod p^prec."""

    def __init__(self, p, matrix, form, prec):
        self.p = p
        self.matrix = [[int(c) % p ** prec for c in row] for row in matrix]
        self.form = form
        self.prec = prec

    def verify(self, target=None):
        p, N = self.p, self.prec
        mod = p ** N
        n = self.form.n
        S = _scaled_gram_int(self.form)
        M = self.matrix
        MS = [[sum(M[k][i] * S[k][j] for k in range(n)) % mod for j in range(n)] for i in range(n)]
        MSM = [[sum(MS[i][k] * M[k][j] for k in range(n)) % mod for j in range(n)] for i in range(n)]
        gram_ok = all((MSM[i][j] - S[i][j]) % mod == 0 for i in range(n) for j in range(n))
        det_ok = (_int_det_mod(M, mod) - 1) % mod == 0
        col_ok = True
        if target is not None:
            col_ok = all((M[i][0] - target[i]) % mod == 0 for i in range(n))
        return {"gram": gram_ok, "det": det_ok, "column": col_ok}

    def apply(self, vec):
        mod = self.p ** self.prec
        n = self.form.n
        return [sum(self.matrix[i][j] * vec[j] for j in range(n)) % mod for i in range(n)]


def _scaled_gram_int(q: QuadraticFormP):
    """2 * Gram as p-integral integers (standard forms have half-integer pairings)."""
    n = q.n
    out = []
    for i in range(n):
        row = []
        for j in range(n):
            c = 2 * q.gram[i][j]
            if c.denominator != 1:
                raise NotStandardForm("Gram entries must be half-integral")
            row.append(int(c))
        out.append(row)
    return out


def _int_det_mod(M, mod):
    """Determinant mod p^k via exact integer elimination."""
    from fractions import Fraction as _F
    d = linalg.det([[_F(x) for x in row] for row in M])
    num, den = d.numerator, d.denominator
    if math.gcd(den, mod) != 1:
        raise QSError("determinant has inadmissible denominator")
    return num * pow(den, -1, mod) % mod


def _vector_digits_mod(v, p, k):
    """Integer representatives mod p^k of a p-integral vector."""
    out = []
    mod = p ** k
    for c in v:
        if isinstance(c, PadicNumber):
            out.append(c.residue(k))
        else:
            c = Fraction(c)
            if c != 0 and valuation(c, p) < 0:
                raise QSError("vector must be p-integral")
            out.append(c.numerator * pow(c.denominator, -1, mod) % mod)
    return out


def lift_isometry(q: QuadraticFormP, v, N: int = 20) -> OrthoElement:
    """k in K_p with k e1 ≡ v, k^t B k ≡ B and det k ≡ 1, all mod p^N.

    Requires ||v||_p = 1, q(v) ≡ q(e1) = 0 at precision ≥ N, and that v
    pairs nontrivially with the form mod p (equivalently v is in the
    K_p-orbit of e1; vectors supported mod p on the p-scaled block are
    not reachable).
    """
    p = q.p
    if p == INF_PLACE:
        raise QSError("finite places only")
    coeffs = standard_coefficients(q)
    n = q.n
    work = N + 2
    mod = p ** work
    vint = _vector_digits_mod(v, p, work)
    if all(c % p == 0 for c in vint):
        raise QSError("target must have unit max norm")
    S = _scaled_gram_int(q)
    qv = sum(S[i][j] * vint[i] * vint[j] for i in range(n) for j in range(n))
    if qv % (p ** min(work, N)) != 0:
        raise ValueMismatch("q(v) must equal q(e1) = 0 at the working precision")

    unit_mid = [i for i, a in enumerate(coeffs, start=1) if valuation(a, p) == 0]
    pmid = [i for i, a in enumerate(coeffs, start=1) if valuation(a, p) > 0]
    perm = [0, n - 1] + unit_mid + pmid
    iu = 2 + len(unit_mid)  # size of the unit block
    inv_perm = [perm.index(i) for i in range(n)]

    Sp = [[S[perm[i]][perm[j]] for j in range(n)] for i in range(n)]
    S1 = [[Sp[i][j] % mod for j in range(n)] for i in range(iu)]
    S1 = [row[:iu] for row in S1]
    S2 = [[Sp[iu + i][iu + j] // p % mod for j in range(n - iu)] for i in range(n - iu)]
    vp = [vint[perm[i]] for i in range(n)]
    vtop = [c % p for c in vp[:iu]]
    if all(c == 0 for c in vtop):
        raise NoIsometry(
            "target reduces into the p-scaled radical mod p and is outside the orbit of e1")

    e1 = [1] + [0] * (iu - 1)
    X0 = witt_finite(S1, e1, vtop, p)

    # full working matrix mod p^work, blocks [[X, Y], [Z, W]]
    M = [[0] * n for _ in range(n)]
    for i in range(iu):
        for j in range(iu):
            M[i][j] = X0[i][j]
    for i in range(n - iu):
        M[iu + i][iu + i] = 1          # W_0 = identity
        M[iu + i][0] = vp[iu + i] % p  # Z_0 first column, other entries 0
    X0inv = _matrix_inverse_mod(X0, p)
    S1inv = _matrix_inverse_mod([[x % p for x in row] for row in S1], p)

    def defect():
        MS = [[sum(M[k][i] * Sp[k][j] for k in range(n)) % mod for j in range(n)] for i in range(n)]
        return [[(sum(MS[i][k] * M[k][j] for k in range(n)) - Sp[i][j]) % mod
                 for j in range(n)] for i in range(n)]

    for j in range(1, work):
        pj = p ** j
        if p ** (j - 1) < mod and n - iu and j >= 2:
            # Z digit j-1: prescribed first column, free entries zero
            for i in range(n - iu):
                digit = vp[iu + i] // p ** (j - 1) % p
                M[iu + i][0] = (M[iu + i][0] + digit * p ** (j - 1)) % mod
            # W digit j-1 from the 22-block
            D = defect()
            C22 = [[-(D[iu + a][iu + b] // pj) % p for b in range(n - iu)] for a in range(n - iu)]
            _assert_divisible(D, pj, iu, n, "22")
            E = solve_symmetric_sylvester(S2, C22, p)
            W0E = _mat_mul_mod(_wblock(M, iu, n, p), E, p)
            for a in range(n - iu):
                for b in range(n - iu):
                    M[iu + a][iu + b] = (M[iu + a][iu + b] + W0E[a][b] * p ** (j - 1)) % mod
        # X digit j from the 11-block, first column prescribed
        D = defect()
        for a in range(iu):
            for b in range(iu):
                if D[a][b] % pj:
                    raise PrecisionExhausted("11-block defect not divisible at stage %d" % j)
        C11 = [[-(D[a][b] // pj) % p for b in range(iu)] for a in range(iu)]
        colE = _mat_vec_mod(X0inv, [vp[i] // pj % p for i in range(iu)], p)
        E = _sylvester_first_column([[x % p for x in row] for row in S1], C11, colE, p)
        if E is None:
            raise PrecisionExhausted("prescribed-column Sylvester system inconsistent")
        dX = _mat_mul_mod(X0, E, p)
        for a in range(iu):
            for b in range(iu):
                M[a][b] = (M[a][b] + dX[a][b] * pj) % mod
        # Y digit j, explicit from the 12-block
        if n - iu:
            D = defect()
            C12 = [[-(D[a][iu + b] // pj) % p for b in range(n - iu)] for a in range(iu)]
            tmp = _mat_mul_mod(_transpose_mod(X0inv, p), C12, p, rect=True)
            dY = _mat_mul_mod(S1inv, tmp, p, rect=True)
            for a in range(iu):
                for b in range(n - iu):
                    M[a][iu + b] = (M[a][iu + b] + dY[a][b] * pj) % mod

    det = _int_det_mod(M, mod)
    if (det + 1) % mod == 0:
        mid = perm.index(unit_mid[0]) if unit_mid else perm.index(pmid[0])
        for i in range(n):
            M[i][mid] = (-M[i][mid]) % mod
    out = [[M[inv_perm[i]][inv_perm[j]] for j in range(n)] for i in range(n)]
    elem = OrthoElement(p, out, q, N)
    checks = elem.verify(target=[c % p ** N for c in vint])
    if not all(checks.values()):
        raise PrecisionExhausted(f"lift failed verification: {checks}")
    return elem


def _assert_divisible(D, pj, iu, n, label):
    for a in range(iu, n):
        for b in range(iu, n):
            if D[a][b] % pj:
                raise PrecisionExhausted(f"{label}-block defect not divisible")


def _wblock(M, iu, n, p):
    return [[M[iu + a][iu + b] % p for b in range(n - iu)] for a in range(n - iu)]


def _matrix_inverse_mod(A, p):
    m = len(A)
    aug = [[A[i][j] % p for j in range(m)] + [int(i == j) for j in range(m)] for i in range(m)]
    for c in range(m):
        piv = next((r for r in range(c, m) if aug[r][c] % p), None)
        if piv is None:
            raise QSError("matrix not invertible mod p")
        aug[c], aug[piv] = aug[piv], aug[c]
        inv = pow(aug[c][c], -1, p)
        aug[c] = [x * inv % p for x in aug[c]]
        for r in range(m):
            if r != c and aug[r][c]:
                f = aug[r][c]
                aug[r] = [(x - f * y) % p for x, y in zip(aug[r], aug[c])]
    return [row[m:] for row in aug]


def _mat_mul_mod(A, B, p, rect=False):
    rows = len(A)
    inner = len(B)
    cols = len(B[0]) if B else 0
    return [[sum(A[i][k] * B[k][j] for k in range(inner)) % p for j in range(cols)]
            for i in range(rows)]


def _mat_vec_mod(A, v, p):
    return [sum(A[i][j] * v[j] for j in range(len(v))) % p for i in range(len(A))]


def _transpose_mod(A, p):
    return [[A[j][i] % p for j in range(len(A))] for i in range(len(A[0]))]


# -- exact rational reflections (independent route) ------------------------

def reflection_matrix(q: QuadraticFormP, w):
    """Exact matrix of x -> x - 2 beta(x, w)/q(w) * w over Q."""
    w = [Fraction(c) for c in w]
    qw = q.evaluate(w)
    if qw == 0:
        raise QSError("mirror vector must be anisotropic")
    n = q.n
    cols = []
    for j in range(n):
        e = [Fraction(int(i == j)) for i in range(n)]
        b = q.bilinear(e, w)
        cols.append([e[i] - 2 * b / qw * w[i] for i in range(n)])
    return [[cols[j][i] for j in range(n)] for i in range(n)]


def orbit_transfer(q: QuadraticFormP, v1, v2):
    """Exact rational isometry (≤ 2 reflections) with k v1 = v2.

    Both vectors must be p-integral with equal q-values; det is ±1 and is
    reported, not corrected.  Mirrors are chosen p-integral with unit
    q-value so the output lies in GL_n(Z_p).
    """
    p = q.p
    v1 = [Fraction(c) for c in v1]
    v2 = [Fraction(c) for c in v2]
    if q.evaluate(v1) != q.evaluate(v2):
        raise NoIsometry("form values differ")
    if v1 == v2:
        return linalg.identity(q.n)
    w = [a - b for a, b in zip(v1, v2)]
    if q.evaluate(w) != 0 and valuation(q.evaluate(w), p) == 0:
        return reflection_matrix(q, w)
    n = q.n
    import itertools as _it
    for y in _it.product(range(p), repeat=n):
        if all(c == 0 for c in y):
            continue
        qy = q.evaluate([Fraction(c) for c in y])
        if qy == 0 or valuation(qy, p) != 0:
            continue
        R = reflection_matrix(q, [Fraction(c) for c in y])
        v1p = linalg.mat_vec(R, v1)
        wp = [a - b for a, b in zip(v1p, v2)]
        if all(c == 0 for c in wp):
            return R
        qwp = q.evaluate(wp)
        if qwp != 0 and valuation(qwp, p) == 0:
            return linalg.mat_mul(reflection_matrix(q, wp), R)
    raise NoIsometry("no p-integral reflection route found")
