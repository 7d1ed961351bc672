"""Exact linear algebra helpers: Fraction matrices, integer Smith form,
saturation of integer row modules, and Gaussian elimination mod p."""

from __future__ import annotations

from fractions import Fraction

from .errors import QSError


# -- Fraction matrices --------------------------------------------------

def frac_matrix(rows):
    return [[Fraction(c) for c in row] for row in rows]


def mat_mul(A, B):
    n, k, m = len(A), len(B), len(B[0])
    return [[sum(A[i][t] * B[t][j] for t in range(k)) for j in range(m)] for i in range(n)]


def mat_vec(A, v):
    return [sum(A[i][j] * v[j] for j in range(len(v))) for i in range(len(A))]


def transpose(A):
    return [list(col) for col in zip(*A)]


def identity(n):
    return [[Fraction(int(i == j)) for j in range(n)] for i in range(n)]


def det(A):
    """Fraction determinant by elimination."""
    A = [row[:] for row in A]
    n = len(A)
    sign = 1
    out = Fraction(1)
    for c in range(n):
        piv = next((r for r in range(c, n) if A[r][c] != 0), None)
        if piv is None:
            return Fraction(0)
        if piv != c:
            A[c], A[piv] = A[piv], A[c]
            sign = -sign
        out *= A[c][c]
        inv = 1 / A[c][c]
        for r in range(c + 1, n):
            if A[r][c] != 0:
                f = A[r][c] * inv
                A[r] = [A[r][j] - f * A[c][j] for j in range(n)]
    return sign * out


def inverse(A):
    n = len(A)
    M = [row[:] + identity(n)[i] for i, row in enumerate(frac_matrix(A))]
    for c in range(n):
        piv = next((r for r in range(c, n) if M[r][c] != 0), None)
        if piv is None:
            raise QSError("singular matrix")
        M[c], M[piv] = M[piv], M[c]
        inv = 1 / M[c][c]
        M[c] = [x * inv for x in M[c]]
        for r in range(n):
            if r != c and M[r][c] != 0:
                f = M[r][c]
                M[r] = [M[r][j] - f * M[c][j] for j in range(2 * n)]
    return [row[n:] for row in M]


def solve(A, b):
    """Solve A x = b exactly (A square invertible)."""
    return mat_vec(inverse(A), b)


def kernel_basis(A):
    """Basis of the rational null space of A (rows = equations)."""
    if not A:
        return identity(0)
    A = frac_matrix(A)
    rows, cols = len(A), len(A[0])
    pivots = []
    r = 0
    for c in range(cols):
        piv = next((i for i in range(r, rows) if A[i][c] != 0), None)
        if piv is None:
            continue
        A[r], A[piv] = A[piv], A[r]
        inv = 1 / A[r][c]
        A[r] = [x * inv for x in A[r]]
        for i in range(rows):
            if i != r and A[i][c] != 0:
                f = A[i][c]
                A[i] = [A[i][j] - f * A[r][j] for j in range(cols)]
        pivots.append(c)
        r += 1
        if r == rows:
            break
    free = [c for c in range(cols) if c not in pivots]
    basis = []
    for fc in free:
        v = [Fraction(0)] * cols
        v[fc] = Fraction(1)
        for i, pc in enumerate(pivots):
            v[pc] = -A[i][fc]
        basis.append(v)
    return basis


# -- integer Smith normal form ------------------------------------------

def smith_normal_form(M):
    """U * M * V = D diagonal (divisibility chain); returns (U, D, V).

    Entries are Python ints; standard pivoting with Euclidean row/column
    reduction, adequate for the small matrices used here.
    """
    A = [[int(x) for x in row] for row in M]
    n = len(A)
    m = len(A[0]) if n else 0
    U = [[int(i == j) for j in range(n)] for i in range(n)]
    V = [[int(i == j) for j in range(m)] for i in range(m)]

    def swap_rows(i, j):
        A[i], A[j] = A[j], A[i]
        U[i], U[j] = U[j], U[i]

    def swap_cols(i, j):
        for row in A:
            row[i], row[j] = row[j], row[i]
        for row in V:
            row[i], row[j] = row[j], row[i]

    def addmul_row(dst, src, q):
        A[dst] = [a + q * b for a, b in zip(A[dst], A[src])]
        U[dst] = [a + q * b for a, b in zip(U[dst], U[src])]

    def addmul_col(dst, src, q):
        for row in A:
            row[dst] += q * row[src]
        for row in V:
            row[dst] += q * row[src]

    t = 0
    while t < min(n, m):
        piv = None
        for i in range(t, n):
            for j in range(t, m):
                if A[i][j] != 0 and (piv is None or abs(A[i][j]) < abs(A[piv[0]][piv[1]])):
                    piv = (i, j)
        if piv is None:
            break
        swap_rows(t, piv[0])
        swap_cols(t, piv[1])
        while True:
            dirty = False
            for i in range(t + 1, n):
                if A[i][t] != 0:
                    q = -(A[i][t] // A[t][t])
                    addmul_row(i, t, q)
                    if A[i][t] != 0:
                        swap_rows(t, i)
                        dirty = True
            for j in range(t + 1, m):
                if A[t][j] != 0:
                    q = -(A[t][j] // A[t][t])
                    addmul_col(j, t, q)
                    if A[t][j] != 0:
                        swap_cols(t, j)
                        dirty = True
            if not dirty:
                break
        t += 1
    # enforce the divisibility chain
    k = min(n, m)
    changed = True
    while changed:
        changed = False
        for i in range(k - 1):
            a, b = A[i][i], A[i + 1][i + 1]
            if b % a if a else b:
                if a and b % a == 0:
                    continue
                # fold entry (i+1,i+1) into position (i,i)
                addmul_col(i, i + 1, 1)
                while True:
                    for r in range(i + 1, n):
                        if A[r][i] != 0:
                            q = -(A[r][i] // A[i][i])
                            addmul_row(r, i, q)
                            if A[r][i] != 0:
                                swap_rows(i, r)
                    if all(A[r][i] == 0 for r in range(i + 1, n)):
                        break
                for c in range(i + 1, m):
                    if A[i][c] != 0:
                        q = -(A[i][c] // A[i][i])
                        addmul_col(c, i, q)
                changed = True
    for i in range(k):
        if A[i][i] < 0:
            A[i] = [-x for x in A[i]]
            U[i] = [-x for x in U[i]]
    return U, A, V


def saturation_basis(columns, n):
    """Z-basis of the saturation (Q-span ∩ Z^n) of integer column vectors.

    With U*M*V in Smith form and rank r, the first r columns of U^{-1}
    span the saturation.
    """
    M = [[columns[j][i] for j in range(len(columns))] for i in range(n)]
    U, D, _ = smith_normal_form(M)
    rank = sum(1 for i in range(min(len(D), len(D[0]) if D else 0)) if D[i][i] != 0)
    Uinv = inverse(frac_matrix(U))
    cols = []
    for j in range(rank):
        col = [Uinv[i][j] for i in range(n)]
        assert all(c.denominator == 1 for c in col)
        cols.append([int(c) for c in col])
    return cols


def elementary_divisor_valuations(M, p):
    """Valuations of the p-parts of the invariant factors (ascending)."""
    _, D, _ = smith_normal_form(M)
    out = []
    for i in range(min(len(D), len(D[0]) if D else 0)):
        d = D[i][i]
        if d == 0:
            continue
        v = 0
        while d % p == 0:
            d //= p
            v += 1
        out.append(v)
    return sorted(out)


# -- lattice reduction -----------------------------------------------------

def lll_reduce(columns, delta=Fraction(3, 4)):
    """Exact LLL reduction of linearly independent columns over Q.

    Returns the reduced columns; the span over Z is unchanged.
    """
    b = [[Fraction(x) for x in col] for col in columns]
    n = len(b)

    def dot(u, v):
        return sum(x * y for x, y in zip(u, v))

    def gso():
        star = []
        mu = [[Fraction(0)] * n for _ in range(n)]
        for i in range(n):
            v = b[i][:]
            for j in range(i):
                mu[i][j] = dot(b[i], star[j]) / dot(star[j], star[j])
                v = [x - mu[i][j] * y for x, y in zip(v, star[j])]
            star.append(v)
        return star, mu

    star, mu = gso()
    k = 1
    guard = 0
    while k < n:
        guard += 1
        if guard > 10_000:  # pragma: no cover - safety stop
            raise QSError("LLL failed to terminate")
        for j in range(k - 1, -1, -1):
            q = mu[k][j]
            r = round(q)
            if r:
                b[k] = [x - r * y for x, y in zip(b[k], b[j])]
        star, mu = gso()
        lhs = dot(star[k], star[k])
        rhs = (delta - mu[k][k - 1] ** 2) * dot(star[k - 1], star[k - 1])
        if lhs >= rhs:
            k += 1
        else:
            b[k], b[k - 1] = b[k - 1], b[k]
            star, mu = gso()
            k = max(k - 1, 1)
    return b


# -- arithmetic mod p ----------------------------------------------------

def solve_mod_p(A, b, p):
    """One solution of A x ≡ b (mod p) with free variables set to 0.

    Returns None when inconsistent.  A is a list of rows over Z.
    """
    rows = [[a % p for a in row] + [bb % p] for row, bb in zip(A, b)]
    ncols = len(A[0]) if A else 0
    pivots = []
    r = 0
    for c in range(ncols):
        piv = next((i for i in range(r, len(rows)) if rows[i][c] % p), None)
        if piv is None:
            continue
        rows[r], rows[piv] = rows[piv], rows[r]
        inv = pow(rows[r][c], -1, p)
        rows[r] = [x * inv % p for x in rows[r]]
        for i in range(len(rows)):
            if i != r and rows[i][c]:
                f = rows[i][c]
                rows[i] = [(x - f * y) % p for x, y in zip(rows[i], rows[r])]
        pivots.append(c)
        r += 1
    for i in range(r, len(rows)):
        if rows[i][ncols] % p:
            return None
    x = [0] * ncols
    for i, c in enumerate(pivots):
        x[c] = rows[i][ncols]
    return x


def kernel_mod_p(A, p):
    """A nonzero kernel vector of A mod p, or None."""
    ncols = len(A[0]) if A else 0
    rows = [[a % p for a in row] for row in A]
    pivots = []
    r = 0
    for c in range(ncols):
        piv = next((i for i in range(r, len(rows)) if rows[i][c] % p), None)
        if piv is None:
            continue
        rows[r], rows[piv] = rows[piv], rows[r]
        inv = pow(rows[r][c], -1, p)
        rows[r] = [x * inv % p for x in rows[r]]
        for i in range(len(rows)):
            if i != r and rows[i][c]:
                f = rows[i][c]
                rows[i] = [(x - f * y) % p for x, y in zip(rows[i], rows[r])]
        pivots.append(c)
        r += 1
    free = [c for c in range(ncols) if c not in pivots]
    if not free:
        return None
    fc = free[0]
    v = [0] * ncols
    v[fc] = 1
    for i, pc in enumerate(pivots):
        v[pc] = (-rows[i][fc]) % p
    return v
