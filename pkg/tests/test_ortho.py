import random
from fractions import Fraction

import pytest

from qscount import linalg
from qscount.errors import NoIsometry, NotStandardForm, ValueMismatch
from qscount.ortho import (FlowElement, OrthoElement, flow, lift_isometry,
                           orbit_transfer, reflection_matrix,
                           solve_symmetric_sylvester, witt_finite,
                           _scaled_gram_int)
from qscount.padic import valuation, vector_norm_p
from qscount.qform import QuadraticFormP, standard_gram


def random_orbit_target(q, p, M, rng, reflections=4):
    """Product of p-integral reflections applied to e1, computed mod p^M."""
    n = q.n
    S = _scaled_gram_int(q)
    mod = p ** M
    v = [1] + [0] * (n - 1)
    done = 0
    while done < reflections:
        w = [rng.randint(-p * p, p * p) for _ in range(n)]
        qw2 = sum(S[i][j] * w[i] * w[j] for i in range(n) for j in range(n))
        if qw2 % p == 0:
            continue
        Sw = [sum(S[i][j] * w[j] for j in range(n)) % mod for i in range(n)]
        f = 2 * pow(qw2 % mod, -1, mod)
        xw = sum(v[i] * Sw[i] for i in range(n)) % mod
        v = [(v[i] - f * xw * w[i]) % mod for i in range(n)]
        done += 1
    return v


def test_flow_examples():
    q = QuadraticFormP(5, standard_gram(3, [1], 5))
    assert flow(q, 0).matrix == linalg.identity(3)
    a1 = flow(q, 1)
    assert a1.matrix[0][0] == 5 and a1.matrix[2][2] == Fraction(1, 5)
    B = linalg.frac_matrix(q.gram)
    assert linalg.mat_mul(linalg.transpose(a1.matrix),
                          linalg.mat_mul(B, a1.matrix)) == B
    assert (a1 @ a1).matrix == flow(q, 2).matrix
    with pytest.raises(NotStandardForm):
        flow(QuadraticFormP(5, [[1, 0], [0, 1]]), 1)


def test_witt_finite_random():
    rng = random.Random(0)
    for p, coeffs in ((5, [1]), (7, [1, -1]), (3, [2])):
        q = QuadraticFormP(p, standard_gram(len(coeffs) + 2, coeffs, p))
        S = [[x % p for x in row] for row in _scaled_gram_int(q)]
        m = q.n
        good = 0
        while good < 50:
            v1 = [rng.randrange(p) for _ in range(m)]
            v2 = [rng.randrange(p) for _ in range(m)]
            if not any(v1) or not any(v2):
                continue
            q1 = sum(S[i][j] * v1[i] * v1[j] for i in range(m) for j in range(m)) % p
            q2 = sum(S[i][j] * v2[i] * v2[j] for i in range(m) for j in range(m)) % p
            if q1 != q2:
                with pytest.raises(NoIsometry):
                    witt_finite(S, v1, v2, p)
                continue
            X = witt_finite(S, v1, v2, p)
            XS = [[sum(X[k][i] * S[k][j] for k in range(m)) % p for j in range(m)]
                  for i in range(m)]
            XSX = [[sum(XS[i][k] * X[k][j] for k in range(m)) % p for j in range(m)]
                   for i in range(m)]
            assert all((XSX[i][j] - S[i][j]) % p == 0 for i in range(m) for j in range(m))
            assert all((sum(X[i][j] * v1[j] for j in range(m)) - v2[i]) % p == 0
                       for i in range(m))
            good += 1


def test_sylvester_solver():
    rng = random.Random(1)
    for p in (3, 5, 7):
        for _ in range(15):
            m = rng.choice([2, 3, 4])
            while True:
                A = [[rng.randrange(p) for _ in range(m)] for _ in range(m)]
                for i in range(m):
                    for j in range(i):
                        A[i][j] = A[j][i]
                if linalg.det(linalg.frac_matrix(A)).numerator % p:
                    break
            C = [[rng.randrange(p) for _ in range(m)] for _ in range(m)]
            for i in range(m):
                for j in range(i):
                    C[i][j] = C[j][i]
            X = solve_symmetric_sylvester(A, C, p)
            chk = [[(sum(X[k][i] * A[k][j] for k in range(m))
                     + sum(A[i][k] * X[k][j] for k in range(m))) % p
                    for j in range(m)] for i in range(m)]
            assert all((chk[i][j] - C[i][j]) % p == 0 for i in range(m) for j in range(m))
            # C = 0 admits X = 0
            Z = solve_symmetric_sylvester(A, [[0] * m for _ in range(m)], p)
            chk0 = [[(sum(Z[k][i] * A[k][j] for k in range(m))
                      + sum(A[i][k] * Z[k][j] for k in range(m))) % p
                     for j in range(m)] for i in range(m)]
            assert all(x % p == 0 for row in chk0 for x in row)


def test_lift_identity_and_value_mismatch():
    q = QuadraticFormP(5, standard_gram(4, [1, -1], 5))
    k = lift_isometry(q, [1, 0, 0, 0], N=20)
    assert all(k.verify(target=[1, 0, 0, 0]).values())
    # v = e1 + c e_n has q(v) = c != 0: rejected
    with pytest.raises(ValueMismatch):
        lift_isometry(q, [1, 0, 0, 5], N=10)


def test_lift_random_targets_various_forms():
    rng = random.Random(2)
    grid = [(3, [1]), (5, [2]), (7, [1, -1]), (5, [5]), (3, [1, 6]), (7, [7, 1])]
    for p, coeffs in grid:
        q = QuadraticFormP(p, standard_gram(len(coeffs) + 2, coeffs, p))
        for _ in range(8):
            v = random_orbit_target(q, p, 24, rng)
            k = lift_isometry(q, v, N=20)
            checks = k.verify(target=[c % p ** 20 for c in v])
            assert all(checks.values()), (p, coeffs, checks)


def test_lift_rejects_radical_target():
    # q = x1x4 + 3x2^2 + 6x3^2 over Q_3: v = (3,1,1,-3) is a unit-norm exact
    # zero, but pairs into the radical mod 3 and is not in the orbit of e1
    q = QuadraticFormP(3, standard_gram(4, [3, 6], 3))
    v = [3, 1, 1, -3]
    assert q.evaluate(v) == 0
    assert vector_norm_p(v, 3) == 1
    with pytest.raises(NoIsometry):
        lift_isometry(q, v, N=10)


def test_k_preserves_max_norm():
    rng = random.Random(3)
    q = QuadraticFormP(5, standard_gram(4, [1, 5], 5))
    for _ in range(10):
        v = random_orbit_target(q, 5, 22, rng)
        k = lift_isometry(q, v, N=20)
        for _ in range(10):
            x = [rng.randint(-100, 100) for _ in range(4)]
            y = k.apply(x)
            vx = min((valuation(c, 5) for c in x if c), default=99)
            vy = min((valuation(Fraction(c), 5) for c in y if c), default=99)
            assert vy >= vx  # ||kx|| <= ||x||; equality generically


def test_flow_conjugation_rescales_first_coordinate():
    p = 5
    q = QuadraticFormP(p, standard_gram(3, [1], p))
    rng = random.Random(4)
    a1 = flow(q, 1).matrix
    for _ in range(20):
        v = random_orbit_target(q, p, 18, rng)
        # a_t scales the first coordinate by p^t (p-adic norm shrinks by p^-t)
        moved = linalg.mat_vec(a1, [Fraction(c) for c in v])
        assert valuation(moved[0], p) == valuation(Fraction(v[0]), p) + 1


def test_orbit_transfer_exact():
    q = QuadraticFormP(5, standard_gram(3, [2], 5))
    rng = random.Random(5)
    for _ in range(10):
        # exact rational orbit points via reflection products
        v = [Fraction(1), Fraction(0), Fraction(0)]
        for _ in range(3):
            w = [Fraction(rng.randint(-4, 4)) for _ in range(3)]
            qw = q.evaluate(w)
            if qw == 0 or valuation(qw, 5) != 0:
                continue
            v = linalg.mat_vec(reflection_matrix(q, w), v)
        R = orbit_transfer(q, [1, 0, 0], v)
        assert linalg.mat_vec(R, [Fraction(1), 0, 0]) == v
        got = linalg.mat_mul(linalg.transpose(R), linalg.mat_mul(q.gram, R))
        assert got == linalg.frac_matrix(q.gram)
        # p-integral entries
        assert all(valuation(c, 5) >= 0 for row in R for c in row if c)
