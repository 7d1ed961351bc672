import itertools
import random
from fractions import Fraction

import pytest

from qscount import linalg
from qscount.errors import DegenerateForm, NotIsotropic, QSError
from qscount.padic import legendre, smallest_nonresidue, valuation
from qscount.qform import (QuadraticFormP, QuadraticFormS, Region, SInterval,
                           STime, diagonalize, equivalent, find_isotropic_vector,
                           invariants, is_exceptional, is_isotropic, is_split,
                           standard_gram, to_standard)


def rand_form(rng, p, n, bound=4):
    while True:
        G = [[Fraction(0)] * n for _ in range(n)]
        for i in range(n):
            for j in range(i, n):
                G[i][j] = G[j][i] = Fraction(rng.randint(-bound, bound))
        try:
            return QuadraticFormP(p, G)
        except DegenerateForm:
            continue


def test_invariants_examples():
    q = QuadraticFormP(5, [[1, 0, 0], [0, 1, 0], [0, 0, 1]])
    inv = invariants(q)
    assert (inv.rank, inv.disc_trivial, inv.hasse) == (3, True, 1)

    split = QuadraticFormP(5, standard_gram(4, [1, -1], 5))
    inv = invariants(split)
    assert (inv.rank, inv.disc_trivial, inv.hasse) == (4, True, 1)

    q2 = QuadraticFormP(7, [[1, 0], [0, 7]])
    inv = invariants(q2)
    assert (inv.rank, inv.disc_parity, inv.hasse) == (2, 1, 1)


def test_invariants_congruence_invariance():
    rng = random.Random(3)
    for p in (3, 5, 7):
        for _ in range(25):
            n = rng.choice([3, 4])
            q = rand_form(rng, p, n)
            while True:
                g = [[Fraction(rng.randint(-3, 3), rng.choice([1, 1, p]))
                      for _ in range(n)] for _ in range(n)]
                if linalg.det(g) != 0:
                    break
            moved = QuadraticFormP(p, linalg.mat_mul(
                linalg.transpose(g), linalg.mat_mul(q.gram, g)))
            assert equivalent(q, moved)


def test_at_most_eight_classes():
    rng = random.Random(4)
    for p in (3, 5):
        for n in (3, 4):
            seen = set()
            for _ in range(400):
                q = rand_form(rng, p, n)
                seen.add(invariants(q).as_tuple())
            assert len(seen) <= 8


def test_isotropy_examples_and_oracle():
    assert is_isotropic(QuadraticFormP(5, [[1, 0], [0, 1]]))
    assert not is_isotropic(QuadraticFormP(7, [[1, 0], [0, 1]]))
    q5 = QuadraticFormP(3, [[Fraction(int(i == j) * (i + 1)) for j in range(5)] for i in range(5)])
    assert is_isotropic(q5)

    # exhaustive mod p^3 search over primitive vectors as the oracle
    def oracle(q, p):
        n = q.n
        mod = p ** 3
        den = 1
        for row in q.gram:
            for c in row:
                den = den * c.denominator // __import__("math").gcd(den, c.denominator)
        qi = [[int(c * den) for c in row] for row in q.gram]
        for v in itertools.product(range(mod), repeat=n):
            if all(x % p == 0 for x in v):
                continue
            val = sum(qi[i][j] * v[i] * v[j] for i in range(n) for j in range(n))
            if val % mod == 0:
                grad = [2 * sum(qi[i][j] * v[j] for j in range(n)) for i in range(n)]
                if any(g % p for g in grad) or val % (p ** 3) == 0 and any(
                        g % (p * p) for g in grad):
                    return True
        return False

    rng = random.Random(5)
    for p in (3, 5):
        for _ in range(12):
            q = rand_form(rng, p, 2, bound=3)
            assert is_isotropic(q) == oracle(q, p), (p, q.gram)
        for _ in range(6):
            q = rand_form(rng, p, 3, bound=2)
            got = is_isotropic(q)
            if got:
                v = find_isotropic_vector(q, N=12)
                qv = q.evaluate(v)
                assert qv == 0 or valuation(qv, p) >= 12
            else:
                assert not oracle(q, p)


def test_find_isotropic_certificate():
    q = QuadraticFormP(5, [[1, 0, 0], [0, 1, 0], [0, 0, -1]])
    v = find_isotropic_vector(q, N=20)
    qv = q.evaluate(v)
    assert qv == 0 or valuation(qv, 5) >= 20
    assert max(-valuation(c, 5) if c else -99 for c in v) == 0  # unit max norm
    with pytest.raises(NotIsotropic):
        find_isotropic_vector(QuadraticFormP(7, [[1, 0], [0, 1]]), N=5)


def test_to_standard_examples():
    # already standard: recovered with identity-like transition
    q = QuadraticFormP(5, standard_gram(4, [1, -1], 5))
    coeffs, g, warning = to_standard(q, N=20)
    target = QuadraticFormP(5, standard_gram(4, coeffs, 5))
    assert equivalent(q, target)
    assert warning  # the split rank-4 form admits no non-square ratio

    q3 = QuadraticFormP(5, [[1, 0, 0], [0, 1, 0], [0, 0, -1]])
    coeffs, g, _ = to_standard(q3, N=24)
    got = linalg.mat_mul(linalg.transpose(g), linalg.mat_mul(q3.gram, g))
    tgt = standard_gram(3, coeffs, 5)
    for i in range(3):
        for j in range(3):
            d = got[i][j] - tgt[i][j]
            assert d == 0 or valuation(d, 5) >= 24
    assert equivalent(q3, QuadraticFormP(5, tgt))


def test_to_standard_random_congruence():
    rng = random.Random(6)
    for p in (3, 5, 7):
        base = QuadraticFormP(p, standard_gram(4, [1, smallest_nonresidue(p)], p))
        for _ in range(5):
            while True:
                g = [[Fraction(rng.randint(-3, 3)) for _ in range(4)] for _ in range(4)]
                if linalg.det(g) != 0:
                    break
            q = QuadraticFormP(p, linalg.mat_mul(
                linalg.transpose(g), linalg.mat_mul(base.gram, g)))
            coeffs, trans, _ = to_standard(q, N=20)
            got = linalg.mat_mul(linalg.transpose(trans),
                                 linalg.mat_mul(q.gram, trans))
            tgt = standard_gram(4, coeffs, p)
            for i in range(4):
                for j in range(4):
                    d = got[i][j] - tgt[i][j]
                    assert d == 0 or valuation(d, p) >= 20
            assert invariants(QuadraticFormP(p, tgt)).as_tuple() == invariants(q).as_tuple()


def test_exceptional_examples():
    # rank 3: always exceptional
    q3 = QuadraticFormS({
        "inf": QuadraticFormP("inf", [[1, 0, 0], [0, 1, 0], [0, 0, -1]]),
        5: QuadraticFormP(5, [[1, 0, 0], [0, 1, 0], [0, 0, -1]]),
    })
    assert is_exceptional(q3)
    # n=4 with the literal split form at 5
    qsplit = QuadraticFormS({
        "inf": QuadraticFormP("inf", [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 1, 0], [0, 0, 0, -1]]),
        5: QuadraticFormP(5, standard_gram(4, [1, -1], 5)),
    })
    assert is_exceptional(qsplit)
    # n=4, signature (3,1), q_5 = x1x4 + x2^2 + x3^2 is split over Q_5 (-1 is a square)
    q_both = QuadraticFormS({
        "inf": QuadraticFormP("inf", [[0, 0, 0, .5], [0, 1, 0, 0], [0, 0, 1, 0], [.5, 0, 0, 0]]),
        5: QuadraticFormP(5, standard_gram(4, [1, 1], 5)),
    })
    assert is_split(q_both.at(5))
    # non-split q_5 (odd discriminant valuation) and (3,1) at infinity
    q_ok = QuadraticFormS({
        "inf": QuadraticFormP("inf", [[0, 0, 0, .5], [0, 1, 0, 0], [0, 0, 1, 0], [.5, 0, 0, 0]]),
        5: QuadraticFormP(5, standard_gram(4, [1, 5], 5)),
    })
    assert not is_exceptional(q_ok)


def test_exceptional_invariance_under_scaling_and_basis():
    rng = random.Random(7)
    base = QuadraticFormS({
        "inf": QuadraticFormP("inf", [[0, 0, 0, .5], [0, 1, 0, 0], [0, 0, 1, 0], [.5, 0, 0, 0]]),
        5: QuadraticFormP(5, standard_gram(4, [1, 5], 5)),
    })
    flag = is_exceptional(base)
    for _ in range(10):
        u = rng.choice([1, 2, 3, 4, 6])
        while True:
            g = [[Fraction(rng.randint(-2, 2)) for _ in range(4)] for _ in range(4)]
            if linalg.det(g) != 0:
                break
        gram5 = linalg.mat_mul(linalg.transpose(g),
                               linalg.mat_mul(base.at(5).gram, g))
        gram5 = [[u * c for c in row] for row in gram5]
        moved = QuadraticFormS({
            "inf": base.at("inf"),
            5: QuadraticFormP(5, gram5),
        })
        assert is_exceptional(moved) == flag


def test_time_interval_region_types():
    T = STime(10.0, {3: 2, 5: 0})
    assert T.at(3) == 9 and T.at(5) == 1
    assert T.norm() == 90.0
    assert T.min_component() == 1.0
    assert T.dominates(STime(10.0, {3: 1, 5: 0}))
    with pytest.raises(QSError):
        STime(-1.0, {})

    iv = SInterval((-0.5, 1.5), {3: (Fraction(1, 3), 2)})
    assert abs(iv.measure() - 2.0 / 9) < 1e-12
    with pytest.raises(QSError):
        SInterval((1.0, 1.0), {})

    reg = Region.unit_balls(3, [3])
    assert reg.rho_max_inf() == 1.0
    assert reg.rho_max_exponent(3) == 0
    # non-unit-invariant table is rejected
    bad = {c: (1 if c == (1, 0, 0) else 0)
           for c in itertools.product(range(3), repeat=3) if any(x % 3 for x in c)}
    with pytest.raises(QSError):
        Region(3, finite={3: ("table", 1, bad)})


def test_degenerate_rejected():
    with pytest.raises(DegenerateForm):
        QuadraticFormP(5, [[1, 0], [0, 0]])
    with pytest.raises(DegenerateForm):
        QuadraticFormP("inf", [[1, 0], [0, 1e-12]])
