import math
from fractions import Fraction

import gmpy2 as gmp
import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from equibound.numerics import (
    ExactOps,
    FloatOps,
    IntervalOps,
    RealOps,
    min_eig_estimate,
)
from equibound.polybasis import (
    DomainError,
    GegenbauerEvaluator,
    MonomialBasis,
    gegenbauer,
    gegenbauer_multivariate,
    gegenbauer_wq,
    monomial_basis,
    monomial_vector,
    y_matrix,
)

E = ExactOps()
F = FloatOps()
R256 = RealOps(256)
I256 = IntervalOps(256)


def _mp_gegenbauer(n, l, t):
    """Independent oracle: same normalized recurrence in mpmath."""
    tm = mp.mpf(t)
    if l == 0:
        return mp.mpf(1)
    pm2, pm1 = mp.mpf(1), tm
    for j in range(2, l + 1):
        pm2, pm1 = pm1, ((2 * j + n - 4) * tm * pm1 - (j - 1) * pm2) / (j + n - 3)
    return pm1


# -------------------------------------------------------------------
# univariate values
# -------------------------------------------------------------------


def test_degree_zero_is_one():
    assert gegenbauer(8, 0, 0.37, F) == 1.0


def test_degree_one_is_identity():
    assert gegenbauer(5, 1, Fraction(3, 10), E) == Fraction(3, 10)


def test_degree_two_closed_form_at_zero():
    # (n t^2 - 1)/(n - 1) at t = 0 and n = 5
    assert gegenbauer(5, 2, Fraction(0), E) == Fraction(-1, 4)


def test_degree_two_closed_form_gram_schmidt():
    # Gram-Schmidt of {1, t, t^2} under the weight (1-t^2)^((n-3)/2),
    # normalized at 1, gives (n t^2 - 1)/(n - 1); match exactly.
    for n in (3, 4, 7, 12, 24):
        for t in (Fraction(-3, 7), Fraction(0), Fraction(1, 2), Fraction(9, 10)):
            assert gegenbauer(n, 2, t, E) == Fraction(n * t * t - 1, n - 1)


def test_normalization_at_one_exact_over_rationals():
    for n in range(2, 33):
        for l in range(13):
            assert gegenbauer(n, l, Fraction(1), E) == 1


def test_normalization_at_one_high_precision():
    one = R256.one
    tol = gmp.mpfr(2) ** (4 - 256)
    for n in range(2, 33):
        for l in range(13):
            v = gegenbauer(n, l, one, R256)
            assert abs(R256.sub(v, one)) <= tol


def test_chebyshev_special_case():
    # n = 2 gives Chebyshev T_l: T_3(cos x) = cos 3x
    x = 0.8
    got = gegenbauer(2, 3, math.cos(x), F)
    assert got == pytest.approx(math.cos(3 * x), abs=1e-13)


def test_legendre_special_case():
    # n = 3 gives Legendre: P_4(t) = (35 t^4 - 30 t^2 + 3)/8
    t = Fraction(2, 5)
    got = gegenbauer(3, 4, t, E)
    assert got == (35 * t**4 - 30 * t**2 + 3) / 8


def test_domain_error_outside_interval():
    with pytest.raises(DomainError):
        gegenbauer(5, 3, 1.001, F)
    with pytest.raises(DomainError):
        gegenbauer(5, 3, -1.1, F)
    # 1e-12 slack admitted
    gegenbauer(5, 3, 1 + 5e-13, F)


def test_matches_mpmath_oracle():
    mp.mp.prec = 300
    for n in (4, 7, 11):
        for l in (2, 5, 8):
            for t in (-0.9, -0.3, 0.1, 0.77):
                got = gegenbauer(n, l, R256.convert(t), R256)
                ref = _mp_gegenbauer(n, l, t)
                assert abs(float(got) - float(ref)) < 1e-60


@given(t=st.floats(-1, 1), n=st.integers(3, 16), l=st.integers(0, 10))
@settings(max_examples=150, deadline=None)
def test_bounded_on_interval(t, n, l):
    assert abs(gegenbauer(n, l, t, F)) <= 1 + 1e-9


@given(t=st.fractions(min_value=Fraction(-1), max_value=Fraction(1),
                      max_denominator=10**4),
       n=st.integers(3, 12), l=st.integers(0, 8))
@settings(max_examples=100, deadline=None)
def test_interval_evaluation_encloses_exact(t, n, l):
    exact = gegenbauer(n, l, t, E)
    box = gegenbauer(n, l, I256.from_fraction(t), I256)
    ref = RealOps(512).from_fraction(exact)
    assert box.lo <= ref <= box.hi


def test_orthogonality_quadrature_sample():
    # weighted quadrature oracle on a sample of (n, l, l') pairs; the full
    # n in 4..12, l,l' <= 8 sweep runs in the acceptance suite
    mp.mp.prec = 300
    for n, l, lp in ((4, 1, 3), (5, 2, 4), (7, 0, 6), (9, 3, 8), (12, 5, 7)):
        def f(t, n=n, l=l, lp=lp):
            tm = mp.mpf(t)
            w = (1 - tm ** 2) ** (mp.mpf(n - 3) / 2)
            return _mp_gegenbauer(n, l, tm) * _mp_gegenbauer(n, lp, tm) * w
        val = mp.quad(f, [-1, 0, 1])
        assert abs(val) <= mp.mpf("1e-20")


# -------------------------------------------------------------------
# multivariate values
# -------------------------------------------------------------------


def test_multivariate_head_zero_matches_univariate():
    for l in (0, 1, 4):
        got = gegenbauer_multivariate(7, 0, l, Fraction(1, 3), (), (), E)
        assert got == gegenbauer(7, l, Fraction(1, 3), E)


def test_multivariate_t1_u_equals_v():
    # (t=1, u=v) -> (1 - |u|^2)^l
    u = (Fraction(1, 2), Fraction(1, 3))
    su = 1 - (u[0] ** 2 + u[1] ** 2)
    for l in (0, 1, 2, 5):
        got = gegenbauer_multivariate(9, 2, l, Fraction(1), u, u, E)
        assert got == su ** l


def test_multivariate_singular_surface():
    u = (Fraction(1),)
    v = (Fraction(1, 4),)
    assert gegenbauer_multivariate(6, 1, 0, Fraction(1, 2), u, v, E) == 1
    for l in (1, 2, 3):
        assert gegenbauer_multivariate(6, 1, l, Fraction(1, 2), u, v, E) == 0


def test_multivariate_singular_surface_limit():
    # value tends to 0 along |u| -> 1 for geometric inputs
    l, n = 3, 6
    prev = None
    for eps in (1e-2, 1e-4, 1e-6):
        uu = math.sqrt(1 - eps)
        # geometric input: t = u*v + sqrt(s_u s_v) * cos(angle)
        v = 0.25
        t = uu * v + math.sqrt((1 - uu * uu) * (1 - v * v)) * 0.6
        val = abs(gegenbauer_multivariate(n, 1, l, t, (uu,), (v,), F))
        if prev is not None:
            assert val < prev
        prev = val
    assert prev < 1e-8


def test_multivariate_head_too_large():
    with pytest.raises(DomainError):
        gegenbauer_multivariate(4, 3, 1, 0.5, (0.1, 0.1, 0.1), (0.1, 0.1, 0.1), F)


def test_multivariate_rejects_long_head():
    with pytest.raises(DomainError):
        gegenbauer_multivariate(8, 2, 1, 0.5, (0.1,), (0.1, 0.2), F)


def test_multivariate_matches_definition():
    # compare the square-root-free recurrence against the literal
    # definition ((s_u s_v)^(l/2)) * P_l^{n-m}(w / sqrt(s_u s_v))
    rng = np.random.default_rng(5)
    for _ in range(40):
        n = int(rng.integers(4, 11))
        m = int(rng.integers(1, min(3, n - 2) + 1))
        l = int(rng.integers(0, 7))
        x = rng.normal(size=n); x /= np.linalg.norm(x)
        y = rng.normal(size=n); y /= np.linalg.norm(y)
        u, v = tuple(x[:m].tolist()), tuple(y[:m].tolist())
        t = float(np.clip(x @ y, -1, 1))
        su = 1 - sum(a * a for a in u)
        sv = 1 - sum(a * a for a in v)
        got = gegenbauer_multivariate(n, m, l, t, u, v, F)
        if su <= 1e-14 or sv <= 1e-14:
            continue
        root = math.sqrt(su * sv)
        arg = (t - sum(a * b for a, b in zip(u, v))) / root
        ref = root ** l * gegenbauer(n - m, l, max(-1.0, min(1.0, arg)), F)
        assert got == pytest.approx(ref, abs=1e-10)


def test_wq_form_is_polynomial_identity():
    # gegenbauer_wq(n, l, w, q) equals q^(l/2) p_l(w/sqrt(q)) for q > 0
    w, q = Fraction(1, 3), Fraction(9, 16)  # q has exact sqrt 3/4
    for n in (4, 8):
        for l in (2, 3, 5):
            got = gegenbauer_wq(n, l, w, q, E)
            rootq = Fraction(3, 4)
            ref = rootq ** l * gegenbauer(n, l, w / rootq, E)
            assert got == ref


def test_kernel_positivity_50_instances():
    rng = np.random.default_rng(42)
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(5, 11))
        m = int(rng.integers(0, 4))
        l = int(rng.integers(0, 7))
        N = int(rng.integers(2, 13))
        C = rng.normal(size=(N, n))
        C /= np.linalg.norm(C, axis=1, keepdims=True)
        Q, _ = np.linalg.qr(rng.normal(size=(n, m)))
        Erows = Q[:, :m].T
        M = np.zeros((N, N))
        for i in range(N):
            for j in range(i + 1):
                t = float(np.clip(C[i] @ C[j], -1, 1))
                u = tuple((Erows @ C[i]).tolist())
                v = tuple((Erows @ C[j]).tolist())
                M[i, j] = M[j, i] = gegenbauer_multivariate(n, m, l, t, u, v, F)
        worst = min(worst, min_eig_estimate(M.tolist()))
    assert worst >= -1e-9


# -------------------------------------------------------------------
# monomial bases and Y matrices
# -------------------------------------------------------------------


def test_basis_sizes():
    assert monomial_basis(0, 7).size == 1
    assert monomial_basis(1, 5).size == 6
    assert monomial_basis(2, 3).size == 10
    assert monomial_basis(3, 2).size == 10  # binomial(5, 3)


def test_basis_order_m2_l1():
    assert monomial_basis(2, 1).exponents == ((0, 0), (1, 0), (0, 1))


def test_basis_graded_lex_m2_l2():
    assert monomial_basis(2, 2).exponents == (
        (0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2))


def test_basis_prefix_nesting():
    for m in (1, 2, 3):
        big = monomial_basis(m, 5).exponents
        for l in range(5):
            small = monomial_basis(m, l).exponents
            assert big[: len(small)] == small


def test_basis_deterministic():
    assert MonomialBasis(2, 4).exponents == MonomialBasis(2, 4).exponents


def test_monomial_vector_examples():
    assert monomial_vector(monomial_basis(0, 3), (), F) == [1.0]
    assert monomial_vector(monomial_basis(1, 2), (0.5,), F) == [1.0, 0.5, 0.25]
    got = monomial_vector(monomial_basis(2, 1), (2.0, 3.0), F)
    assert got == [1.0, 2.0, 3.0]


def test_monomial_vector_length_check():
    with pytest.raises(ValueError):
        monomial_vector(monomial_basis(2, 1), (1.0,), F)


def test_y_matrix_all_ones():
    got = y_matrix(7, 1, 0, 5, Fraction(1), (Fraction(1),), (Fraction(1),), E)
    assert len(got) == 6
    assert all(x == 1 for row in got for x in row)


def test_y_matrix_zero_on_surface():
    got = y_matrix(7, 1, 3, 5, Fraction(1), (Fraction(1),), (Fraction(1),), E)
    assert len(got) == 3  # binomial(5-3+1, 1) = 3
    assert all(x == 0 for row in got for x in row)


def test_y_matrix_size_m2():
    got = y_matrix(9, 2, 2, 5, 0.2, (0.1, 0.2), (0.3, 0.1), F)
    assert len(got) == 10 and len(got[0]) == 10


def test_y_matrix_transpose_symmetry():
    rng = np.random.default_rng(9)
    x = rng.normal(size=7); x /= np.linalg.norm(x)
    y = rng.normal(size=7); y /= np.linalg.norm(y)
    u, v = tuple(x[:2].tolist()), tuple(y[:2].tolist())
    t = float(x @ y)
    A = y_matrix(7, 2, 1, 4, t, u, v, F)
    B = y_matrix(7, 2, 1, 4, t, v, u, F)
    for i in range(len(A)):
        for j in range(len(A)):
            assert A[i][j] == pytest.approx(B[j][i], abs=1e-14)


def test_y_matrix_rank_one_structure():
    A = np.array(y_matrix(8, 1, 2, 5, 0.3, (0.4,), (0.2,), F))
    s = np.linalg.svd(A, compute_uv=False)
    assert s[1] < 1e-12 * max(1.0, s[0])


def test_y_matrix_degree_bounds():
    with pytest.raises(DomainError):
        y_matrix(7, 1, 6, 5, 0.3, (0.1,), (0.1,), F)


def test_evaluator_rejects_small_dimension():
    with pytest.raises(DomainError):
        GegenbauerEvaluator(1)
