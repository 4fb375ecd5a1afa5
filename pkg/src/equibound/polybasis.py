"""Normalized Gegenbauer polynomials, their multivariate extension, monomial
bases, and the outer-product matrices built from them.

The univariate family p_l for ambient dimension n is the Jacobi family with
both parameters (n-3)/2, normalized so p_l(1) = 1.  Written in normalized
form the three-term recurrence is

    p_0(t) = 1,   p_1(t) = t,
    p_l(t) = ((2l + n - 4) t p_{l-1}(t) - (l - 1) p_{l-2}(t)) / (l + n - 3),

whose coefficients satisfy A_l - B_l = 1, so p_l(1) = 1 holds identically.

The multivariate value for tail dimension n, head size m is

    ((1-|u|^2)(1-|v|^2))^(l/2) * p_l^{n-m}((t - u.v) / sqrt(...)),

a polynomial in w = t - u.v and q = (1-|u|^2)(1-|v|^2) despite the square
roots: substituting into the recurrence gives the equivalent square-root-free
form

    PP_0 = 1,   PP_1 = w,
    PP_l = ((2l + n' - 4) w PP_{l-1} - (l - 1) q PP_{l-2}) / (l + n' - 3)

with n' = n - m.  Everything here evaluates through that recurrence, so the
same code path serves floats, fixed-precision reals, outward-rounded
intervals, and exact rationals.
"""

from __future__ import annotations

import itertools
from fractions import Fraction
from functools import lru_cache
from typing import List, Sequence, Tuple

from .numerics import Interval


class DomainError(ValueError):
    """Argument outside the polynomial family's domain."""


# -------------------------------------------------------------------
# recurrence coefficients
# -------------------------------------------------------------------


class GegenbauerEvaluator:
    """Recurrence evaluator for one ambient dimension n.

    Coefficient pairs (A_l, B_l) with p_l = A_l t p_{l-1} - B_l p_{l-2} are
    held as exact rationals and converted once per arithmetic backend.
    Instances are immutable after construction and safe to share across
    threads.
    """

    __slots__ = ("n", "max_degree", "_coeffs", "_converted")

    def __init__(self, n: int, max_degree: int = 64) -> None:
        if n < 2:
            raise DomainError(f"ambient dimension must be >= 2, got {n}")
        self.n = n
        self.max_degree = max_degree
        coeffs = [None, None]  # degrees 0 and 1 are explicit
        for l in range(2, max_degree + 1):
            den = l + n - 3
            coeffs.append((Fraction(2 * l + n - 4, den), Fraction(l - 1, den)))
        self._coeffs = tuple(coeffs)
        self._converted = {}

    def coefficients(self, ops) -> tuple:
        cached = self._converted.get(ops.cache_key)
        if cached is None:
            cached = tuple(
                None if c is None
                else (ops.from_fraction(c[0]), ops.from_fraction(c[1]))
                for c in self._coeffs
            )
            self._converted[ops.cache_key] = cached
        return cached

    def eval_wq(self, l: int, w, q, ops):
        """The square-root-free bivariate form: q=1 recovers p_l(w)."""
        if l == 0:
            return ops.one
        if l == 1:
            return w
        if l > self.max_degree:
            raise DomainError(f"degree {l} above evaluator limit {self.max_degree}")
        coeffs = self.coefficients(ops)
        pm2 = ops.one
        pm1 = w
        for j in range(2, l + 1):
            a, b = coeffs[j]
            cur = ops.sub(ops.mul(a, ops.mul(w, pm1)),
                          ops.mul(b, ops.mul(q, pm2)))
            pm2, pm1 = pm1, cur
        return pm1


@lru_cache(maxsize=None)
def _evaluator(n: int) -> GegenbauerEvaluator:
    return GegenbauerEvaluator(n)


_LIMIT = 1 + 1e-12


def _check_point_domain(t, ops) -> None:
    if isinstance(t, Interval):
        if t.hi > _LIMIT or -t.lo > _LIMIT:
            raise DomainError(f"argument interval [{t.lo}, {t.hi}] outside [-1, 1]")
    else:
        if t > _LIMIT or -t > _LIMIT:
            raise DomainError(f"argument {t} outside [-1, 1]")


def gegenbauer(n: int, l: int, t, ops):
    """Normalized degree-l Gegenbauer value for ambient dimension n at t.

    t must lie in [-1, 1] up to 1e-12 of slack.
    """
    if l < 0:
        raise DomainError(f"degree must be >= 0, got {l}")
    _check_point_domain(t, ops)
    return _evaluator(n).eval_wq(l, t, ops.one, ops)


def gegenbauer_wq(n: int, l: int, w, q, ops):
    """Bivariate form: ((sign-free) q^(l/2) p_l(w/sqrt(q))) as a polynomial
    in w and q.  No domain restriction; used with exact rational w, q."""
    if l < 0:
        raise DomainError(f"degree must be >= 0, got {l}")
    return _evaluator(n).eval_wq(l, w, q, ops)


def _dot(u: Sequence, v: Sequence, ops):
    s = ops.zero
    for a, b in zip(u, v):
        s = ops.add(s, ops.mul(a, b))
    return s


def _is_nonpositive(x) -> bool:
    if isinstance(x, Interval):
        return x.hi <= 0
    return x <= 0


def gegenbauer_multivariate(n: int, m: int, l: int, t, u: Sequence, v: Sequence,
                            ops):
    """Multivariate Gegenbauer value for tail dimension n - m.

    u and v are the common-coordinate heads, each of length m with norm at
    most 1.  On the singular surface |u| = 1 (or |v| = 1) the value is 0 for
    l >= 1 and 1 for l = 0.
    """
    if m > n - 2:
        raise DomainError(f"head size {m} exceeds n - 2 = {n - 2}")
    if len(u) != m or len(v) != m:
        raise DomainError(f"head vectors must have length {m}")
    if m == 0:
        return gegenbauer(n, l, t, ops)
    su = ops.sub(ops.one, _dot(u, u, ops))
    sv = ops.sub(ops.one, _dot(v, v, ops))
    for s, name in ((su, "u"), (sv, "v")):
        val = s.hi if isinstance(s, Interval) else s
        if val < -1e-12:
            raise DomainError(f"|{name}| exceeds 1")
    if _is_nonpositive(su) or _is_nonpositive(sv):
        return ops.one if l == 0 else ops.zero
    w = ops.sub(t, _dot(u, v, ops))
    q = ops.mul(su, sv)
    return _evaluator(n - m).eval_wq(l, w, q, ops)


# -------------------------------------------------------------------
# monomial bases
# -------------------------------------------------------------------


class MonomialBasis:
    """Exponent tuples for m variables, total degree <= l, graded order.

    Within a degree the tuples are in descending lexicographic order, so
    for m = 2, l = 1 the basis reads 1, x, y.  The basis of degree <= l-1
    is a prefix of the basis of degree <= l, which the coefficient assembly
    relies on.
    """

    __slots__ = ("m", "l", "exponents")

    def __init__(self, m: int, l: int) -> None:
        if m < 0 or l < 0:
            raise ValueError("m and l must be nonnegative")
        self.m = m
        self.l = l
        exps: List[Tuple[int, ...]] = []
        for deg in range(l + 1):
            level = [e for e in itertools.product(range(deg, -1, -1), repeat=m)
                     if sum(e) == deg]
            if m == 0:
                level = [()] if deg == 0 else []
            exps.extend(sorted(level, reverse=True))
        self.exponents = tuple(exps)

    @property
    def size(self) -> int:
        return len(self.exponents)


@lru_cache(maxsize=None)
def monomial_basis(m: int, l: int) -> MonomialBasis:
    return MonomialBasis(m, l)


def monomial_vector(basis: MonomialBasis, u: Sequence, ops) -> list:
    """All basis monomials evaluated at u, in basis order."""
    if len(u) != basis.m:
        raise ValueError(f"point has length {len(u)}, basis has m = {basis.m}")
    # powers[i][e] = u_i^e
    powers = []
    for x in u:
        col = [ops.one]
        for _ in range(basis.l):
            col.append(ops.mul(col[-1], x))
        powers.append(col)
    out = []
    for exp in basis.exponents:
        val = ops.one
        for i, e in enumerate(exp):
            if e:
                val = ops.mul(val, powers[i][e])
        out.append(val)
    return out


def y_matrix(n: int, m: int, l: int, d: int, t, u: Sequence, v: Sequence,
             ops) -> List[list]:
    """P_l^{n,m}(t,u,v) z(u) z(v)^T over monomials of degree <= d - l.

    Rank at most one; square of size binomial(d-l+m, m).  Satisfies
    y_matrix(t,u,v) = y_matrix(t,v,u)^T entrywise.
    """
    if not 0 <= l <= d:
        raise DomainError(f"need 0 <= l <= d, got l={l}, d={d}")
    p = gegenbauer_multivariate(n, m, l, t, u, v, ops)
    basis = monomial_basis(m, d - l)
    zu = monomial_vector(basis, u, ops)
    zv = monomial_vector(basis, v, ops)
    return [[ops.mul(p, ops.mul(a, b)) for b in zv] for a in zu]
