"""High-precision scalars, directed-rounding intervals, and small dense
symmetric linear algebra.

Scalars are gmpy2 (MPFR) floats created through an explicit arithmetic
context, never through the ambient thread context, so a value's precision is
always the precision of the context that produced it.  Three interchangeable
arithmetic backends are provided:

  * FloatOps    -- plain double precision, for cheap non-rigorous checks;
  * RealOps     -- MPFR round-to-nearest at a fixed precision;
  * IntervalOps -- outward-rounded interval arithmetic at a fixed precision.

Every operation on every backend returns a finite value or raises; NaN and
overflow never propagate.  IntervalOps guarantees enclosure: for x in a and
y in b, the exact x op y lies in the returned interval.

The matrix helpers (Cholesky, triangular solves, interval PSD certification,
Jacobi eigendecomposition) are deliberately dense and loop-based: every matrix
in this package is at most 126 x 126.
"""

from __future__ import annotations

import contextlib
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import List, Optional, Sequence

import gmpy2 as gmp
import numpy as np

DEFAULT_PRECISION = 256
CERTIFY_PRECISION = 512


class NumericsError(ArithmeticError):
    """Base class for numeric failures."""


class NonFiniteValue(NumericsError):
    """A NaN or infinity tried to escape a public operation."""


class NotPositiveDefinite(NumericsError):
    """A Cholesky pivot was not strictly positive."""


class DivisionByIntervalContainingZero(NumericsError):
    pass


class NegativeSqrt(NumericsError):
    pass


class ConvergenceFailure(NumericsError):
    pass


# ===================================================================
# Scalar backends
# ===================================================================


class FloatOps:
    """Plain float arithmetic with the same interface as RealOps."""

    kind = "float"
    precision = 53

    def __init__(self) -> None:
        self.cache_key = ("float", 53)
        self.zero = 0.0
        self.one = 1.0

    def from_fraction(self, q):
        return q.numerator / q.denominator

    def from_int(self, i):
        return float(i)

    def convert(self, x):
        if isinstance(x, Fraction):
            return self.from_fraction(x)
        return float(x)

    def add(self, a, b):
        return a + b

    def sub(self, a, b):
        return a - b

    def mul(self, a, b):
        return a * b

    def div(self, a, b):
        return a / b

    def neg(self, a):
        return -a

    def sqrt(self, a):
        if a < 0:
            raise NegativeSqrt(f"sqrt of negative value {a}")
        return math.sqrt(a)

    def to_float(self, a):
        return float(a)

    def activate(self):
        """No-op counterpart of RealOps.activate, so callers need not branch."""
        return contextlib.nullcontext()


class RealOps:
    """MPFR arithmetic at fixed precision, round-to-nearest.

    All traps are armed: overflow, invalid operation and division by zero are
    hard errors rather than silent infinities or NaNs.
    """

    kind = "real"

    def __init__(self, precision: int = DEFAULT_PRECISION) -> None:
        if precision < 24:
            raise ValueError("precision below 24 bits is not supported")
        self.precision = precision
        self.ctx = gmp.context(
            precision=precision,
            trap_overflow=True,
            trap_invalid=True,
            trap_divzero=True,
        )
        self.cache_key = ("real", precision)
        self.zero = gmp.mpfr(0, precision)
        self.one = gmp.mpfr(1, precision)

    def from_fraction(self, q) -> "gmp.mpfr":
        return self.ctx.div(
            gmp.mpfr(q.numerator, self.precision + 8),
            gmp.mpfr(q.denominator, self.precision + 8),
        )

    def from_int(self, i):
        return gmp.mpfr(i, self.precision)

    def convert(self, x):
        if isinstance(x, Fraction):
            return self.from_fraction(x)
        return gmp.mpfr(x, self.precision)

    def add(self, a, b):
        return self.ctx.add(a, b)

    def sub(self, a, b):
        return self.ctx.sub(a, b)

    def mul(self, a, b):
        return self.ctx.mul(a, b)

    def div(self, a, b):
        return self.ctx.div(a, b)

    def neg(self, a):
        return self.ctx.minus(a)

    def sqrt(self, a):
        if a < 0:
            raise NegativeSqrt(f"sqrt of negative value {a}")
        return self.ctx.sqrt(a)

    def to_float(self, a):
        return float(a)

    def activate(self):
        """Context manager installing this precision as the thread context.

        Only the embedded solver uses this (plain operators on mpfr inside
        numpy object arrays); everything else calls the explicit methods.
        """
        return gmp.context(
            precision=self.precision,
            trap_overflow=True,
            trap_invalid=True,
            trap_divzero=True,
        )


class ExactOps:
    """Exact rational arithmetic (stdlib Fraction) with the RealOps interface.

    sqrt is only defined for perfect squares of rationals; the callers that
    use this backend (orbit realizability, frame inner products, polynomial
    recurrences) never need an inexact root.
    """

    kind = "exact"
    precision = 0  # exact

    def __init__(self) -> None:
        self.cache_key = ("exact", 0)
        self.zero = Fraction(0)
        self.one = Fraction(1)

    def from_fraction(self, q):
        return Fraction(q)

    def from_int(self, i):
        return Fraction(i)

    def convert(self, x):
        return Fraction(x)

    def add(self, a, b):
        return a + b

    def sub(self, a, b):
        return a - b

    def mul(self, a, b):
        return a * b

    def div(self, a, b):
        return a / b

    def neg(self, a):
        return -a

    def sqrt(self, a):
        if a < 0:
            raise NegativeSqrt(f"sqrt of negative value {a}")
        num = math.isqrt(a.numerator)
        den = math.isqrt(a.denominator)
        if num * num != a.numerator or den * den != a.denominator:
            raise NumericsError(f"{a} has no exact rational square root")
        return Fraction(num, den)

    def to_float(self, a):
        return a.numerator / a.denominator


@dataclass(frozen=True, slots=True)
class Interval:
    """A closed interval [lo, hi] with MPFR endpoints, lo <= hi."""

    lo: object
    hi: object

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"Interval[{self.lo!r}, {self.hi!r}]"

    @property
    def width(self):
        return gmp.context(precision=64, round=gmp.RoundUp).sub(self.hi, self.lo)

    def contains(self, x) -> bool:
        return self.lo <= x <= self.hi

    def mid(self):
        return gmp.context(precision=64).div(
            gmp.context(precision=64).add(self.lo, self.hi), gmp.mpfr(2)
        )


class IntervalOps:
    """Outward-rounded interval arithmetic at a fixed MPFR precision."""

    kind = "interval"

    def __init__(self, precision: int = CERTIFY_PRECISION) -> None:
        self.precision = precision
        self.dn = gmp.context(
            precision=precision, round=gmp.RoundDown,
            trap_overflow=True, trap_invalid=True, trap_divzero=True,
        )
        self.up = gmp.context(
            precision=precision, round=gmp.RoundUp,
            trap_overflow=True, trap_invalid=True, trap_divzero=True,
        )
        self.cache_key = ("interval", precision)
        z = gmp.mpfr(0, precision)
        o = gmp.mpfr(1, precision)
        self.zero = Interval(z, z)
        self.one = Interval(o, o)

    # -- constructors ------------------------------------------------

    def singleton(self, x) -> Interval:
        v = gmp.mpfr(x, self.precision)
        if not gmp.is_finite(v):
            raise NonFiniteValue(f"non-finite interval endpoint {x!r}")
        return Interval(v, v)

    def from_fraction(self, q) -> Interval:
        num = gmp.mpfr(q.numerator, self.precision + 8)
        den = gmp.mpfr(q.denominator, self.precision + 8)
        return Interval(self.dn.div(num, den), self.up.div(num, den))

    def from_int(self, i) -> Interval:
        return self.singleton(gmp.mpfr(i, self.precision))

    def from_endpoints(self, lo, hi) -> Interval:
        lo = gmp.mpfr(lo, self.precision)
        hi = gmp.mpfr(hi, self.precision)
        if not (gmp.is_finite(lo) and gmp.is_finite(hi)):
            raise NonFiniteValue("non-finite interval endpoint")
        if lo > hi:
            raise ValueError("interval endpoints out of order")
        return Interval(lo, hi)

    def convert(self, x):
        if isinstance(x, Interval):
            return x
        if isinstance(x, Fraction):
            return self.from_fraction(x)
        return self.singleton(x)

    # -- arithmetic --------------------------------------------------

    def add(self, a: Interval, b: Interval) -> Interval:
        return Interval(self.dn.add(a.lo, b.lo), self.up.add(a.hi, b.hi))

    def sub(self, a: Interval, b: Interval) -> Interval:
        return Interval(self.dn.sub(a.lo, b.hi), self.up.sub(a.hi, b.lo))

    def neg(self, a: Interval) -> Interval:
        return Interval(-a.hi, -a.lo)

    def mul(self, a: Interval, b: Interval) -> Interval:
        dn, up = self.dn, self.up
        los = (dn.mul(a.lo, b.lo), dn.mul(a.lo, b.hi),
               dn.mul(a.hi, b.lo), dn.mul(a.hi, b.hi))
        his = (up.mul(a.lo, b.lo), up.mul(a.lo, b.hi),
               up.mul(a.hi, b.lo), up.mul(a.hi, b.hi))
        return Interval(min(los), max(his))

    def div(self, a: Interval, b: Interval) -> Interval:
        if b.lo <= 0 <= b.hi:
            raise DivisionByIntervalContainingZero(
                f"divisor interval [{b.lo}, {b.hi}] contains zero"
            )
        dn, up = self.dn, self.up
        los = (dn.div(a.lo, b.lo), dn.div(a.lo, b.hi),
               dn.div(a.hi, b.lo), dn.div(a.hi, b.hi))
        his = (up.div(a.lo, b.lo), up.div(a.lo, b.hi),
               up.div(a.hi, b.lo), up.div(a.hi, b.hi))
        return Interval(min(los), max(his))

    def sqrt(self, a: Interval) -> Interval:
        if a.lo < 0:
            raise NegativeSqrt(f"sqrt of interval with lo = {a.lo}")
        return Interval(self.dn.sqrt(a.lo), self.up.sqrt(a.hi))

    def to_float(self, a: Interval) -> float:
        return float(a.mid())


def interval_ops(a: Interval, b: Optional[Interval], op: str,
                 ops: Optional[IntervalOps] = None) -> Interval:
    """Dispatch form of the interval arithmetic used by tests and callers
    that hold the operation as data.  sqrt ignores b."""
    ops = ops or IntervalOps()
    if op == "add":
        return ops.add(a, b)
    if op == "sub":
        return ops.sub(a, b)
    if op == "mul":
        return ops.mul(a, b)
    if op == "div":
        return ops.div(a, b)
    if op == "sqrt":
        return ops.sqrt(a)
    raise ValueError(f"unknown interval op {op!r}")


# ===================================================================
# Symmetric matrices
# ===================================================================


class SymMatrix:
    """Dense symmetric matrix; the lower triangle is stored once.

    Entries may be floats, mpfr scalars or Intervals; the matrix never mixes
    kinds.  Immutable after construction.
    """

    __slots__ = ("dim", "_tri")

    def __init__(self, dim: int, tri: tuple) -> None:
        if len(tri) != dim * (dim + 1) // 2:
            raise ValueError("packed length does not match dimension")
        self.dim = dim
        self._tri = tri

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence]) -> "SymMatrix":
        dim = len(rows)
        for i in range(dim):
            if len(rows[i]) != dim:
                raise ValueError("matrix is not square")
            for j in range(i):
                if not _entries_equal(rows[i][j], rows[j][i]):
                    raise ValueError(f"asymmetric entries at ({i},{j})")
        tri = tuple(rows[i][j] for i in range(dim) for j in range(i + 1))
        return cls(dim, tri)

    @classmethod
    def identity(cls, dim: int, ops) -> "SymMatrix":
        z, o = ops.zero, ops.one
        return cls(dim, tuple(
            o if i == j else z for i in range(dim) for j in range(i + 1)
        ))

    def get(self, i: int, j: int):
        if i < j:
            i, j = j, i
        return self._tri[i * (i + 1) // 2 + j]

    def rows(self) -> List[list]:
        return [[self.get(i, j) for j in range(self.dim)] for i in range(self.dim)]

    def map(self, fn) -> "SymMatrix":
        return SymMatrix(self.dim, tuple(fn(x) for x in self._tri))


def _entries_equal(a, b) -> bool:
    if isinstance(a, Interval) and isinstance(b, Interval):
        return a.lo == b.lo and a.hi == b.hi
    return a == b


def _as_rows(m) -> List[list]:
    if isinstance(m, SymMatrix):
        return m.rows()
    return [list(r) for r in m]


# ===================================================================
# Cholesky and triangular solves (point arithmetic)
# ===================================================================


def cholesky(m, ops) -> List[list]:
    """Lower-triangular L with L L^T = m.

    Raises NotPositiveDefinite on a nonpositive pivot.  Works for FloatOps
    and RealOps; use interval_cholesky for IntervalOps.
    """
    a = _as_rows(m)
    n = len(a)
    L = [[ops.zero for _ in range(n)] for _ in range(n)]
    for j in range(n):
        s = a[j][j]
        for t in range(j):
            s = ops.sub(s, ops.mul(L[j][t], L[j][t]))
        if not s > 0:
            raise NotPositiveDefinite(f"pivot {j} is {s}")
        piv = ops.sqrt(s)
        L[j][j] = piv
        for i in range(j + 1, n):
            s = a[i][j]
            for t in range(j):
                s = ops.sub(s, ops.mul(L[i][t], L[j][t]))
            L[i][j] = ops.div(s, piv)
    return L


def solve_lower(L, rhs, ops) -> list:
    """Forward substitution: solve L x = rhs for lower-triangular L."""
    n = len(L)
    x = [ops.zero] * n
    for i in range(n):
        s = ops.convert(rhs[i])
        for j in range(i):
            s = ops.sub(s, ops.mul(L[i][j], x[j]))
        x[i] = ops.div(s, L[i][i])
    return x


def solve_upper_from_lower(L, rhs, ops) -> list:
    """Back substitution with L^T: solve L^T x = rhs."""
    n = len(L)
    x = [ops.zero] * n
    for i in range(n - 1, -1, -1):
        s = ops.convert(rhs[i])
        for j in range(i + 1, n):
            s = ops.sub(s, ops.mul(L[j][i], x[j]))
        x[i] = ops.div(s, L[i][i])
    return x


def tri_inv_lower(L, ops) -> List[list]:
    """Inverse of a lower-triangular matrix, again lower-triangular."""
    n = len(L)
    inv = [[ops.zero for _ in range(n)] for _ in range(n)]
    for j in range(n):
        inv[j][j] = ops.div(ops.one, L[j][j])
        for i in range(j + 1, n):
            s = ops.zero
            for t in range(j, i):
                s = ops.add(s, ops.mul(L[i][t], inv[t][j]))
            inv[i][j] = ops.neg(ops.div(s, L[i][i]))
    return inv


# ===================================================================
# Interval Cholesky and PSD certification
# ===================================================================


def interval_cholesky(m, iops: IntervalOps) -> List[list]:
    """Interval Cholesky; every pivot's lower bound must be positive.

    Success proves every symmetric matrix inside the interval matrix is
    positive definite.
    """
    a = _as_rows(m)
    n = len(a)
    L = [[iops.zero for _ in range(n)] for _ in range(n)]
    for j in range(n):
        s = a[j][j]
        for t in range(j):
            s = iops.sub(s, iops.mul(L[j][t], L[j][t]))
        if not s.lo > 0:
            raise NotPositiveDefinite(f"pivot {j} lower bound {s.lo} <= 0")
        piv = iops.sqrt(s)
        L[j][j] = piv
        for i in range(j + 1, n):
            s = a[i][j]
            for t in range(j):
                s = iops.sub(s, iops.mul(L[i][t], L[j][t]))
            L[i][j] = iops.div(s, piv)
    return L


def interval_psd_certify(m, iops: Optional[IntervalOps] = None) -> Optional[Interval]:
    """Certified PSD margin, or None when inconclusive.

    On success returns a (point) interval delta >= 0 such that the interval
    Cholesky of m - delta*I completes with positive pivot lower bounds,
    proving lambda_min(M) >= delta for every symmetric M inside m.
    None is a failure to certify, not a disproof.
    """
    iops = iops or IntervalOps()
    a = _as_rows(m)
    n = len(a)
    for i in range(n):
        for j in range(i + 1):
            if not isinstance(a[i][j], Interval):
                raise TypeError("interval_psd_certify expects Interval entries")

    est = _float_min_eig([[a[i][j].mid() for j in range(n)] for i in range(n)])
    candidates = []
    if math.isfinite(est) and est > 0:
        for f in (0.99, 0.9, 0.5, 0.1):
            candidates.append(est * f)
    candidates.append(0.0)

    for delta in candidates:
        if delta < 0:
            continue
        d = iops.singleton(gmp.mpfr(delta, iops.precision))
        shifted = [
            [iops.sub(a[i][j], d) if i == j else a[i][j] for j in range(i + 1)]
            for i in range(n)
        ]
        rows = [[shifted[max(i, j)][min(i, j)] for j in range(n)] for i in range(n)]
        try:
            interval_cholesky(rows, iops)
        except NotPositiveDefinite:
            continue
        return iops.singleton(gmp.mpfr(delta, iops.precision))
    return None


def _float_min_eig(rows) -> float:
    n = len(rows)
    try:
        arr = np.array([[float(rows[i][j]) for j in range(n)] for i in range(n)],
                       dtype=float)
    except (OverflowError, ValueError):
        return float("nan")
    if not np.all(np.isfinite(arr)):
        return float("nan")
    try:
        w = np.linalg.eigvalsh(arr)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(str(exc)) from exc
    return float(w[0])


def min_eig_estimate(m, ops=None):
    """Minimum-eigenvalue estimate, accurate to about 1e-2 * (1 + |lambda|).

    The estimate is a double-precision eigenvalue of the (midpoint of the)
    matrix, returned as a scalar of `ops` (FloatOps by default).  Matrices in
    this package are small and well-scaled, so this sits far inside the
    contract tolerance.
    """
    rows = _as_rows(m)
    n = len(rows)
    flat = []
    for i in range(n):
        row = []
        for j in range(n):
            x = rows[i][j]
            row.append(x.mid() if isinstance(x, Interval) else x)
        flat.append(row)
    val = _float_min_eig(flat)
    if not math.isfinite(val):
        raise NonFiniteValue("matrix contains non-finite entries")
    if ops is None:
        return val
    return ops.convert(val)


# ===================================================================
# Jacobi eigendecomposition (used by the Nesterov-Todd scaling)
# ===================================================================


def jacobi_eigh(a_rows, ops, max_sweeps: int = 30):
    """Cyclic Jacobi eigendecomposition of a symmetric matrix.

    Returns (eigvals, V) with A = V diag(w) V^T, V orthogonal, in the scalar
    type of `ops`.  Convergence threshold is a fixed fraction of the working
    precision; matrices here are <= ~130x130 and well within Jacobi's comfort
    zone.
    """
    n = len(a_rows)
    A = [list(r) for r in a_rows]
    V = [[ops.one if i == j else ops.zero for j in range(n)] for i in range(n)]
    if n == 1:
        return [A[0][0]], V
    two = ops.from_int(2)
    # stop once all off-diagonal mass is below eps * scale
    eps = ops.from_fraction(Fraction(1, 2 ** max(24, ops.precision - 8)))
    scale = ops.zero
    for i in range(n):
        for j in range(n):
            scale = ops.add(scale, ops.mul(A[i][j], A[i][j]))
    scale = ops.sqrt(scale)
    if not scale > 0:
        return [A[i][i] for i in range(n)], V
    thresh = ops.mul(eps, scale)

    for _ in range(max_sweeps):
        off = ops.zero
        for p in range(n - 1):
            for q in range(p + 1, n):
                off = ops.add(off, ops.mul(A[p][q], A[p][q]))
        if not ops.sqrt(off) > thresh:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p][q]
                if not abs(apq) > ops.mul(thresh, eps):
                    continue
                # classical 2x2 rotation
                tau = ops.div(ops.sub(A[q][q], A[p][p]), ops.mul(two, apq))
                root = ops.sqrt(ops.add(ops.one, ops.mul(tau, tau)))
                if tau >= 0:
                    t = ops.div(ops.one, ops.add(tau, root))
                else:
                    t = ops.div(ops.neg(ops.one), ops.sub(root, tau))
                c = ops.div(ops.one, ops.sqrt(ops.add(ops.one, ops.mul(t, t))))
                s = ops.mul(t, c)
                for k in range(n):
                    akp, akq = A[k][p], A[k][q]
                    A[k][p] = ops.sub(ops.mul(c, akp), ops.mul(s, akq))
                    A[k][q] = ops.add(ops.mul(s, akp), ops.mul(c, akq))
                for k in range(n):
                    apk, aqk = A[p][k], A[q][k]
                    A[p][k] = ops.sub(ops.mul(c, apk), ops.mul(s, aqk))
                    A[q][k] = ops.add(ops.mul(s, apk), ops.mul(c, aqk))
                for k in range(n):
                    vkp, vkq = V[k][p], V[k][q]
                    V[k][p] = ops.sub(ops.mul(c, vkp), ops.mul(s, vkq))
                    V[k][q] = ops.add(ops.mul(s, vkp), ops.mul(c, vkq))
    else:
        raise ConvergenceFailure("Jacobi eigendecomposition did not converge")
    return [A[i][i] for i in range(n)], V


# ===================================================================
# Deterministic decimal formatting
# ===================================================================


def scientific_str(x, digits: int = 50) -> str:
    """Fixed-format scientific notation for mpfr/float values.

    gmpy2's __format__ mishandles precision specs in this build, so the
    string is assembled from mpfr.digits(), which is exact and deterministic.
    """
    v = x if isinstance(x, type(gmp.mpfr(0))) else gmp.mpfr(float(x), 53)
    if not gmp.is_finite(v):
        raise NonFiniteValue(f"cannot format non-finite value {x!r}")
    if v == 0:
        return "0." + "0" * (digits - 1) + "e+00"
    mant, exp, _ = v.digits(10, digits)
    sign = ""
    if mant.startswith("-"):
        sign, mant = "-", mant[1:]
    # value = 0.mant * 10^exp  ->  d.ddd e(exp-1)
    e = exp - 1
    return f"{sign}{mant[0]}.{mant[1:]}e{e:+03d}"
