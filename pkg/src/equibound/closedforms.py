"""Closed-form reference bounds for equiangular line counts.

Each function evaluates one published bound exactly over the rationals and
returns None outside its applicability window, so callers can tabulate
whichever references apply next to the semidefinite values.  These are
comparison columns only; nothing here feeds certification.
"""

from __future__ import annotations

from fractions import Fraction
from typing import List, Optional, Tuple


def _frac(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x)


def gerzon(n: int) -> Fraction:
    """Absolute bound n(n+1)/2, any angle."""
    return Fraction(n * (n + 1), 2)


def lint_seidel(n: int, a) -> Optional[Fraction]:
    """Relative bound n(1-a^2)/(1-na^2), valid for n < 1/a^2."""
    a = _frac(a)
    if n >= 1 / a ** 2:
        return None
    return n * (1 - a ** 2) / (1 - n * a ** 2)


def yu(a, n: Optional[int] = None) -> Optional[Fraction]:
    """Plateau bound (1/a^2-2)(1/a^2-1)/2 for a <= 1/3, n <= 3/a^2-16.

    With n omitted the plateau value itself is returned (the window is the
    caller's concern); with n given it is enforced.
    """
    a = _frac(a)
    if a > Fraction(1, 3):
        return None
    inv2 = 1 / a ** 2
    if n is not None and n > 3 * inv2 - 16:
        return None
    return (inv2 - 2) * (inv2 - 1) / 2


def okuda_yu(n: int, a) -> Optional[Fraction]:
    """Window bound 2 + (n-2)(1/a+1)^3 / ((3/a^2+6/a+2) - n) for
    3/a^2 - 16 <= n <= 3/a^2 + 6/a + 1."""
    a = _frac(a)
    inv = 1 / a
    lo = 3 * inv ** 2 - 16
    hi = 3 * inv ** 2 + 6 * inv + 1
    if not lo <= n <= hi:
        return None
    den = 3 * inv ** 2 + 6 * inv + 2 - n
    return 2 + (n - 2) * (inv + 1) ** 3 / den


def two_distance(n: int, a, b) -> Optional[Fraction]:
    """Polynomial-method bound (n+2)/(1 - (n-1)/(n(1-a)(1-b))) for a
    spherical {a, b}-code, valid whenever the right-hand side is positive."""
    a, b = _frac(a), _frac(b)
    den = 1 - Fraction(n - 1, 1) / (n * (1 - a) * (1 - b))
    if den <= 0:
        return None
    val = (n + 2) / den
    return val if val > 0 else None


def glazyrin_yu_linear(n: int, a) -> Optional[Fraction]:
    """Linear bound n((1/a-1)(1/a+2)^2/(3/a+5) + (1/a+1)(1/a-2)^2/(3/a-5)
    + 2) + 2, valid for a <= 1/3."""
    a = _frac(a)
    if a > Fraction(1, 3):
        return None
    inv = 1 / a
    slope = ((inv - 1) * (inv + 2) ** 2 / (3 * inv + 5)
             + (inv + 1) * (inv - 2) ** 2 / (3 * inv - 5) + 2)
    return n * slope + 2


def larman(n: int) -> int:
    """The angle-free branch of the Larman-Rogers-Seidel reduction: a set
    of more than 2n+3 equiangular lines forces 1/a to be an odd integer,
    so 2n+3 bounds M_a(n) whenever 1/a is not one."""
    return 2 * n + 3


def lin_yu(n: int, pillar_bound) -> Optional[Fraction]:
    """Pillar-decomposition bound 100 + 3*A(n-4, {1/13, -5/13}) for the
    angle 1/5, valid for n >= 63; `pillar_bound` is a proven bound on the
    two-distance pillar count (any valid one keeps the conclusion)."""
    if n < 63:
        return None
    return 100 + 3 * _frac(pillar_bound)


def reference_bounds(n: int, a, pillar_bound=None) -> List[Tuple[str, Fraction]]:
    """Every applicable closed form for M_a(n), as exact rationals.

    The Lin-Yu row appears only for a = 1/5 and when a pillar bound is
    supplied; the Larman row only when 1/a is not an odd integer (its
    hypothesis for bounding a fixed angle).
    """
    a = _frac(a)
    out: List[Tuple[str, Fraction]] = [("gerzon", gerzon(n))]
    pairs = [
        ("lint_seidel", lint_seidel(n, a)),
        ("yu", yu(a, n)),
        ("okuda_yu", okuda_yu(n, a)),
        ("two_distance", two_distance(n, a, -a)),
        ("glazyrin_yu_linear", glazyrin_yu_linear(n, a)),
    ]
    inv = 1 / a
    if not (inv.denominator == 1 and inv.numerator % 2 == 1 and inv > 0):
        pairs.append(("larman", Fraction(larman(n))))
    if a == Fraction(1, 5) and pillar_bound is not None:
        pairs.append(("lin_yu", lin_yu(n, pillar_bound)))
    out.extend((name, val) for name, val in pairs if val is not None)
    return out
