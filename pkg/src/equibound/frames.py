"""Coordinate frames over orbit representatives and stabilizer-averaged
kernel matrices.

A full-rank representative R of size m has Gram factor B with B B^T =
Gram(R).  For any unit vector x, the vector u = B^{-1} g — where g holds the
inner products of x against the points of R — is the coordinate vector of
x's projection onto span(R) in an orthonormal basis.  Everything downstream
consumes only inner products; explicit points in R^n never appear, so the
work is independent of the ambient dimension.

The averaged matrices sum the rank-one kernel matrices over the stabilizer
of R, which makes the result independent of how a subset was aligned to its
representative.
"""

from __future__ import annotations

from typing import List, Sequence

from .configs import OrbitRep
from .numerics import (
    DEFAULT_PRECISION,
    NotPositiveDefinite,
    RealOps,
    cholesky,
    interval_cholesky,
    solve_lower,
)
from .polybasis import (
    gegenbauer,
    gegenbauer_multivariate,
    monomial_basis,
    monomial_vector,
)


class Frame:
    """Cholesky coordinate map for one full-rank representative."""

    __slots__ = ("rep", "ops", "chol", "size")

    def __init__(self, rep: OrbitRep, ops, chol: List[list]) -> None:
        self.rep = rep
        self.ops = ops
        self.chol = chol
        self.size = rep.size

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"Frame(size={self.size}, ops={self.ops.cache_key})"


def frame_of(rep: OrbitRep, ops_or_precision=DEFAULT_PRECISION) -> Frame:
    """Frame for a full-rank representative.

    Accepts either an arithmetic backend or a bit precision (which selects
    fixed-precision real arithmetic).  Rank-deficient representatives have
    singular Gram matrices and are rejected.
    """
    ops = (RealOps(ops_or_precision) if isinstance(ops_or_precision, int)
           else ops_or_precision)
    m = rep.size
    if m == 0:
        return Frame(rep, ops, [])
    gram = [[ops.from_fraction(rep.pattern.entries[i][j]) for j in range(m)]
            for i in range(m)]
    try:
        if ops.kind == "interval":
            chol = interval_cholesky(gram, ops)
        else:
            chol = cholesky(gram, ops)
    except NotPositiveDefinite as exc:
        raise NotPositiveDefinite(
            f"representative of size {m} has rank {rep.rank}; "
            f"no frame exists") from exc
    return Frame(rep, ops, chol)


def coords(f: Frame, g: Sequence) -> list:
    """Projection coordinates u = B^{-1} g of a point with inner products g
    against the frame's representative."""
    if len(g) != f.size:
        raise ValueError(f"expected {f.size} inner products, got {len(g)}")
    if f.size == 0:
        return []
    ops = f.ops
    return solve_lower(f.chol, [ops.convert(x) for x in g], ops)


def _permute(g: Sequence, sigma: Sequence[int]) -> list:
    return [g[sigma[i]] for i in range(len(sigma))]


def averaged_y(f: Frame, n: int, l: int, d: int, t, g_x: Sequence,
               g_y: Sequence) -> List[list]:
    """Stabilizer average of the kernel matrices:

        (1/|S_R|) sum over sigma of  Y_l(t, coords(sigma.g_x), coords(sigma.g_y)).

    The scalar multivariate factor is invariant under the stabilizer (the
    norms and inner product of the projection coordinates depend only on
    g^T Gram^{-1} g, which stabilizer permutations preserve), so it is
    computed once and only the outer products are averaged.
    """
    ops = f.ops
    m = f.size
    if m == 0:
        return [[gegenbauer(n, l, ops.convert(t), ops)]]
    stab = f.rep.stabilizer
    basis = monomial_basis(m, d - l)
    sz = basis.size
    acc = [[ops.zero for _ in range(sz)] for _ in range(sz)]
    u0 = v0 = None
    for sigma in stab:
        u = coords(f, _permute(g_x, sigma))
        v = coords(f, _permute(g_y, sigma))
        if u0 is None:
            u0, v0 = u, v
        zu = monomial_vector(basis, u, ops)
        zv = monomial_vector(basis, v, ops)
        for i in range(sz):
            zi = zu[i]
            row = acc[i]
            for j in range(sz):
                row[j] = ops.add(row[j], ops.mul(zi, zv[j]))
    p = gegenbauer_multivariate(n, m, l, ops.convert(t), u0, v0, ops)
    scale = ops.div(p, ops.from_int(len(stab)))
    return [[ops.mul(scale, acc[i][j]) for j in range(sz)] for i in range(sz)]
