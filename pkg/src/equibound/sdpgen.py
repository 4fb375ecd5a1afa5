"""Assembly of the k-point bound semidefinite program and SDPA export.

For an orbit S of size s, the constraint row accumulates, over every ordered
pair (x, y) of points of S and every Q with S minus {x,y} contained in Q
contained in S and |Q| <= k-2, the stabilizer-averaged kernel matrix of the
aligned representative of Q evaluated at (t, g_x, g_y) = (x.y, inner products
against Q).  The right-hand side is -2 exactly when s = 2, the sense is <=,
and the objective is 1 plus the same accumulation over the single-point set
(which touches each empty-set block with coefficient 1 and the one-point
block at degree 0 with the all-ones matrix).

Rows store exact rational evaluation data — (t, g_x, g_y) triples with
integer multiplicities — rather than numbers; materializing a row at a given
precision is a separate step, so one build serves float probing, fixed
precision solving, and interval certification, and large instances never
hold all their dense coefficients at once.

The scalar polynomial factor of each kernel depends only on the rationals
w = t - g_x^T Gram^{-1} g_y and q = (1 - g_x^T Gram^{-1} g_x)(1 - g_y^T
Gram^{-1} g_y), both computed exactly, so it is evaluated once per row term;
only the averaged outer products of monomial vectors carry rounding.  Since
the monomial basis of degree <= d-l is a prefix of the degree <= d basis,
one averaged outer product per term serves all l via leading submatrices.
"""

from __future__ import annotations

import io
import json
import math
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

from .configs import (
    GramPattern,
    InnerProductSet,
    NotInCatalog,
    OrbitCatalog,
    OrbitRep,
    align,
    canonical_form,
    enumerate_orbits,
)
from .frames import Frame, coords, frame_of
from .numerics import (
    DEFAULT_PRECISION,
    ExactOps,
    RealOps,
    scientific_str,
)
from .polybasis import gegenbauer_wq, monomial_basis, monomial_vector

_EXACT = ExactOps()

DEFAULT_DEGREE = 5


class BlockSpec:
    """One PSD block F_{R,l}: which representative, which degree, what size."""

    __slots__ = ("rep_pos", "rep_size", "l", "size")

    def __init__(self, rep_pos: int, rep_size: int, l: int, d: int) -> None:
        self.rep_pos = rep_pos
        self.rep_size = rep_size
        self.l = l
        self.size = math.comb(d - l + rep_size, rep_size)

    def __repr__(self) -> str:
        return (f"BlockSpec(rep_pos={self.rep_pos}, m={self.rep_size}, "
                f"l={self.l}, size={self.size})")


class ConstraintRow:
    """One inequality row, stored as exact evaluation data.

    kernels maps frame position -> {(t, g_x, g_y): multiplicity} with g_x
    lexicographically <= g_y (the enumeration is symmetric in the pair, and
    the transposed matrix of a term equals the term with arguments swapped,
    so folding the mirror into a multiplicity keeps rows exactly symmetric).
    """

    __slots__ = ("size", "orbit_index", "label", "kernels", "rhs")

    def __init__(self, size: int, orbit_index: int, label: bytes,
                 kernels: Dict[int, Dict[tuple, int]], rhs: Fraction) -> None:
        self.size = size
        self.orbit_index = orbit_index
        self.label = label
        self.kernels = kernels
        self.rhs = rhs

    def __repr__(self) -> str:
        terms = sum(len(v) for v in self.kernels.values())
        return (f"ConstraintRow(size={self.size}, orbit={self.orbit_index}, "
                f"terms={terms}, rhs={self.rhs})")


def _gram_inverse(pattern: GramPattern) -> List[List[Fraction]]:
    """Exact inverse of a full-rank pattern (Gauss-Jordan over rationals)."""
    m = pattern.size
    a = [list(row) + [Fraction(1) if i == j else Fraction(0)
                      for j in range(m)]
         for i, row in enumerate(pattern.entries)]
    for col in range(m):
        piv = next(r for r in range(col, m) if a[r][col] != 0)
        a[col], a[piv] = a[piv], a[col]
        inv = 1 / a[col][col]
        a[col] = [x * inv for x in a[col]]
        for r in range(m):
            if r != col and a[r][col] != 0:
                f = a[r][col]
                a[r] = [x - f * y for x, y in zip(a[r], a[col])]
    return [row[m:] for row in a]


_GRAM_INV_CACHE: Dict[bytes, List[List[Fraction]]] = {}


def _gram_inverse_cached(rep: OrbitRep) -> List[List[Fraction]]:
    inv = _GRAM_INV_CACHE.get(rep.canonical_label)
    if inv is None:
        inv = _gram_inverse(rep.pattern)
        _GRAM_INV_CACHE[rep.canonical_label] = inv
    return inv


def _bilinear(ginv, a: Sequence[Fraction], b: Sequence[Fraction]) -> Fraction:
    return sum(a[i] * sum(ginv[i][j] * b[j] for j in range(len(b)))
               for i in range(len(a)))


def _scalar_factors(rep: OrbitRep, n: int, d: int,
                    key: tuple) -> List[Fraction]:
    """Exact polynomial factors for l = 0..d at one (t, g_x, g_y)."""
    t, gx, gy = key
    m = rep.size
    if m == 0:
        return [gegenbauer_wq(n, l, t, Fraction(1), _EXACT)
                for l in range(d + 1)]
    ginv = _gram_inverse_cached(rep)
    su = 1 - _bilinear(ginv, gx, gx)
    sv = 1 - _bilinear(ginv, gy, gy)
    w = t - _bilinear(ginv, gx, gy)
    q = su * sv
    if q < 0 or (q == 0 and w != 0):
        # PSD of the enclosing pattern forces w^2 <= q
        raise ValueError(f"inconsistent evaluation data: w={w}, q={q}")
    return [gegenbauer_wq(n - m, l, w, q, _EXACT) for l in range(d + 1)]


class SDPInstance:
    """Immutable description of one bound computation.

    Blocks follow the frame list (empty set first, then full-rank
    representatives by size and orbit index), each with degrees 0..d.
    Constraint rows are ordered by (orbit size, orbit index).  The
    objective is `1 + <objective row>`.
    """

    def __init__(self, D: InnerProductSet, n: int, k: int, d: int,
                 precision: int, catalog: OrbitCatalog,
                 frame_reps: List[OrbitRep],
                 constraints: List[ConstraintRow],
                 objective: ConstraintRow) -> None:
        self.D = D
        self.n = n
        self.k = k
        self.d = d
        self.precision = precision
        self.catalog = catalog
        self.frame_reps = frame_reps
        self.frame_positions = {(rep.size, rep.orbit_index): pos
                                for pos, rep in enumerate(frame_reps)}
        self.constraints = constraints
        self.objective = objective
        self.blocks: List[BlockSpec] = [
            BlockSpec(pos, rep.size, l, d)
            for pos, rep in enumerate(frame_reps)
            for l in range(d + 1)
        ]
        self._block_pos = {(b.rep_pos, b.l): i for i, b in enumerate(self.blocks)}
        self._frames: Dict[tuple, List[Frame]] = {}

    # -- bookkeeping --------------------------------------------------

    def block_index(self, rep_pos: int, l: int) -> int:
        return self._block_pos[(rep_pos, l)]

    def rhs_vector(self) -> List[Fraction]:
        return [row.rhs for row in self.constraints]

    def _frames_for(self, ops) -> List[Frame]:
        frames = self._frames.get(ops.cache_key)
        if frames is None:
            frames = [frame_of(rep, ops) for rep in self.frame_reps]
            self._frames[ops.cache_key] = frames
        return frames

    # -- materialization ---------------------------------------------

    def realize_row(self, row: ConstraintRow, ops) -> Dict[int, List[list]]:
        """Dense coefficient matrices {block index: matrix} for one row."""
        frames = self._frames_for(ops)
        out: Dict[int, List[list]] = {}
        for pos in sorted(row.kernels):
            frame = frames[pos]
            rep = frame.rep
            m = rep.size
            basis_full = monomial_basis(m, self.d)
            stab = rep.stabilizer
            accum: Dict[int, List[list]] = {}
            for key in sorted(row.kernels[pos]):
                weight = row.kernels[pos][key]
                scalars = _scalar_factors(rep, self.n, self.d, key)
                zfull = self._averaged_outer(frame, basis_full, key, ops)
                mirrored = key[1] != key[2]
                for l in range(self.d + 1):
                    if scalars[l] == 0:
                        continue
                    # a mirrored key holds both orientations in its weight,
                    # and Z + Z^T below realizes both at once
                    denom = len(stab) * (2 if mirrored else 1)
                    c = ops.from_fraction(Fraction(weight, denom) * scalars[l])
                    sz = math.comb(self.d - l + m, m)
                    tgt = accum.get(l)
                    if tgt is None:
                        full = math.comb(self.d + m, m)
                        tgt = accum[l] = [[ops.zero] * full
                                          for _ in range(full)]
                    for i in range(sz):
                        zi = zfull[i]
                        ti = tgt[i]
                        for j in range(sz):
                            term = ops.mul(c, zi[j])
                            if mirrored:
                                term = ops.add(term, ops.mul(c, zfull[j][i]))
                            ti[j] = ops.add(ti[j], term)
            for l, mat in accum.items():
                sz = math.comb(self.d - l + m, m)
                out[self.block_index(pos, l)] = [r[:sz] for r in mat[:sz]]
        return out

    def _averaged_outer(self, frame: Frame, basis, key: tuple,
                        ops) -> List[list]:
        """Sum over the stabilizer of z(u_sigma) z(v_sigma)^T, full degree."""
        t, gx, gy = key
        m = frame.size
        sz = basis.size
        if m == 0:
            return [[ops.one]]
        acc = [[ops.zero] * sz for _ in range(sz)]
        for sigma in frame.rep.stabilizer:
            u = coords(frame, [gx[sigma[i]] for i in range(m)])
            v = coords(frame, [gy[sigma[i]] for i in range(m)])
            zu = monomial_vector(basis, u, ops)
            zv = monomial_vector(basis, v, ops)
            for i in range(sz):
                zi = zu[i]
                row = acc[i]
                for j in range(sz):
                    row[j] = ops.add(row[j], ops.mul(zi, zv[j]))
        return acc

    def realize_constraints(self, ops) -> List[Dict[int, List[list]]]:
        return [self.realize_row(row, ops) for row in self.constraints]

    def assemble(self, pattern: GramPattern) -> ConstraintRow:
        """Evaluation data for an arbitrary configuration against this
        instance's catalog and block layout (used by verification replays)."""
        return assemble_constraint(pattern, self.catalog, self.k, self.d,
                                   -1, self.frame_positions)

    def realize_objective(self, ops) -> Dict[int, List[list]]:
        return self.realize_row(self.objective, ops)

    def block_sizes(self) -> List[int]:
        return [b.size for b in self.blocks]

    def describe(self) -> dict:
        return {
            "D": [str(v) for v in self.D.entries],
            "n": self.n,
            "k": self.k,
            "d": self.d,
            "precision": self.precision,
            "num_constraints": len(self.constraints),
            "num_blocks": len(self.blocks),
            "block_sizes": self.block_sizes(),
            "constraint_orbits": [
                {"size": r.size, "orbit_index": r.orbit_index,
                 "label": r.label.decode()}
                for r in self.constraints
            ],
        }


def _subsets(items: Sequence[int]):
    n = len(items)
    for mask in range(1 << n):
        yield [items[i] for i in range(n) if mask >> i & 1]


def assemble_constraint(pattern: GramPattern, catalog: OrbitCatalog, k: int,
                        d: int, orbit_index: int,
                        frame_pos: Dict[Tuple[int, int], int],
                        ) -> ConstraintRow:
    """Evaluation data of the covering sum for one point configuration.

    Enumerates every ordered pair (x, y) with repeats and every Q between
    S minus {x, y} and S of size at most k-2, aligning each Q to its catalog
    representative.  Kernels landing on a representative outside the frame
    list (rank-deficient) are dropped: pinning those blocks to zero only
    shrinks the feasible set, so bounds remain valid.
    """
    s = pattern.size
    G = pattern.entries
    kernels: Dict[int, Dict[tuple, int]] = {}
    for x in range(s):
        for y in range(s):
            base = [p for p in range(s) if p != x and p != y]
            if len(base) > k - 2:
                continue
            extras = [x] if x == y else [x, y]
            seen_q = set()
            for add in _subsets(extras):
                q_idx = tuple(sorted(base + add))
                if q_idx in seen_q or len(q_idx) > k - 2:
                    continue
                seen_q.add(q_idx)
                t = G[x][y]
                if not q_idx:
                    pos, key = 0, (t, (), ())
                else:
                    sub = GramPattern([[G[i][j] for j in q_idx]
                                       for i in q_idx])
                    rep_idx, perm = align(sub, catalog)
                    pos = frame_pos.get((len(q_idx), rep_idx), -1)
                    if pos < 0:
                        continue
                    gx = tuple(G[x][q_idx[perm[i]]] for i in range(len(q_idx)))
                    gy = tuple(G[y][q_idx[perm[i]]] for i in range(len(q_idx)))
                    if gy < gx:
                        gx, gy = gy, gx
                    key = (t, gx, gy)
                bucket = kernels.setdefault(pos, {})
                bucket[key] = bucket.get(key, 0) + 1
    rhs = Fraction(-2 if s == 2 else 0)
    return ConstraintRow(s, orbit_index, canonical_form(pattern), kernels, rhs)


def build_delta_k(D: InnerProductSet, n: int, k: int,
                  d: int = DEFAULT_DEGREE,
                  precision: int = DEFAULT_PRECISION,
                  catalog: Optional[OrbitCatalog] = None) -> SDPInstance:
    """The k-point bound program for spherical codes with inner products
    in D on the (n-1)-sphere: blocks for every full-rank representative of
    size <= k-2 and degree <= d, one row per orbit of size 2..k."""
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if d < 0:
        raise ValueError(f"d must be >= 0, got {d}")
    if catalog is None:
        catalog = enumerate_orbits(D, k, n)
    frame_reps = [catalog.reps_by_size[0][0]] + catalog.frame_reps(k - 2)
    frame_pos = {(rep.size, rep.orbit_index): pos
                 for pos, rep in enumerate(frame_reps)}
    constraints = []
    for size in range(2, k + 1):
        for rep in catalog.reps_by_size[size]:
            constraints.append(
                assemble_constraint(rep.pattern, catalog, k, d,
                                    rep.orbit_index, frame_pos))
    objective = assemble_constraint(
        catalog.reps_by_size[1][0].pattern, catalog, k, d, 0, frame_pos)
    return SDPInstance(D, n, k, d, precision, catalog, frame_reps,
                       constraints, objective)


# -------------------------------------------------------------------
# k = 3 cross-check
# -------------------------------------------------------------------


def _symmetrized_y(n: int, d: int, abc, ops) -> List[List[list]]:
    """(1/6) sum over all argument permutations of the one-point kernel
    matrices, for l = 0..d: the classical three-point building block."""
    from itertools import permutations

    from .polybasis import y_matrix

    out = []
    sixth = ops.div(ops.one, ops.from_int(6))
    for l in range(d + 1):
        sz = d - l + 1
        acc = [[ops.zero] * sz for _ in range(sz)]
        for pa, pb, pc in permutations(abc):
            ym = y_matrix(n, 1, l, d,
                          ops.from_fraction(pa),
                          (ops.from_fraction(pb),),
                          (ops.from_fraction(pc),), ops)
            for i in range(sz):
                for j in range(sz):
                    acc[i][j] = ops.add(acc[i][j], ym[i][j])
        out.append([[ops.mul(sixth, acc[i][j]) for j in range(sz)]
                    for i in range(sz)])
    return out


def reduce_k3_check(instance: SDPInstance, ops=None) -> bool:
    """True iff every k=3 coefficient matches the classical three-point
    expansion, rebuilt independently from symmetrized one-point kernels:
    size-2 rows must equal 2 P_l(t) on empty-set blocks and 6 S_l(t, t, 1)
    on one-point blocks; size-3 rows 6 S_l(t_xy, t_xz, t_yz)."""
    if instance.k != 3:
        raise ValueError("reduce_k3_check requires a k=3 instance")
    ops = ops or RealOps(instance.precision)
    tol = Fraction(1, 2 ** (ops.precision - 20))
    d = instance.d
    six = ops.from_int(6)
    two = ops.from_int(2)

    def close(a, b) -> bool:
        return abs(ops.to_float(ops.sub(a, b))) <= tol

    for row in instance.constraints:
        got = instance.realize_row(row, ops)
        G = None
        for rep in instance.catalog.reps_by_size[row.size]:
            if rep.orbit_index == row.orbit_index:
                G = rep.pattern.entries
        assert G is not None
        if row.size == 2:
            t = G[0][1]
            sy = _symmetrized_y(instance.n, d, (t, t, Fraction(1)), ops)
            for l in range(d + 1):
                empty_blk = got.get(instance.block_index(0, l))
                want = ops.mul(two, gegenbauer_wq(instance.n, l,
                                                  ops.from_fraction(t),
                                                  ops.one, ops))
                if empty_blk is None or not close(empty_blk[0][0], want):
                    return False
                e1_blk = got.get(instance.block_index(1, l))
                for i in range(d - l + 1):
                    for j in range(d - l + 1):
                        want = ops.mul(six, sy[l][i][j])
                        have = (e1_blk[i][j] if e1_blk is not None
                                else ops.zero)
                        if not close(have, want):
                            return False
        else:
            # |S| = 3: empty-set blocks must be absent; one-point blocks
            # carry 6 S_l of the three pairwise inner products
            for l in range(d + 1):
                if instance.block_index(0, l) in got:
                    return False
            sy = _symmetrized_y(
                instance.n, d, (G[0][1], G[0][2], G[1][2]), ops)
            for l in range(d + 1):
                e1_blk = got.get(instance.block_index(1, l))
                for i in range(d - l + 1):
                    for j in range(d - l + 1):
                        want = ops.mul(six, sy[l][i][j])
                        have = (e1_blk[i][j] if e1_blk is not None
                                else ops.zero)
                        if not close(have, want):
                            return False
    return True


# -------------------------------------------------------------------
# SDPA sparse export
# -------------------------------------------------------------------


def export_sdpa(instance: SDPInstance, target, digits: int = 50,
                ops=None, sidecar=None) -> None:
    """Write the instance in SDPA sparse format (.dat-s).

    The program is placed on SDPA's dual side: the PSD variable is the
    block-diagonal collection of F-blocks plus one diagonal slack block of
    size mDIM; constraint matrices carry the row coefficients plus a unit
    slack entry; the objective matrix is the negated cost.  The reported
    dual optimum therefore maps back via bound = 1 + (-optimum).

    If `sidecar` is a writable sink, a JSON metadata document (inputs, row
    orbit labels, block labels, digit count) is written to it.
    """
    ops = ops or RealOps(instance.precision)
    mdim = len(instance.constraints)
    nblock = len(instance.blocks) + 1

    def fmt(x) -> str:
        return scientific_str(x, digits)

    w = target.write
    w('"k-point bound instance in SDPA sparse format\n')
    w('"objective constant: +1; bound = 1 + (-objValDual)\n')
    w(f'"D={",".join(str(v) for v in instance.D.entries)} '
      f'n={instance.n} k={instance.k} d={instance.d}\n')
    w(f"{mdim}\n")
    w(f"{nblock}\n")
    w(" ".join(str(b.size) for b in instance.blocks) + f" -{mdim}\n")
    w(" ".join(fmt(ops.from_fraction(row.rhs))
               for row in instance.constraints) + "\n")

    def emit(matno: int, realized: Dict[int, List[list]], negate: bool):
        for blk in sorted(realized):
            mat = realized[blk]
            for i in range(len(mat)):
                for j in range(i, len(mat)):
                    val = mat[i][j]
                    if val == 0:
                        continue
                    if negate:
                        val = ops.neg(val)
                    w(f"{matno} {blk + 1} {i + 1} {j + 1} {fmt(val)}\n")

    # matrix 0 is the constant term F_0 = -C (SDPA maximizes <F_0, Y>)
    emit(0, instance.realize_objective(ops), negate=True)
    for idx, row in enumerate(instance.constraints):
        emit(idx + 1, instance.realize_row(row, ops), negate=False)
        w(f"{idx + 1} {nblock} {idx + 1} {idx + 1} {fmt(ops.one)}\n")

    if sidecar is not None:
        meta = instance.describe()
        meta["digits"] = digits
        meta["block_labels"] = [
            {"rep_pos": b.rep_pos, "rep_size": b.rep_size, "l": b.l,
             "size": b.size}
            for b in instance.blocks
        ]
        meta["slack_block"] = {"index": nblock, "size": mdim}
        json.dump(meta, sidecar, indent=1, sort_keys=True)


class ParsedSDPA:
    """In-memory form of an SDPA sparse file.

    Entry values, right-hand-side tokens, and comment lines are kept
    verbatim (entries in file order), so a parsed file can be re-emitted
    byte-identically by regenerate_sdpa.
    """

    __slots__ = ("mdim", "block_sizes", "rhs", "entries", "comments",
                 "rhs_literals")

    def __init__(self, mdim: int, block_sizes: List[int], rhs: List[float],
                 entries: Dict[int, Dict[Tuple[int, int, int], str]],
                 comments: Optional[List[str]] = None,
                 rhs_literals: Optional[List[str]] = None) -> None:
        self.mdim = mdim
        self.block_sizes = block_sizes
        self.rhs = rhs
        self.entries = entries
        self.comments = comments or []
        self.rhs_literals = rhs_literals or [repr(v) for v in rhs]


def parse_sdpa(source) -> ParsedSDPA:
    """Parse SDPA sparse format; entry values are kept as the literal
    decimal strings so round-trips can compare exactly."""
    if isinstance(source, str):
        source = io.StringIO(source)
    lines = [ln.strip() for ln in source]
    comments = [ln for ln in lines if ln.startswith(('"', "*"))]
    body = [ln for ln in lines if ln and not ln.startswith(('"', "*"))]
    mdim = int(body[0].split()[0])
    nblock = int(body[1].split()[0])
    sizes = [int(tok) for tok in body[2].replace(",", " ").split()]
    if len(sizes) != nblock:
        raise ValueError(f"expected {nblock} block sizes, found {len(sizes)}")
    rhs_literals = body[3].replace(",", " ").split()
    rhs = [float(tok) for tok in rhs_literals]
    if len(rhs) != mdim:
        raise ValueError(f"expected {mdim} rhs values, found {len(rhs)}")
    entries: Dict[int, Dict[Tuple[int, int, int], str]] = {}
    for ln in body[4:]:
        toks = ln.split()
        if len(toks) != 5:
            raise ValueError(f"malformed entry line: {ln!r}")
        matno, blkno, i, j = (int(t) for t in toks[:4])
        entries.setdefault(matno, {})[(blkno, i, j)] = toks[4]
    return ParsedSDPA(mdim, sizes, rhs, entries, comments, rhs_literals)


def regenerate_sdpa(parsed: ParsedSDPA) -> str:
    """Re-emit a parsed file in the writer's layout, entries in parse
    order and all numeric tokens verbatim."""
    out = [ln + "\n" for ln in parsed.comments]
    out.append(f"{parsed.mdim}\n")
    out.append(f"{len(parsed.block_sizes)}\n")
    out.append(" ".join(str(s) for s in parsed.block_sizes) + "\n")
    out.append(" ".join(parsed.rhs_literals) + "\n")
    for matno, block in parsed.entries.items():
        for (blkno, i, j), val in block.items():
            out.append(f"{matno} {blkno} {i} {j} {val}\n")
    return "".join(out)
