"""Finite-graph oracles: exact independence numbers and the k-point
relaxation evaluated directly on explicit small graphs.

The sphere pipeline works with orbit catalogs instead of vertices, so its
combinatorial core is hard to eyeball.  On a finite graph the same program
can be written down literally — one moment matrix per independent set Q of
size at most k-2, one inequality per independent set of size at most k —
and solved with the same embedded solver, giving an end-to-end semantic
check against brute force.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

from .numerics import FloatOps
from .solver import _solve_standard

MAX_EXACT_VERTICES = 40
MAX_SDP_VERTICES = 30


class TooLarge(ValueError):
    """Vertex count beyond what the exact routines are sized for."""


@dataclass(frozen=True)
class FiniteGraph:
    """Undirected simple graph on vertices 0..vertex_count-1."""

    vertex_count: int
    edges: frozenset

    def __post_init__(self):
        for u, v in self.edges:
            if u == v:
                raise ValueError(f"self-loop at {u}")
            if not (0 <= u < self.vertex_count and 0 <= v < self.vertex_count):
                raise ValueError(f"edge ({u},{v}) out of range")

    @classmethod
    def from_edges(cls, vertex_count: int, edges) -> "FiniteGraph":
        norm = frozenset((min(u, v), max(u, v)) for u, v in edges)
        return cls(vertex_count, norm)

    def adjacency(self) -> List[List[bool]]:
        a = [[False] * self.vertex_count for _ in range(self.vertex_count)]
        for u, v in self.edges:
            a[u][v] = a[v][u] = True
        return a

    def adjacency_masks(self) -> List[int]:
        m = [0] * self.vertex_count
        for u, v in self.edges:
            m[u] |= 1 << v
            m[v] |= 1 << u
        return m

    def relabeled(self, perm: Sequence[int]) -> "FiniteGraph":
        """Image under the vertex map i -> perm[i]."""
        return FiniteGraph.from_edges(
            self.vertex_count, ((perm[u], perm[v]) for u, v in self.edges))


def cycle_graph(m: int) -> FiniteGraph:
    return FiniteGraph.from_edges(m, ((i, (i + 1) % m) for i in range(m)))


def complete_graph(m: int) -> FiniteGraph:
    return FiniteGraph.from_edges(m, combinations(range(m), 2))


def petersen_graph() -> FiniteGraph:
    outer = [(i, (i + 1) % 5) for i in range(5)]
    spokes = [(i, i + 5) for i in range(5)]
    inner = [(5 + i, 5 + (i + 2) % 5) for i in range(5)]
    return FiniteGraph.from_edges(10, outer + spokes + inner)


def parse_graph(text: str) -> FiniteGraph:
    """Edge-list format: first data line is the vertex count, each further
    line one edge "u v"; '#' starts a comment."""
    count = None
    edges = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if count is None:
            if len(parts) != 1:
                raise ValueError(f"line {lineno}: expected vertex count")
            count = int(parts[0])
            continue
        if len(parts) != 2:
            raise ValueError(f"line {lineno}: expected 'u v'")
        edges.append((int(parts[0]), int(parts[1])))
    if count is None:
        raise ValueError("empty graph file")
    return FiniteGraph.from_edges(count, edges)


# -------------------------------------------------------------------
# exact independence number
# -------------------------------------------------------------------


def independence_number(g: FiniteGraph) -> int:
    """Exact alpha(G) by branch and bound on bitmasks.

    Branches on a highest-degree available vertex (include first, so good
    incumbents arrive early); prunes when even taking every remaining
    vertex cannot beat the incumbent.
    """
    if g.vertex_count > MAX_EXACT_VERTICES:
        raise TooLarge(
            f"{g.vertex_count} vertices; exact search capped at "
            f"{MAX_EXACT_VERTICES}")
    adj = g.adjacency_masks()
    best = 0

    def grow(avail: int, size: int) -> None:
        nonlocal best
        if size + avail.bit_count() <= best:
            return
        if not avail:
            best = max(best, size)
            return
        v = max(_bits(avail), key=lambda w: (adj[w] & avail).bit_count())
        grow(avail & ~adj[v] & ~(1 << v), size + 1)
        grow(avail & ~(1 << v), size)

    grow((1 << g.vertex_count) - 1, 0)
    return best


def _bits(mask: int) -> Iterator[int]:
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


def independent_sets(g: FiniteGraph, max_size: int) -> List[Tuple[int, ...]]:
    """All independent sets of size 0..max_size, sorted by (size, tuple)."""
    adj = g.adjacency_masks()
    out: List[Tuple[int, ...]] = [()]
    layer: List[Tuple[Tuple[int, ...], int]] = [((), 0)]
    for _ in range(max_size):
        nxt = []
        for vs, blocked in layer:
            start = vs[-1] + 1 if vs else 0
            for v in range(start, g.vertex_count):
                if blocked >> v & 1:
                    continue
                nxt.append((vs + (v,), blocked | adj[v] | 1 << v))
        layer = nxt
        out.extend(vs for vs, _ in layer)
    return sorted(out, key=lambda s: (len(s), s))


# -------------------------------------------------------------------
# k-point bound on a finite graph
# -------------------------------------------------------------------


def delta_k_finite(g: FiniteGraph, k: int, *, ops=None, tol: float = 1e-10,
                   max_iter: int = 200):
    """Optimal value of the k-point relaxation for an explicit graph.

    Solves the dual of the moment form: one PSD block T_Q per independent
    Q with |Q| <= k-2 (restricted to vertices extending Q independently),
    a scalar lambda, and for every nonempty independent S with |S| <= k the
    inequality sum over covers of T(x,y,Q) <= lambda*[|S|=1] - 2*[|S|=2];
    the value is 1 + min lambda.  Strong duality makes this the moment
    optimum; by construction it is >= alpha(G) up to solver tolerance.
    """
    if g.vertex_count > MAX_SDP_VERTICES:
        raise TooLarge(
            f"{g.vertex_count} vertices; relaxation capped at "
            f"{MAX_SDP_VERTICES}")
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    ops = ops or FloatOps()
    adj = g.adjacency_masks()

    qs = independent_sets(g, k - 2)
    support: List[List[int]] = []
    pos_in_support: List[Dict[int, int]] = []
    for q in qs:
        qmask = 0
        for v in q:
            qmask |= adj[v]
        sup = [v for v in range(g.vertex_count)
               if not (qmask >> v & 1) or v in q]
        support.append(sup)
        pos_in_support.append({v: i for i, v in enumerate(sup)})
    q_index = {q: i for i, q in enumerate(qs)}

    block_sizes = [len(sup) for sup in support] + [1]
    lam_block = len(qs)

    subsets = [s for s in independent_sets(g, k) if s]
    rows = []
    rhs = []
    with ops.activate():
        one = ops.one
        for s in subsets:
            counts: Dict[int, Dict[Tuple[int, int], int]] = {}
            sset = set(s)
            for r in range(min(k - 2, len(s)) + 1):
                for q in combinations(s, r):
                    rest = sset.difference(q)
                    if len(rest) > 2:
                        continue
                    qi = q_index[q]
                    if len(rest) == 2:
                        x, y = sorted(rest)
                        pairs = [(x, y), (y, x)]
                    elif len(rest) == 1:
                        (v,) = rest
                        pairs = [(v, v)]
                        for p in q:
                            pairs.extend([(v, p), (p, v)])
                    else:
                        pairs = [(x, y) for x in s for y in s]
                    tgt = counts.setdefault(qi, {})
                    for x, y in pairs:
                        px = pos_in_support[qi][x]
                        py = pos_in_support[qi][y]
                        tgt[(px, py)] = tgt.get((px, py), 0) + 1
            row: Dict[int, List[list]] = {}
            for qi, entries in counts.items():
                sz = len(support[qi])
                mat = [[ops.zero] * sz for _ in range(sz)]
                for (i, j), c in entries.items():
                    mat[i][j] = ops.from_int(c)
                row[qi] = mat
            if len(s) == 1:
                row[lam_block] = [[ops.neg(one)]]
            rows.append(row)
            rhs.append(Fraction(-2 if len(s) == 2 else 0))
        objective = {lam_block: [[one]]}
        res = _solve_standard(block_sizes, rows, objective, rhs, ops,
                              tol_gap=tol, tol_feas=tol, max_iter=max_iter)
        value = ops.add(one, res["pobj"])
    return value


def theta_prime_reference(g: FiniteGraph):
    """Independent 2-point oracle: the nonnegative (Schrijver) variant of
    the Lovasz theta number, in its trace-normalized primal form
    max <J, X> s.t. tr X = 1, X_uv = 0 on edges, X >= 0, X PSD — the shape
    the k=2 relaxation collapses to on a finite graph.  Needs cvxpy."""
    import cvxpy as cp
    import numpy as np

    m = g.vertex_count
    X = cp.Variable((m, m), symmetric=True)
    cons = [X >> 0, cp.trace(X) == 1, X >= 0]
    for u, v in g.edges:
        cons.append(X[u, v] == 0)
    prob = cp.Problem(cp.Maximize(cp.sum(X)), cons)
    try:
        prob.solve(solver=cp.CVXOPT)
    except (cp.error.SolverError, ImportError):
        prob.solve(solver=cp.SCS, eps=1e-9, max_iters=200000)
    if X.value is None:
        raise RuntimeError(f"theta reference solve failed: {prob.status}")
    return float(np.sum(X.value))
