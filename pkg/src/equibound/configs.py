"""Orbits of small spherical code configurations as canonical Gram patterns.

A configuration of s unit vectors with pairwise inner products drawn from a
finite rational set D is identified, up to orthogonal transformations, by its
Gram matrix; two configurations lie in the same orbit exactly when their Gram
matrices agree up to a simultaneous row/column permutation.  This module
enumerates one canonical representative per orbit for sizes 0..k, computes
pattern stabilizers, aligns arbitrary patterns to their representative, and
decides realizability (PSD with rank at most n) in exact rational arithmetic
so catalogs are deterministic and precision-independent.
"""

from __future__ import annotations

import hashlib
import itertools
import warnings
from fractions import Fraction
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple

MAX_CANONICAL_SIZE = 8


class SizeTooLarge(ValueError):
    """Pattern too large for exhaustive canonicalization."""


class NotInCatalog(KeyError):
    """Pattern has no representative in the catalog (unrealizable or unseen)."""


class InvalidParameters(ValueError):
    pass


class InnerProductSet:
    """Finite set of admissible off-diagonal inner products.

    Entries are distinct exact rationals in [-1, 1), kept sorted; positions
    in `entries` are the indices used by the catalog text format.
    """

    __slots__ = ("entries",)

    def __init__(self, values: Sequence) -> None:
        entries = sorted(Fraction(v) for v in values)
        if len(set(entries)) != len(entries):
            raise InvalidParameters("inner products must be distinct")
        for v in entries:
            if not (-1 <= v < 1):
                raise InvalidParameters(f"inner product {v} outside [-1, 1)")
        self.entries = tuple(entries)

    @classmethod
    def equiangular(cls, a) -> "InnerProductSet":
        a = Fraction(a)
        return cls((a, -a))

    def index(self, v: Fraction) -> int:
        return self.entries.index(v)

    def __len__(self) -> int:
        return len(self.entries)

    def __eq__(self, other) -> bool:
        return isinstance(other, InnerProductSet) and self.entries == other.entries

    def __hash__(self) -> int:
        return hash(self.entries)

    def __repr__(self) -> str:
        return f"InnerProductSet({list(self.entries)})"


class GramPattern:
    """Symmetric s x s rational matrix with unit diagonal.

    Stored as a tuple of tuples; immutable and hashable.  Off-diagonal
    entries are not checked against any particular D here — membership is
    the catalog's concern.
    """

    __slots__ = ("size", "entries")

    def __init__(self, entries: Sequence[Sequence]) -> None:
        s = len(entries)
        rows = tuple(tuple(Fraction(x) for x in row) for row in entries)
        for i, row in enumerate(rows):
            if len(row) != s:
                raise InvalidParameters("pattern is not square")
            if row[i] != 1:
                raise InvalidParameters(f"diagonal entry ({i},{i}) is not 1")
            for j in range(i):
                if rows[i][j] != rows[j][i]:
                    raise InvalidParameters(f"asymmetric entries at ({i},{j})")
        self.size = s
        self.entries = rows

    @classmethod
    def from_upper(cls, size: int, upper: Sequence) -> "GramPattern":
        """Build from row-major strict-upper-triangle values."""
        vals = list(upper)
        if len(vals) != size * (size - 1) // 2:
            raise InvalidParameters("wrong number of off-diagonal entries")
        rows = [[Fraction(1)] * size for _ in range(size)]
        it = iter(vals)
        for i in range(size):
            for j in range(i + 1, size):
                v = Fraction(next(it))
                rows[i][j] = rows[j][i] = v
        return cls(rows)

    def upper(self) -> Tuple[Fraction, ...]:
        return tuple(self.entries[i][j]
                     for i in range(self.size)
                     for j in range(i + 1, self.size))

    def permuted(self, perm: Sequence[int]) -> "GramPattern":
        return GramPattern([[self.entries[perm[i]][perm[j]]
                             for j in range(self.size)]
                            for i in range(self.size)])

    def __eq__(self, other) -> bool:
        return isinstance(other, GramPattern) and self.entries == other.entries

    def __hash__(self) -> int:
        return hash(self.entries)

    def __repr__(self) -> str:
        return f"GramPattern(size={self.size})"


EMPTY_PATTERN = GramPattern([])


@lru_cache(maxsize=None)
def _upper_perm_maps(s: int) -> Tuple[Tuple[int, ...], ...]:
    """For each permutation of range(s), the flat upper-triangle positions
    that realize simultaneous row/column relabeling."""
    pos = {}
    idx = 0
    for i in range(s):
        for j in range(i + 1, s):
            pos[(i, j)] = idx
            idx += 1
    maps = []
    for perm in itertools.permutations(range(s)):
        flat = []
        for i in range(s):
            for j in range(i + 1, s):
                a, b = perm[i], perm[j]
                flat.append(pos[(a, b) if a < b else (b, a)])
        maps.append(tuple(flat))
    return tuple(maps)


def canonical_form(p: GramPattern) -> bytes:
    """Label invariant under simultaneous row/column permutation.

    Computed by exhaustive minimization over all s! permutations, so equal
    labels hold exactly for permutation-equivalent patterns.
    """
    s = p.size
    if s > MAX_CANONICAL_SIZE:
        raise SizeTooLarge(f"pattern size {s} exceeds {MAX_CANONICAL_SIZE}")
    if s <= 1:
        return f"{s}|".encode()
    values = sorted(set(p.upper()))
    lookup = {v: i for i, v in enumerate(values)}
    flat = tuple(lookup[v] for v in p.upper())
    best = min(tuple(flat[m] for m in pmap) for pmap in _upper_perm_maps(s))
    alphabet = ",".join(f"{v.numerator}/{v.denominator}" for v in values)
    body = ",".join(map(str, best))
    return f"{s}|{alphabet}|{body}".encode()


def _psd_rank(p: GramPattern) -> Tuple[bool, int]:
    """Exact LDL^T with diagonal pivoting: (is PSD, rank)."""
    s = p.size
    a = [list(row) for row in p.entries]
    active = list(range(s))
    rank = 0
    while active:
        piv_pos = max(range(len(active)), key=lambda t: a[active[t]][active[t]])
        i = active[piv_pos]
        d = a[i][i]
        if d < 0:
            return False, rank
        if d == 0:
            # PSD with zero diagonal forces the whole remaining block to be 0
            for r in active:
                for c in active:
                    if a[r][c] != 0:
                        return False, rank
            return True, rank
        rank += 1
        active.pop(piv_pos)
        for r in active:
            f = a[r][i] / d
            if f == 0:
                continue
            for c in active:
                a[r][c] -= f * a[i][c]
            a[r][i] = Fraction(0)
    return True, rank


def is_realizable(p: GramPattern, n: int) -> bool:
    """True iff p is the Gram matrix of unit vectors in R^n: exact PSD
    check plus rank at most n."""
    ok, rank = _psd_rank(p)
    return ok and rank <= n


def stabilizer(p: GramPattern) -> List[Tuple[int, ...]]:
    """All permutations fixing the pattern: p[pi[i]][pi[j]] == p[i][j]."""
    s = p.size
    e = p.entries
    out = []
    for perm in itertools.permutations(range(s)):
        if all(e[perm[i]][perm[j]] == e[i][j]
               for i in range(s) for j in range(i + 1, s)):
            out.append(perm)
    return out


class OrbitRep:
    """One canonical orbit representative with its symmetry data."""

    __slots__ = ("pattern", "canonical_label", "stabilizer", "orbit_index",
                 "rank")

    def __init__(self, pattern: GramPattern, canonical_label: bytes,
                 stab: List[Tuple[int, ...]], orbit_index: int,
                 rank: int) -> None:
        self.pattern = pattern
        self.canonical_label = canonical_label
        self.stabilizer = stab
        self.orbit_index = orbit_index
        self.rank = rank

    @property
    def size(self) -> int:
        return self.pattern.size

    def __repr__(self) -> str:
        return (f"OrbitRep(size={self.size}, index={self.orbit_index}, "
                f"|stab|={len(self.stabilizer)}, rank={self.rank})")


class OrbitCatalog:
    """All orbit representatives of sizes 0..k for one (D, k, n)."""

    def __init__(self, D: InnerProductSet, k: int, n: int,
                 reps_by_size: List[List[OrbitRep]]) -> None:
        self.D = D
        self.k = k
        self.n = n
        self.reps_by_size = reps_by_size
        self._by_label: Dict[bytes, OrbitRep] = {}
        for reps in reps_by_size:
            for rep in reps:
                self._by_label[rep.canonical_label] = rep

    def counts(self) -> Tuple[int, ...]:
        return tuple(len(r) for r in self.reps_by_size)

    def lookup(self, label: bytes) -> Optional[OrbitRep]:
        return self._by_label.get(label)

    def frame_reps(self, max_size: int) -> List[OrbitRep]:
        """Full-rank representatives of sizes 1..max_size, usable as
        coordinate frames.  Rank-deficient patterns cannot anchor a frame;
        they are skipped with a warning (their blocks are pinned to zero,
        which only shrinks the feasible set of the minimization, so bounds
        stay valid)."""
        out = []
        for s in range(1, max_size + 1):
            for rep in self.reps_by_size[s]:
                if rep.rank == rep.size:
                    out.append(rep)
                else:
                    warnings.warn(
                        f"orbit rep size={rep.size} index={rep.orbit_index} "
                        f"has rank {rep.rank} < size; excluded from frames")
        return out

    # -- deterministic text format -----------------------------------

    def export_text(self) -> str:
        lines = [
            "# orbit catalog v1",
            "D=" + ",".join(f"{v.numerator}/{v.denominator}"
                            for v in self.D.entries),
            f"k={self.k}",
            f"n={self.n}",
        ]
        for s, reps in enumerate(self.reps_by_size):
            for rep in reps:
                idxs = ",".join(str(self.D.index(v)) for v in rep.pattern.upper())
                lines.append(f"{s}:{idxs}:{len(rep.stabilizer)}")
        return "\n".join(lines) + "\n"

    def content_hash(self) -> str:
        return hashlib.sha256(self.export_text().encode()).hexdigest()

    @classmethod
    def import_text(cls, text: str) -> "OrbitCatalog":
        D = k = n = None
        rows: List[Tuple[int, List[int], int]] = []
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("D="):
                D = InnerProductSet(line[2:].split(","))
            elif line.startswith("k="):
                k = int(line[2:])
            elif line.startswith("n="):
                n = int(line[2:])
            else:
                size_s, idxs_s, stab_s = line.split(":")
                idxs = [int(x) for x in idxs_s.split(",")] if idxs_s else []
                rows.append((int(size_s), idxs, int(stab_s)))
        if D is None or k is None or n is None:
            raise ValueError("catalog text is missing a header line")
        reps_by_size: List[List[OrbitRep]] = [[] for _ in range(k + 1)]
        for size, idxs, stab_size in rows:
            pattern = GramPattern.from_upper(
                size, [D.entries[i] for i in idxs])
            stab = stabilizer(pattern)
            if len(stab) != stab_size:
                raise ValueError(
                    f"stabilizer size mismatch for size-{size} pattern: "
                    f"file says {stab_size}, computed {len(stab)}")
            _, rank = _psd_rank(pattern)
            reps_by_size[size].append(
                OrbitRep(pattern, canonical_form(pattern), stab,
                         len(reps_by_size[size]), rank))
        return cls(D, k, n, reps_by_size)


def enumerate_orbits(D: InnerProductSet, k: int, n: int) -> OrbitCatalog:
    """One realizable representative per orbit, for sizes 0..k.

    Size s patterns are built by appending one row to each size s-1
    representative (principal submatrices of realizable patterns are
    realizable, so this reaches every orbit), then deduplicated by canonical
    label and filtered by the exact PSD/rank check.
    """
    if k < 2:
        raise InvalidParameters(f"k must be >= 2, got {k}")
    reps_by_size: List[List[OrbitRep]] = [
        [OrbitRep(EMPTY_PATTERN, canonical_form(EMPTY_PATTERN),
                  [()], 0, 0)]
    ]
    for s in range(1, k + 1):
        seen: Dict[bytes, GramPattern] = {}
        for prev in reps_by_size[s - 1]:
            base = prev.pattern.entries
            for tail in itertools.product(D.entries, repeat=s - 1):
                rows = [list(base[i]) + [tail[i]] for i in range(s - 1)]
                rows.append(list(tail) + [Fraction(1)])
                cand = GramPattern(rows)
                label = canonical_form(cand)
                if label in seen:
                    continue
                ok, rank = _psd_rank(cand)
                if ok and rank <= n:
                    seen[label] = cand
        reps = []
        for idx, (label, pattern) in enumerate(sorted(seen.items())):
            _, rank = _psd_rank(pattern)
            reps.append(OrbitRep(pattern, label, stabilizer(pattern), idx,
                                 rank))
        reps_by_size.append(reps)
    return OrbitCatalog(D, k, n, reps_by_size)


def align(q: GramPattern, catalog: OrbitCatalog) -> Tuple[int, Tuple[int, ...]]:
    """Locate q's representative R and a permutation pi with
    R.entries[i][j] == q.entries[pi[i]][pi[j]] for all i, j.

    Any valid pi may be returned; downstream averaging over the stabilizer
    makes results independent of the choice.
    """
    label = canonical_form(q)
    rep = catalog.lookup(label)
    if rep is None or rep.size != q.size:
        raise NotInCatalog(f"no catalog entry for pattern of size {q.size}")
    r = rep.pattern.entries
    e = q.entries
    s = q.size
    for perm in itertools.permutations(range(s)):
        if all(r[i][j] == e[perm[i]][perm[j]]
               for i in range(s) for j in range(i + 1, s)):
            return rep.orbit_index, perm
    raise NotInCatalog("canonical label matched but no alignment found")


def block_construction(r: int, t: int, s: int) -> GramPattern:
    """Gram pattern of the union of t simplex-like r-blocks and s singletons
    at inner products +-1/(2r-1): entries -a within a block, a across.

    Realizable in dimension (r-1)t + s + 1; with r = 3 this attains the
    known lower bounds for equiangular line counts at a = 1/5.
    """
    if r < 2 or t < 0 or s < 0 or r * t + s < 1:
        raise InvalidParameters(f"invalid block construction ({r}, {t}, {s})")
    a = Fraction(1, 2 * r - 1)
    size = r * t + s
    block = [i // r if i < r * t else None for i in range(size)]
    rows = []
    for i in range(size):
        row = []
        for j in range(size):
            if i == j:
                row.append(Fraction(1))
            elif block[i] is not None and block[i] == block[j]:
                row.append(-a)
            else:
                row.append(a)
        rows.append(row)
    return GramPattern(rows)
