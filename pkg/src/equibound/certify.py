"""Interval-arithmetic certification of solved bound instances.

A solver iterate is only as trustworthy as the floating point it was
computed in.  This module re-derives everything the verdict depends on in
outward-rounded interval arithmetic and checks the candidate against it:

* every constraint coefficient is rebuilt from the exact catalog data by an
  enumeration written independently of the builder's (subset-first covering
  walk, one kernel evaluation per ordered pair, no scalar hoisting and no
  mirror folding),
* every solution block is converted to exact rationals and its positive
  semidefiniteness is certified by interval Cholesky,
* the bound is re-evaluated as an interval; on a Certified verdict its
  upper endpoint is a theorem about every code with the given parameters.

Builder and certifier share only the orbit catalog (exact rational data),
so a numerical defect in one cannot mask the same defect in the other.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, replace
from fractions import Fraction
from itertools import combinations
from typing import Dict, List, Optional, Sequence

import gmpy2 as gmp

from .configs import (GramPattern, InnerProductSet, OrbitCatalog, align,
                      canonical_form, enumerate_orbits, is_realizable)
from .frames import averaged_y, frame_of
from .numerics import (CERTIFY_PRECISION, Interval, IntervalOps, RealOps,
                       interval_psd_certify, scientific_str)

CERTIFIED = "Certified"
INCONCLUSIVE = "Inconclusive"


class DimensionMismatch(ValueError):
    """Solution layout does not match the instance parameters."""


class UnrealizableCode(ValueError):
    """Pattern is not the Gram matrix of a code for these parameters."""


def _exact(x) -> Fraction:
    """Exact rational value of a solver scalar (mpfr, float, int, Fraction)."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    return Fraction(*x.as_integer_ratio())


def _as_inner_products(D) -> InnerProductSet:
    if isinstance(D, InnerProductSet):
        return D
    return InnerProductSet([Fraction(v) for v in D])


def catalog_digest(catalog: OrbitCatalog) -> str:
    """Stable hash of the exact data the certificate is conditioned on."""
    h = hashlib.sha256()
    h.update(repr(catalog.D.entries).encode())
    h.update(f";k={catalog.k};n={catalog.n};".encode())
    for reps in catalog.reps_by_size:
        for rep in reps:
            h.update(rep.canonical_label)
            h.update(b"|")
    return h.hexdigest()


@dataclass
class Certificate:
    """Outcome of an interval verification run.

    `certified_bound` encloses 1 + B_kT({e1}) for the kernel assembled from
    the solution blocks; when the verdict is Certified, its upper endpoint
    is a rigorous upper bound for the code size and `floor_bound` is the
    integer actually quoted.  Margins and slacks are kept per block / per
    constraint so a failed run points at its culprit.
    """

    verdict: str
    certified_bound: Interval
    floor_bound: int
    per_block_psd_margin: List[Optional[Interval]]
    per_constraint_slack: List[Interval]
    precision: int
    catalog_hash: str
    block_labels: List[tuple]
    constraint_labels: List[str]
    notes: List[str]

    @property
    def certified(self) -> bool:
        return self.verdict == CERTIFIED

    def to_json(self, digits: int = 40) -> str:
        import json

        def iv(x: Optional[Interval]):
            if x is None:
                return None
            return {"lo": scientific_str(x.lo, digits),
                    "hi": scientific_str(x.hi, digits)}

        payload = {
            "verdict": self.verdict,
            "certified_bound": iv(self.certified_bound),
            "floor_bound": self.floor_bound,
            "precision": self.precision,
            "catalog_hash": self.catalog_hash,
            "block_labels": [list(t) for t in self.block_labels],
            "per_block_psd_margin": [iv(m) for m in self.per_block_psd_margin],
            "constraint_labels": self.constraint_labels,
            "per_constraint_slack": [iv(s) for s in self.per_constraint_slack],
            "notes": self.notes,
        }
        return json.dumps(payload, indent=1)


# -------------------------------------------------------------------
# independent coefficient derivation
# -------------------------------------------------------------------


def _covering_terms(pattern: GramPattern, k: int):
    """All (Q, x, y) with Q ⊆ S, |Q| ≤ k-2 and Q ∪ {x, y} = S, Q chosen
    first and pairs ordered.  The builder walks pairs first and folds
    mirrors; enumerating the other way keeps the two routes independent."""
    s = pattern.size
    pts = tuple(range(s))
    for qsize in range(min(k - 2, s) + 1):
        for q in combinations(pts, qsize):
            rest = [p for p in pts if p not in q]
            if len(rest) > 2:
                continue
            if len(rest) == 2:
                pairs = [(rest[0], rest[1]), (rest[1], rest[0])]
            elif len(rest) == 1:
                v = rest[0]
                pairs = [(v, v)]
                for p in q:
                    pairs.append((v, p))
                    pairs.append((p, v))
            else:
                pairs = [(x, y) for x in pts for y in pts]
            for x, y in pairs:
                yield q, x, y


class _IntervalRealizer:
    """Builds interval coefficient matrices for orbit rows, from scratch."""

    def __init__(self, catalog: OrbitCatalog, frame_reps, n: int, k: int,
                 d: int, iops: IntervalOps) -> None:
        self.catalog = catalog
        self.n = n
        self.k = k
        self.d = d
        self.iops = iops
        self.frames = [frame_of(rep, iops) for rep in frame_reps]
        self.frame_pos = {(rep.size, rep.orbit_index): pos
                          for pos, rep in enumerate(frame_reps)}
        self._kernel_cache: Dict[tuple, List[List[list]]] = {}

    def _kernels(self, pos: int, t: Fraction, gx: tuple, gy: tuple):
        key = (pos, t, gx, gy)
        mats = self._kernel_cache.get(key)
        if mats is None:
            frame = self.frames[pos]
            mats = [averaged_y(frame, self.n, l, self.d, t, gx, gy)
                    for l in range(self.d + 1)]
            self._kernel_cache[key] = mats
        return mats

    def row(self, pattern: GramPattern) -> Dict[int, List[list]]:
        """Coefficient matrices {block index: interval matrix} whose
        Frobenius products with the solution blocks sum to B_kT(S)."""
        iops = self.iops
        G = pattern.entries
        out: Dict[int, List[list]] = {}
        for q, x, y in _covering_terms(pattern, self.k):
            t = G[x][y]
            if not q:
                pos, gx, gy = 0, (), ()
            else:
                sub = GramPattern([[G[i][j] for j in q] for i in q])
                rep_idx, perm = align(sub, self.catalog)
                pos = self.frame_pos.get((len(q), rep_idx), -1)
                if pos < 0:
                    continue  # rank-deficient: block pinned to zero
                gx = tuple(G[x][q[perm[i]]] for i in range(len(q)))
                gy = tuple(G[y][q[perm[i]]] for i in range(len(q)))
            for l, mat in enumerate(self._kernels(pos, t, gx, gy)):
                idx = pos * (self.d + 1) + l
                tgt = out.get(idx)
                if tgt is None:
                    out[idx] = [list(r) for r in mat]
                else:
                    for i, row in enumerate(mat):
                        ti = tgt[i]
                        for j, v in enumerate(row):
                            ti[j] = iops.add(ti[j], v)
        return out


def _frobenius(coeff: List[list], block: List[list], iops: IntervalOps) -> Interval:
    acc = iops.zero
    for ci, bi in zip(coeff, block):
        for c, b in zip(ci, bi):
            acc = iops.add(acc, iops.mul(c, b))
    return acc


# -------------------------------------------------------------------
# verification
# -------------------------------------------------------------------


def verify(instance_params, solution, precision: int = CERTIFY_PRECISION,
           catalog: Optional[OrbitCatalog] = None) -> Certificate:
    """Certify a solved instance: rebuild all coefficients in interval
    arithmetic, check every block PSD and every constraint satisfied.

    `instance_params` is (D, n, k, d).  The solution's blocks must be
    exactly symmetric (run round_for_certification first); entries may be
    mpfr, float or Fraction and are converted to exact rationals here.
    """
    D, n, k, d = instance_params
    D = _as_inner_products(D)
    if catalog is None:
        catalog = enumerate_orbits(D, k, n)
    frame_reps = [catalog.reps_by_size[0][0]] + catalog.frame_reps(k - 2)
    labels = [(rep.size, pos, l)
              for pos, rep in enumerate(frame_reps)
              for l in range(d + 1)]
    got = [tuple(t) for t in solution.block_labels]
    if got != labels:
        raise DimensionMismatch(
            f"block labels do not match ({len(got)} blocks vs "
            f"{len(labels)} expected for k={k}, d={d})")
    sizes = [math.comb(d - l + m, m) for (m, _, l) in labels]
    exact_blocks: List[List[List[Fraction]]] = []
    for idx, blk in enumerate(solution.blocks):
        sz = sizes[idx]
        if len(blk) != sz or any(len(r) != sz for r in blk):
            raise DimensionMismatch(
                f"block {labels[idx]} has shape {len(blk)}, expected {sz}")
        fb = [[_exact(v) for v in r] for r in blk]
        for i in range(sz):
            for j in range(i):
                if fb[i][j] != fb[j][i]:
                    raise ValueError(
                        f"block {labels[idx]} is not exactly symmetric; "
                        f"run round_for_certification first")
        exact_blocks.append(fb)

    iops = IntervalOps(precision)
    realizer = _IntervalRealizer(catalog, frame_reps, n, k, d, iops)
    iv_blocks = [[[iops.from_fraction(v) for v in r] for r in fb]
                 for fb in exact_blocks]

    notes: List[str] = []
    margins: List[Optional[Interval]] = []
    for idx, ib in enumerate(iv_blocks):
        margin = interval_psd_certify(ib, iops)
        margins.append(margin)
        if margin is None:
            notes.append(f"block {labels[idx]}: PSD not certified")

    slacks: List[Interval] = []
    row_labels: List[str] = []
    feasible = True
    for size in range(2, k + 1):
        for rep in catalog.reps_by_size[size]:
            coeffs = realizer.row(rep.pattern)
            val = iops.zero
            for idx, coeff in coeffs.items():
                val = iops.add(val, _frobenius(coeff, iv_blocks[idx], iops))
            rhs = iops.from_fraction(Fraction(-2 if size == 2 else 0))
            slack = iops.sub(rhs, val)
            slacks.append(slack)
            label = f"size={size} orbit={rep.orbit_index}"
            row_labels.append(label)
            if not slack.lo >= 0:
                feasible = False
                notes.append(f"constraint {label}: slack lower bound "
                             f"{float(slack.lo):.3e} < 0")

    obj_coeffs = realizer.row(catalog.reps_by_size[1][0].pattern)
    obj = iops.zero
    for idx, coeff in obj_coeffs.items():
        obj = iops.add(obj, _frobenius(coeff, iv_blocks[idx], iops))
    bound = iops.add(iops.one, obj)

    ok = feasible and all(m is not None for m in margins)
    return Certificate(
        verdict=CERTIFIED if ok else INCONCLUSIVE,
        certified_bound=bound,
        floor_bound=int(gmp.floor(bound.hi)),
        per_block_psd_margin=margins,
        per_constraint_slack=slacks,
        precision=precision,
        catalog_hash=catalog_digest(catalog),
        block_labels=labels,
        constraint_labels=row_labels,
        notes=notes,
    )


# -------------------------------------------------------------------
# rounding
# -------------------------------------------------------------------


def round_for_certification(solution, psd_shift=None, instance=None):
    """Prepare a solver iterate for verification.

    Blocks are converted to exact rationals and symmetrized exactly; a
    nonnegative multiple of the identity (default 1e-10 times the largest
    diagonal entry) is added so strict feasibility survives interval
    widening, and the objective is recomputed from the adjusted blocks.
    """
    exact_blocks = [[[_exact(v) for v in r] for r in blk]
                    for blk in solution.blocks]
    half = Fraction(1, 2)
    sym = [[[(b[i][j] + b[j][i]) * half for j in range(len(b))]
            for i in range(len(b))] for b in exact_blocks]
    if psd_shift is None:
        top = max((abs(b[i][i]) for b in sym for i in range(len(b))),
                  default=Fraction(0))
        shift = Fraction(top) / Fraction(10) ** 10
    else:
        shift = _exact(psd_shift)
        if shift < 0:
            raise ValueError(f"psd_shift must be >= 0, got {psd_shift}")
    if shift:
        for b in sym:
            for i in range(len(b)):
                b[i][i] += shift

    if instance is None:
        instance = _instance_from_meta(solution.meta)
    ops = RealOps(solution.precision)
    with ops.activate():
        obj_row = instance.realize_objective(ops)
        obj = ops.zero
        for idx, coeff in obj_row.items():
            blk = sym[idx]
            for ci, bi in zip(coeff, blk):
                for c, b in zip(ci, bi):
                    obj = ops.add(obj, ops.mul(c, ops.from_fraction(b)))
        bound = ops.add(ops.one, obj)
    meta = dict(solution.meta)
    meta["psd_shift"] = str(shift)
    return replace(solution, blocks=sym, bound=bound,
                   primal_objective=obj, meta=meta)


def _instance_from_meta(meta: dict):
    from .sdpgen import build_delta_k

    try:
        D = InnerProductSet([Fraction(v) for v in meta["D"]])
        return build_delta_k(D, meta["n"], meta["k"], meta["d"],
                             precision=meta.get("precision", 256))
    except KeyError as exc:
        raise ValueError(
            f"solution metadata lacks instance parameters ({exc}); "
            f"pass instance= explicitly") from exc


# -------------------------------------------------------------------
# proof replay on concrete configurations
# -------------------------------------------------------------------


def check_against_code(solution, code: GramPattern, *, instance=None,
                       certificate: Optional[Certificate] = None,
                       tol: float = 1e-9, subset_budget: int = 20000) -> dict:
    """Replay the counting argument behind the bound on a concrete code.

    Confirms the code is realizable for the instance's dimension, that its
    size does not exceed the (certified, when available) bound, and — when
    the number of subsets of size <= k is within `subset_budget` — that the
    aggregated covering sum over all nonempty subsets is >= -tol, each
    subset evaluated against the solution blocks.  Subsets are grouped by
    canonical form so repeated configurations are realized once.
    """
    if instance is None:
        instance = _instance_from_meta(solution.meta)
    n, k = instance.n, instance.k
    admissible = set(instance.D.entries)
    s = code.size
    for i in range(s):
        if code.entries[i][i] != 1:
            raise UnrealizableCode(f"diagonal entry at {i} is not 1")
        for j in range(i):
            if code.entries[i][j] not in admissible:
                raise UnrealizableCode(
                    f"inner product {code.entries[i][j]} at ({i},{j}) "
                    f"is not in D")
    if not is_realizable(code, n):
        raise UnrealizableCode(
            f"pattern of size {s} is not realizable on the sphere in "
            f"dimension {n}")

    if certificate is not None:
        bound = float(certificate.certified_bound.hi)
    else:
        bound = float(solution.bound)
    report = {
        "size": s,
        "bound": bound,
        "size_ok": s <= bound,
        "subset_sum": None,
        "subset_sum_ok": None,
        "subsets": 0,
        "classes": 0,
        "skipped": False,
    }

    total_subsets = sum(math.comb(s, r) for r in range(1, k + 1))
    if total_subsets > subset_budget:
        report["skipped"] = True
        report["ok"] = report["size_ok"]
        return report

    from .numerics import FloatOps

    fops = FloatOps()
    fblocks = [[[float(v) for v in r] for r in blk]
               for blk in solution.blocks]
    G = code.entries
    classes: Dict[bytes, list] = {}
    for r in range(1, k + 1):
        for sub in combinations(range(s), r):
            p = GramPattern([[G[i][j] for j in sub] for i in sub])
            key = canonical_form(p)
            entry = classes.get(key)
            if entry is None:
                classes[key] = [p, 1]
            else:
                entry[1] += 1
    total = 0.0
    for p, count in classes.values():
        row = instance.assemble(p)
        coeffs = instance.realize_row(row, fops)
        val = 0.0
        for idx, coeff in coeffs.items():
            blk = fblocks[idx]
            val += sum(c * b for ci, bi in zip(coeff, blk)
                       for c, b in zip(ci, bi))
        total += count * val
    report["subsets"] = total_subsets
    report["classes"] = len(classes)
    report["subset_sum"] = total
    report["subset_sum_ok"] = total >= -tol * (1.0 + abs(total))
    report["ok"] = bool(report["size_ok"] and report["subset_sum_ok"])
    return report
