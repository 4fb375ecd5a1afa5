"""Primal-dual interior-point solver for block-diagonal SDPs.

Every program in this package has the same shape: minimize ``<C, F>`` over a
positive semidefinite block-diagonal ``F`` subject to ``m`` inequalities
``<A_i, F> <= b_i``.  A slack vector turns the inequalities into equalities,
after which a Nesterov-Todd scaled Mehrotra predictor-corrector method runs
on the resulting standard-form cone program.  The reported bound for a
hierarchy instance is ``1 + <C, F>`` at the final (strictly feasible,
near-optimal) iterate.

The loop is dtype-generic.  With FloatOps it runs on float64 numpy arrays
and LAPACK factorizations.  With RealOps every scalar is an mpfr and numpy
is only the container: factorizations come from the loop-based routines in
``numerics`` and operator arithmetic happens under the ops' thread context.
Cheap heuristic decisions (step-length estimates, the centering exponent)
always use float64 snapshots; anything that must hold at working precision
(Cholesky feasibility of a trial point, residuals, the objective) stays in
the working dtype.
"""

from __future__ import annotations

import json
import math
import re
import shlex
import subprocess
import tempfile
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import scipy.linalg

from .numerics import (
    ConvergenceFailure,
    FloatOps,
    NotPositiveDefinite,
    NumericsError,
    RealOps,
    cholesky,
    jacobi_eigh,
    scientific_str,
    solve_lower,
    solve_upper_from_lower,
    tri_inv_lower,
)
from .sdpgen import export_sdpa

OPTIMAL = "Optimal"
NEAR_OPTIMAL = "NearOptimal"
MAX_ITER = "MaxIter"
INFEASIBLE = "Infeasible"
BREAKDOWN = "NumericalBreakdown"


class SolverError(RuntimeError):
    pass


class NumericalBreakdownError(SolverError):
    pass


class ConventionMismatch(SolverError):
    """An external solver's reported objective disagrees with its matrices."""


# ===================================================================
# dtype-generic dense helpers
# ===================================================================


def _np_matrix(rows, ops):
    if ops.kind == "float":
        return np.asarray(rows, dtype=np.float64)
    return np.array([[x for x in r] for r in rows], dtype=object)


def _identity(n, scale, ops):
    if ops.kind == "float":
        return np.eye(n) * scale
    m = np.full((n, n), ops.zero, dtype=object)
    for i in range(n):
        m[i, i] = scale
    return m


def _sym(m, ops):
    return (m + m.T) * ops.half


def _frob(a, b):
    return (a * b).sum()


def _chol(m, ops):
    if ops.kind == "float":
        try:
            return np.linalg.cholesky(m)
        except np.linalg.LinAlgError as exc:
            raise NotPositiveDefinite(str(exc)) from None
    return np.array(cholesky(m, ops), dtype=object)


def _tri_inv(L, ops):
    if ops.kind == "float":
        return scipy.linalg.solve_triangular(L, np.eye(len(L)), lower=True)
    return np.array(tri_inv_lower(L, ops), dtype=object)


def _eigh_psd(m, ops):
    """Eigendecomposition of a symmetric positive definite matrix."""
    if ops.kind == "float":
        w, v = np.linalg.eigh(m)
        return w, v
    w, v = jacobi_eigh(m, ops)
    return np.array(w, dtype=object), np.array(v, dtype=object)


def _vec_sqrt(v, ops):
    if ops.kind == "float":
        return np.sqrt(v)
    return np.array([ops.sqrt(x) for x in v], dtype=object)


def _floats(a):
    return np.asarray(a, dtype=np.float64) if a.dtype == object else a


def _schur_factor(M, ops):
    """Cholesky of the Schur complement, with escalating jitter on failure."""
    base = max(_floats(np.diag(M)).max(), 1.0)
    jitter = 0.0
    for attempt in range(4):
        try:
            trial = M if jitter == 0.0 else M + _identity(
                len(M), ops.convert(jitter), ops)
            return _chol(trial, ops)
        except NotPositiveDefinite:
            eps = 2.0 ** (-(ops.precision - 8))
            jitter = base * eps * 10.0 ** (3 * attempt + 3)
    raise NumericalBreakdownError("Schur complement lost definiteness")


def _schur_solve(L, rhs, ops):
    if ops.kind == "float":
        y = scipy.linalg.solve_triangular(L, rhs, lower=True)
        return scipy.linalg.solve_triangular(L.T, y, lower=False)
    y = solve_lower(L, list(rhs), ops)
    return np.array(solve_upper_from_lower(L, y, ops), dtype=object)


# ===================================================================
# step lengths
# ===================================================================


def _scaled_boundary(lam_f, d_f):
    """Largest a with diag(lam) + a*D >= 0, from float64 data."""
    scale = np.sqrt(np.outer(lam_f, lam_f))
    try:
        wmin = np.linalg.eigvalsh(d_f / scale).min()
    except np.linalg.LinAlgError:
        return 0.1
    if wmin >= -1e-300:
        return math.inf
    return -1.0 / wmin


def _vector_boundary(x_f, dx_f):
    neg = dx_f < 0
    if not neg.any():
        return math.inf
    return float((-x_f[neg] / dx_f[neg]).min())


def _verified_step(blocks, dirs, vec, dvec, alpha, ops, shrink=0.8, tries=60):
    """Largest verified step a <= alpha keeping all blocks PD, slack > 0."""
    for _ in range(tries):
        if alpha < 1e-14:
            return 0.0
        a = ops.convert(alpha)
        ok = True
        trial_vec = vec + a * dvec
        if not all(x > 0 for x in trial_vec):
            ok = False
        if ok:
            try:
                for X, dX in zip(blocks, dirs):
                    _chol(X + a * dX, ops)
            except NotPositiveDefinite:
                ok = False
        if ok:
            return alpha
        alpha *= shrink
    return 0.0


# ===================================================================
# the solver core
# ===================================================================


def _solve_standard(block_sizes, rows, objective, rhs, ops, *,
                    tol_gap=1e-9, tol_feas=1e-9, max_iter=200,
                    polish_iters=2, verbose=False):
    """Solve min <C,X> s.t. <A_i,X> + s_i = b_i, X block-PSD, s >= 0.

    `rows` is a list of dicts mapping block index -> dense symmetric
    coefficient matrix (only the touched blocks), `objective` the same for C.
    Returns a dict with the final iterate and convergence data; statuses are
    Optimal, NearOptimal, MaxIter, Infeasible, NumericalBreakdown.

    After the tolerances are met, `polish_iters` pure centering steps run
    with full step length.  They leave the objective at the converged value
    but collapse the equality residual to the linear-solve floor, so the
    returned iterate satisfies the inequality form of every constraint with
    a genuine margin -- which is what the certifier needs.
    """
    ops.half = ops.from_fraction(Fraction(1, 2))
    m = len(rows)
    nb = len(block_sizes)
    nu = sum(block_sizes) + m

    A = [{b: _np_matrix(mat, ops) for b, mat in row.items()} for row in rows]
    C = {b: _np_matrix(mat, ops) for b, mat in objective.items()}
    b_vec = np.array([ops.convert(x) for x in rhs], dtype=object if
                     ops.kind != "float" else np.float64)

    touching = [[] for _ in range(nb)]
    for i, row in enumerate(A):
        for blk in row:
            touching[blk].append(i)

    bnorm = float(np.linalg.norm(_floats(b_vec))) or 1.0
    cnorm = math.sqrt(sum(float(_frob(_floats(M), _floats(M)))
                          for M in C.values())) if C else 1.0
    anorm = max((math.sqrt(float(_frob(_floats(M), _floats(M))))
                 for row in A for M in row.values()), default=1.0)
    rho = max(10.0, bnorm, cnorm, anorm)

    with ops.activate():
        r = ops.convert(rho)
        X = [_identity(s, r, ops) for s in block_sizes]
        Z = [_identity(s, r, ops) for s in block_sizes]
        xs = np.array([r] * m, dtype=b_vec.dtype)
        zs = np.array([r] * m, dtype=b_vec.dtype)
        y = np.array([ops.zero] * m, dtype=b_vec.dtype)
        zero_blocks = [np.full((s, s), ops.zero, dtype=object)
                       if ops.kind != "float" else np.zeros((s, s))
                       for s in block_sizes]

        status = MAX_ITER
        pobj = dobj = ops.zero
        gap = pres = dres = mu_f = math.inf
        iters = 0
        polish_left = polish_iters
        best = None
        best_score = math.inf
        mu_floor = 2.0 ** (-(ops.precision - 12))

        for it in range(max_iter):
            iters = it
            # residuals at the current iterate
            pobj = sum((_frob(C[b], X[b]) for b in C), start=ops.zero)
            dobj = (b_vec * y).sum()
            ax = np.array([sum((_frob(M, X[b]) for b, M in A[i].items()),
                                start=ops.zero) + xs[i] for i in range(m)],
                          dtype=b_vec.dtype)
            rp = b_vec - ax
            Rd = []
            for b in range(nb):
                acc = (C.get(b, zero_blocks[b])) - Z[b]
                for i in touching[b]:
                    acc = acc - y[i] * A[i][b]
                Rd.append(_sym(acc, ops))
            rds = -zs - y
            mu = (sum((_frob(X[b], Z[b]) for b in range(nb)),
                      start=ops.zero) + (xs * zs).sum()) / ops.convert(nu)

            mu_f = float(mu)
            pobj_f, dobj_f = float(pobj), float(dobj)
            pres = float(np.linalg.norm(_floats(rp))) / (1.0 + bnorm)
            dres = math.sqrt(
                sum(float(_frob(_floats(M), _floats(M))) for M in Rd)
                + float(np.dot(_floats(rds), _floats(rds)))) / (1.0 + cnorm)
            gap = abs(pobj_f - dobj_f) / (1.0 + abs(pobj_f) + abs(dobj_f))
            if verbose:
                print(f"  it {it:3d}  mu {mu_f:9.2e}  gap {gap:9.2e}  "
                      f"pres {pres:9.2e}  dres {dres:9.2e}  obj {pobj_f:.10g}")

            score = max(pres / tol_feas, dres / tol_feas, gap / tol_gap)
            if score < best_score:
                best_score = score
                best = ([Xb.copy() for Xb in X], xs.copy(),
                        [Zb.copy() for Zb in Z], zs.copy(), y.copy(),
                        pobj, dobj, gap, pres, dres, mu_f)

            centering = False
            if pres < tol_feas and dres < tol_feas and gap < tol_gap:
                if polish_left == 0:
                    status = OPTIMAL
                    break
                polish_left -= 1
                centering = True
            ynorm = float(np.abs(_floats(y)).max()) if m else 0.0
            if ynorm > 1e12 * max(1.0, bnorm) and dobj_f > 1e10:
                status = INFEASIBLE
                break
            if not centering and mu_f < mu_floor * (1.0 + abs(pobj_f)):
                break  # at this precision's numerical floor; keep best

            try:
                # Nesterov-Todd scaling per block
                lam, G, Gi, Ahat, Rdhat = [], [], [], [dict() for _ in A], []
                for b in range(nb):
                    Lx = _chol(X[b], ops)
                    Lz = _chol(Z[b], ops)
                    N = Lz.T @ Lx
                    NtN = _sym(N.T @ N, ops)
                    w, V = _eigh_psd(NtN, ops)
                    if not all(x > 0 for x in w):
                        raise NumericalBreakdownError(
                            "scaling matrix has nonpositive spectrum")
                    lam_b = _vec_sqrt(w, ops)
                    inv_rt = np.array([ops.div(ops.one, ops.sqrt(s))
                                       for s in lam_b],
                                      dtype=b_vec.dtype)
                    rt = _vec_sqrt(lam_b, ops)
                    G_b = (Lx @ V) * inv_rt[None, :]
                    Gi_b = (V.T @ _tri_inv(Lx, ops)) * rt[:, None]
                    lam.append(lam_b)
                    G.append(G_b)
                    Gi.append(Gi_b)
                    for i in touching[b]:
                        Ahat[i][b] = _sym(G_b.T @ A[i][b] @ G_b, ops)
                    Rdhat.append(_sym(G_b.T @ Rd[b] @ G_b, ops))
                lam_s = _vec_sqrt(xs * zs, ops)
                g2 = xs / lam_s
                rdhat_s = g2 * rds

                # Schur complement, shared by predictor and corrector
                M = np.full((m, m), ops.zero, dtype=b_vec.dtype)
                for b in range(nb):
                    members = touching[b]
                    for ii, i in enumerate(members):
                        Pi = Ahat[i][b]
                        for j in members[:ii + 1]:
                            M[i, j] = M[i, j] + _frob(Pi, Ahat[j][b])
                for i in range(m):
                    for j in range(i):
                        M[j, i] = M[i, j]
                    M[i, i] = M[i, i] + g2[i] * g2[i]
                Lm = _schur_factor(M, ops)

                def direction(K, ks):
                    r1 = np.array(
                        [rp[i]
                         - sum((_frob(Ahat[i][b], K[b] - Rdhat[b])
                                for b in Ahat[i]), start=ops.zero)
                         - g2[i] * (ks[i] - rdhat_s[i])
                         for i in range(m)], dtype=b_vec.dtype)
                    dy = _schur_solve(Lm, r1, ops)
                    dzh = []
                    for b in range(nb):
                        acc = Rdhat[b]
                        for i in touching[b]:
                            acc = acc - dy[i] * Ahat[i][b]
                        dzh.append(acc)
                    dxh = [K[b] - dzh[b] for b in range(nb)]
                    dzs = rdhat_s - g2 * dy
                    dxs = ks - dzs
                    return dy, dxh, dzh, dxs, dzs

                lam_f = [_floats(lam[b]) for b in range(nb)]
                if centering:
                    # pure centering polish: sigma = 1, no second-order term
                    smu = mu
                    K = [np.diag(smu / lam[b] - lam[b]) for b in range(nb)]
                    ks = smu / lam_s - lam_s
                    dy, dxh, dzh, dxs, dzs = direction(K, ks)
                else:
                    # predictor: aim at mu = 0
                    K_aff = [np.diag(-lam[b]) for b in range(nb)]
                    ks_aff = -lam_s
                    _, dxh, dzh, dxs, dzs = direction(K_aff, ks_aff)

                    ap = min([_scaled_boundary(lam_f[b], _floats(dxh[b]))
                              for b in range(nb)]
                             + [_vector_boundary(_floats(lam_s),
                                                 _floats(dxs))])
                    ad = min([_scaled_boundary(lam_f[b], _floats(dzh[b]))
                              for b in range(nb)]
                             + [_vector_boundary(_floats(lam_s),
                                                 _floats(dzs))])
                    ap, ad = min(1.0, 0.99 * ap), min(1.0, 0.99 * ad)
                    mu_aff = sum(
                        float(np.sum(
                            (np.diag(lam_f[b]) + ap * _floats(dxh[b]))
                            * (np.diag(lam_f[b]) + ad * _floats(dzh[b]))))
                        for b in range(nb))
                    ls_f, dxs_f, dzs_f = (_floats(lam_s), _floats(dxs),
                                          _floats(dzs))
                    mu_aff += float(np.dot(ls_f + ap * dxs_f,
                                           ls_f + ad * dzs_f))
                    mu_aff = max(mu_aff / nu, 0.0)
                    sigma = min(1.0, max((mu_aff / mu_f) ** 3, 1e-10))

                    # corrector with Mehrotra second-order term
                    smu = ops.convert(sigma) * mu
                    K = []
                    for b in range(nb):
                        den = np.add.outer(lam[b], lam[b])
                        cross = _sym(dxh[b] @ dzh[b], ops)
                        K.append(np.diag(smu / lam[b] - lam[b])
                                 - (cross + cross) / den)
                    ks = smu / lam_s - lam_s - dxs * dzs / lam_s
                    dy, dxh, dzh, dxs, dzs = direction(K, ks)

                ap = min([_scaled_boundary(lam_f[b], _floats(dxh[b]))
                          for b in range(nb)]
                         + [_vector_boundary(_floats(lam_s), _floats(dxs))])
                ad = min([_scaled_boundary(lam_f[b], _floats(dzh[b]))
                          for b in range(nb)]
                         + [_vector_boundary(_floats(lam_s), _floats(dzs))])
                tau = 0.98 if mu_f > 1e-8 else 0.99
                ap0, ad0 = min(1.0, tau * ap), min(1.0, tau * ad)

                dX = [_sym(G[b] @ dxh[b] @ G[b].T, ops) for b in range(nb)]
                dZ = [_sym(Gi[b].T @ dzh[b] @ Gi[b], ops) for b in range(nb)]
                dxs_u = g2 * dxs
                dzs_u = dzs / g2

                a_p = _verified_step(X, dX, xs, dxs_u, ap0, ops)
                a_d = _verified_step(Z, dZ, zs, dzs_u, ad0, ops)
                if a_p == 0.0 and a_d == 0.0:
                    raise NumericalBreakdownError("no admissible step")
                cp, cd = ops.convert(a_p), ops.convert(a_d)
                X = [X[b] + cp * dX[b] for b in range(nb)]
                xs = xs + cp * dxs_u
                Z = [Z[b] + cd * dZ[b] for b in range(nb)]
                zs = zs + cd * dzs_u
                y = y + cd * dy
            except (NumericalBreakdownError, NotPositiveDefinite,
                    ConvergenceFailure, ZeroDivisionError) as exc:
                status = BREAKDOWN
                if verbose:
                    print(f"  breakdown at iteration {it}: {exc}")
                break
        else:
            iters = max_iter

        if status != OPTIMAL and best is not None:
            (X, xs, Z, zs, y, pobj, dobj, gap, pres, dres, mu_f) = best
        if status in (MAX_ITER, BREAKDOWN):
            if (pres < 100 * tol_feas and dres < 100 * tol_feas
                    and gap < 100 * tol_gap):
                status = NEAR_OPTIMAL

    return {
        "status": status,
        "X": X,
        "slack": xs,
        "y": y,
        "pobj": pobj,
        "dobj": dobj,
        "gap": gap,
        "pres": pres,
        "dres": dres,
        "mu": mu_f,
        "iterations": iters,
    }


# ===================================================================
# results
# ===================================================================


@dataclass
class Solution:
    """A solver iterate for a hierarchy instance, plus convergence data.

    `blocks` holds the PSD factor matrices in the instance's block order
    (row lists, scalars in the solver's arithmetic); `bound` is the headline
    quantity 1 + <C, F> and is a valid upper bound whenever the iterate is
    feasible, which the certifier checks independently.
    """

    status: str
    bound: object
    primal_objective: object
    dual_objective: object
    gap: float
    primal_residual: float
    dual_residual: float
    mu: float
    iterations: int
    precision: int
    block_labels: List[tuple]
    blocks: List[List[list]]
    slack: list
    y: list
    meta: dict = field(default_factory=dict)

    def to_json(self, digits: int = 60) -> str:
        def enc(x):
            return scientific_str(x, digits)

        payload = {
            "status": self.status,
            "bound": enc(self.bound),
            "primal_objective": enc(self.primal_objective),
            "dual_objective": enc(self.dual_objective),
            "gap": self.gap,
            "primal_residual": self.primal_residual,
            "dual_residual": self.dual_residual,
            "mu": self.mu,
            "iterations": self.iterations,
            "precision": self.precision,
            "block_labels": [list(t) for t in self.block_labels],
            "blocks": [[[enc(x) for x in row] for row in blk]
                       for blk in self.blocks],
            "slack": [enc(x) for x in self.slack],
            "y": [enc(x) for x in self.y],
            "meta": self.meta,
        }
        return json.dumps(payload, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "Solution":
        raw = json.loads(text)
        from decimal import Decimal

        def dec(s):
            return Fraction(Decimal(s))

        return cls(
            status=raw["status"],
            bound=dec(raw["bound"]),
            primal_objective=dec(raw["primal_objective"]),
            dual_objective=dec(raw["dual_objective"]),
            gap=raw["gap"],
            primal_residual=raw["primal_residual"],
            dual_residual=raw["dual_residual"],
            mu=raw["mu"],
            iterations=raw["iterations"],
            precision=raw["precision"],
            block_labels=[tuple(t) for t in raw["block_labels"]],
            blocks=[[[dec(x) for x in row] for row in blk]
                    for blk in raw["blocks"]],
            slack=[dec(x) for x in raw["slack"]],
            y=[dec(x) for x in raw["y"]],
            meta=raw.get("meta", {}),
        )


def solve_embedded(instance, *, ops=None, tol_gap=1e-9, tol_feas=1e-9,
                   max_iter=200, verbose=False) -> Solution:
    """Solve a hierarchy instance with the built-in interior-point method."""
    if ops is None:
        ops = RealOps(instance.precision)
    rows = instance.realize_constraints(ops)
    objective = instance.realize_objective(ops)
    rhs = instance.rhs_vector()
    res = _solve_standard(instance.block_sizes(), rows, objective, rhs, ops,
                          tol_gap=tol_gap, tol_feas=tol_feas,
                          max_iter=max_iter, verbose=verbose)
    with ops.activate():
        bound = ops.one + res["pobj"]
    labels = [(b.rep_size, b.rep_pos, b.l) for b in instance.blocks]
    return Solution(
        status=res["status"],
        bound=bound,
        primal_objective=res["pobj"],
        dual_objective=res["dobj"],
        gap=res["gap"],
        primal_residual=res["pres"],
        dual_residual=res["dres"],
        mu=res["mu"],
        iterations=res["iterations"],
        precision=ops.precision,
        block_labels=labels,
        blocks=[[list(r) for r in blk] for blk in res["X"]],
        slack=list(res["slack"]),
        y=list(res["y"]),
        meta=instance.describe(),
    )


# ===================================================================
# external solver bridge (SDPA family)
# ===================================================================

_PHASE_MAP = {
    "pdOPT": OPTIMAL,
    "pdFEAS": NEAR_OPTIMAL,
    "pFEAS": NEAR_OPTIMAL,
    "dFEAS": NEAR_OPTIMAL,
    "pdINF": INFEASIBLE,
    "pINF_dFEAS": INFEASIBLE,
    "pFEAS_dINF": INFEASIBLE,
}


def _parse_external_output(text: str, block_sizes: Sequence[int]):
    """Extract phase, objectives, and the dual matrix from solver output."""
    phase = None
    mt = re.search(r"phase\.value\s*=\s*(\S+)", text)
    if mt:
        phase = mt.group(1)
    vals = {}
    for key in ("objValPrimal", "objValDual"):
        mv = re.search(rf"{key}\s*=\s*([-+0-9.eEdD]+)", text)
        if not mv:
            raise SolverError(f"missing {key} in external solver output")
        vals[key] = float(mv.group(1).replace("D", "e").replace("d", "e"))
    my = re.search(r"yMat\s*=\s*\{", text)
    if not my:
        raise SolverError("missing yMat block in external solver output")
    depth, pos = 1, my.end()
    while depth and pos < len(text):
        if text[pos] == "{":
            depth += 1
        elif text[pos] == "}":
            depth -= 1
        pos += 1
    numbers = [float(x) for x in re.findall(
        r"[-+]?[0-9]*\.?[0-9]+(?:[eEdD][-+]?[0-9]+)?", text[my.end():pos])]
    blocks = []
    idx = 0
    for s in block_sizes:
        need = s * s
        if idx + need <= len(numbers):
            blk = np.array(numbers[idx:idx + need]).reshape(s, s)
            idx += need
        elif idx + s <= len(numbers):
            # diagonal blocks may be printed as a bare vector
            blk = np.diag(numbers[idx:idx + s])
            idx += s
        else:
            raise SolverError("yMat too short for declared block structure")
        blocks.append(blk)
    return phase, vals, blocks


def solve_external(instance, command: str, *, workdir=None,
                   digits: int = 50) -> Solution:
    """Run an SDPA-format solver binary on the exported instance.

    `command` is the executable (plus fixed arguments); the input and output
    paths are appended.  The exported file carries the whole problem, so the
    returned matrices are re-checked here: the objective recomputed from the
    parsed dual matrix must match the solver's reported value, otherwise the
    file/solver conventions disagree and a ConventionMismatch is raised.
    """
    tmp_ctx = (tempfile.TemporaryDirectory() if workdir is None else None)
    base = Path(tmp_ctx.name) if tmp_ctx else Path(workdir)
    try:
        prob = base / "problem.dat-s"
        out = base / "problem.out"
        with open(prob, "w") as fh:
            export_sdpa(instance, fh, digits=digits)
        cmd = shlex.split(command) + [str(prob), str(out)]
        run = subprocess.run(cmd, capture_output=True, text=True)
        if run.returncode != 0 or not out.exists():
            raise SolverError(
                f"external solver failed (rc={run.returncode}): "
                f"{run.stderr.strip()[:500]}")
        text = out.read_text()
    finally:
        if tmp_ctx:
            tmp_ctx.cleanup()

    sizes = instance.block_sizes()
    phase, vals, blocks = _parse_external_output(text, sizes)
    m = len(instance.constraints)

    # our objective sits on the exported file's dual side
    value = -vals["objValDual"]
    fops = FloatOps()
    obj = instance.realize_objective(fops)
    recomputed = sum(float((np.asarray(obj[b]) * blocks[b]).sum())
                     for b in obj)
    scale = 1.0 + abs(value) + abs(recomputed)
    if abs(recomputed - value) > 1e-4 * scale:
        raise ConventionMismatch(
            f"reported objective {value} vs recomputed {recomputed}")

    slack = list(np.diag(blocks[-1])) if len(blocks) == len(sizes) else []
    labels = [(b.rep_size, b.rep_pos, b.l) for b in instance.blocks]
    return Solution(
        status=_PHASE_MAP.get(phase, NEAR_OPTIMAL),
        bound=1.0 + value,
        primal_objective=value,
        dual_objective=-vals["objValPrimal"],
        gap=abs(vals["objValPrimal"] - vals["objValDual"]) / (
            1.0 + abs(vals["objValPrimal"]) + abs(vals["objValDual"])),
        primal_residual=math.nan,
        dual_residual=math.nan,
        mu=math.nan,
        iterations=-1,
        precision=53,
        block_labels=labels,
        blocks=[blk.tolist() for blk in blocks[:-1]],
        slack=slack,
        y=[],
        meta=instance.describe(),
    )
