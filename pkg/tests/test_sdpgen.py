import io
import itertools
import json
import math
from fractions import Fraction

import gmpy2 as gmp
import numpy as np
import pytest

from equibound.configs import GramPattern, InnerProductSet, enumerate_orbits
from equibound.frames import averaged_y, frame_of
from equibound.numerics import FloatOps, RealOps
from equibound.polybasis import gegenbauer, monomial_basis
from equibound.sdpgen import (
    BlockSpec,
    assemble_constraint,
    build_delta_k,
    export_sdpa,
    parse_sdpa,
    reduce_k3_check,
)

A5 = Fraction(1, 5)
A3 = Fraction(1, 3)
D5 = InnerProductSet.equiangular(A5)
D3 = InnerProductSet.equiangular(A3)
R256 = RealOps(256)
F = FloatOps()


@pytest.fixture(scope="module")
def inst4():
    return build_delta_k(D5, 65, 4, 5)


@pytest.fixture(scope="module")
def inst3():
    return build_delta_k(D5, 60, 3, 5)


# -------------------------------------------------------------------
# structure
# -------------------------------------------------------------------


def test_k4_ledger(inst4):
    assert len(inst4.constraints) == 17
    assert len(inst4.blocks) == 24
    by_rep = {}
    for b in inst4.blocks:
        by_rep.setdefault(b.rep_pos, []).append(b.size)
    assert by_rep[0] == [1, 1, 1, 1, 1, 1]
    assert by_rep[1] == [6, 5, 4, 3, 2, 1]
    assert by_rep[2] == [21, 15, 10, 6, 3, 1]
    assert by_rep[3] == [21, 15, 10, 6, 3, 1]


def test_block_size_formula(inst4):
    for b in inst4.blocks:
        assert b.size == math.comb(inst4.d - b.l + b.rep_size, b.rep_size)


def test_k2_reduces_to_lp():
    inst = build_delta_k(D3, 7, 2, 5)
    assert len(inst.constraints) == 2
    assert all(b.rep_size == 0 and b.size == 1 for b in inst.blocks)
    assert len(inst.blocks) == 6


def test_constraint_rhs_and_order(inst4):
    sizes = [row.size for row in inst4.constraints]
    assert sizes == sorted(sizes)
    for row in inst4.constraints:
        assert row.rhs == (-2 if row.size == 2 else 0)


def test_objective_structure(inst4):
    got = inst4.realize_objective(R256)
    touched = sorted(got)
    # six empty-set blocks and the one-point block at l = 0
    assert touched == [0, 1, 2, 3, 4, 5, 6]
    for bi in range(6):
        assert inst4.blocks[bi].rep_size == 0
        assert got[bi][0][0] == 1
    b = inst4.blocks[6]
    assert b.rep_size == 1 and b.l == 0 and b.size == 6
    assert all(x == 1 for row in got[6] for x in row)


# -------------------------------------------------------------------
# coefficient values
# -------------------------------------------------------------------


def test_k3_pair_orbit_coefficients(inst3):
    # row for the pair at inner product t: empty-set coefficient 2 P_l(t)
    tol = gmp.mpfr(2) ** -240
    for row in inst3.constraints:
        if row.size != 2:
            continue
        pattern = inst3.catalog.reps_by_size[2][row.orbit_index].pattern
        t = pattern.entries[0][1]
        got = inst3.realize_row(row, R256)
        for l in range(6):
            want = R256.mul(R256.from_int(2),
                            gegenbauer(inst3.n, l, R256.from_fraction(t), R256))
            assert abs(R256.sub(got[inst3.block_index(0, l)][0][0], want)) < tol


def test_k3_triple_orbit_has_no_empty_block(inst3):
    for row in inst3.constraints:
        if row.size != 3:
            continue
        got = inst3.realize_row(row, R256)
        for l in range(6):
            assert inst3.block_index(0, l) not in got


def test_pair_orbits_same_sparsity(inst3):
    rows = [r for r in inst3.constraints if r.size == 2]
    assert len(rows) == 2
    a, b = (inst3.realize_row(r, R256) for r in rows)
    assert sorted(a) == sorted(b)


def test_reduce_k3_check_passes(inst3):
    assert reduce_k3_check(inst3)


def test_reduce_k3_check_other_inputs():
    assert reduce_k3_check(build_delta_k(D3, 7, 3, 3))


def test_reduce_k3_check_detects_perturbation(inst3):
    import copy

    bad = copy.copy(inst3)
    bad_rows = [copy.copy(r) for r in inst3.constraints]
    row = bad_rows[0]
    kernels = {pos: dict(kmap) for pos, kmap in row.kernels.items()}
    (key, wgt), = [next(iter(kernels[0].items()))]
    t, gx, gy = key
    del kernels[0][key]
    kernels[0][(t + Fraction(1, 10**6), gx, gy)] = wgt
    row.kernels = kernels
    bad.constraints = bad_rows
    assert not reduce_k3_check(bad)


def test_row_matches_reference_averaging(inst4):
    # realize_row's hoisted exact-scalar path against a direct sum of
    # stabilizer-averaged kernel matrices, term by term
    row = next(r for r in inst4.constraints if r.size == 3)
    got = inst4.realize_row(row, R256)
    d = inst4.d
    ref = {}
    for pos, kmap in row.kernels.items():
        frame = frame_of(inst4.frame_reps[pos], R256)
        m = frame.size
        for (t, gx, gy), weight in kmap.items():
            orientations = [(gx, gy)] if gx == gy else [(gx, gy), (gy, gx)]
            share = Fraction(weight, len(orientations))
            for l in range(d + 1):
                y_sum = None
                for ga, gb in orientations:
                    ym = averaged_y(frame, inst4.n, l, d, t, ga, gb)
                    if y_sum is None:
                        y_sum = ym
                    else:
                        y_sum = [[R256.add(y_sum[i][j], ym[i][j])
                                  for j in range(len(ym))]
                                 for i in range(len(ym))]
                c = R256.from_fraction(share)
                bi = inst4.block_index(pos, l)
                sz = len(y_sum)
                tgt = ref.setdefault(bi, [[R256.zero] * sz for _ in range(sz)])
                for i in range(sz):
                    for j in range(sz):
                        tgt[i][j] = R256.add(tgt[i][j],
                                             R256.mul(c, y_sum[i][j]))
    tol = gmp.mpfr(2) ** -230
    assert sorted(got) == sorted(k for k, v in ref.items()
                                 if any(abs(x) > tol for r in v for x in r))
    for bi in got:
        for i in range(len(got[bi])):
            for j in range(len(got[bi])):
                assert abs(R256.sub(got[bi][i][j], ref[bi][i][j])) < tol


# -------------------------------------------------------------------
# invariants
# -------------------------------------------------------------------


def test_coefficients_exactly_symmetric(inst4):
    for row in inst4.constraints:
        got = inst4.realize_row(row, R256)
        for mat in got.values():
            n = len(mat)
            for i in range(n):
                for j in range(n):
                    assert mat[i][j] == mat[j][i]  # exact, not approximate


def test_pair_count_identity(inst4):
    # with PSD blocks, the sum of the assembled values over all nonempty
    # subsets of a realized orbit configuration is nonnegative
    rng = np.random.default_rng(31)
    fmats = {}
    for b_idx, b in enumerate(inst4.blocks):
        fmats[b_idx] = []
        for _ in range(20):
            W = rng.normal(size=(b.size, b.size))
            fmats[b_idx].append(W @ W.T)
    for size in (2, 3, 4):
        for host in inst4.catalog.reps_by_size[size][:4]:
            G = host.pattern.entries
            rows = []
            for r in range(1, size + 1):
                for subset in itertools.combinations(range(size), r):
                    sub = GramPattern([[G[i][j] for j in subset]
                                       for i in subset])
                    rows.append(inst4.realize_row(inst4.assemble(sub), F))
            for trial in range(20):
                total = 0.0
                scale = 1.0
                for realized in rows:
                    for bi, mat in realized.items():
                        v = float((np.array(mat) * fmats[bi][trial]).sum())
                        total += v
                        scale += abs(v)
                assert total >= -1e-9 * scale


def test_alignment_independence(inst4):
    # permuting the orbit's internal point order must not change anything
    tol = gmp.mpfr(2) ** (30 - 256)
    rng = np.random.default_rng(7)
    for row in [inst4.constraints[3], inst4.constraints[9],
                inst4.constraints[16]]:
        pattern = inst4.catalog.reps_by_size[row.size][row.orbit_index].pattern
        base = inst4.realize_row(row, R256)
        for _ in range(3):
            perm = tuple(rng.permutation(row.size).tolist())
            shuffled = inst4.assemble(pattern.permuted(perm))
            other = inst4.realize_row(shuffled, R256)
            assert sorted(base) == sorted(other)
            for bi in base:
                for i in range(len(base[bi])):
                    for j in range(len(base[bi])):
                        assert abs(R256.sub(base[bi][i][j],
                                            other[bi][i][j])) < tol


def test_build_deterministic():
    a = io.StringIO()
    b = io.StringIO()
    export_sdpa(build_delta_k(D3, 7, 2, 5), a)
    export_sdpa(build_delta_k(D3, 7, 2, 5), b)
    assert a.getvalue() == b.getvalue()


# -------------------------------------------------------------------
# SDPA format
# -------------------------------------------------------------------


def test_export_header_structure():
    inst = build_delta_k(D3, 7, 2, 2)  # 2 constraints, 3 blocks
    sink = io.StringIO()
    export_sdpa(inst, sink)
    lines = [ln for ln in sink.getvalue().splitlines()
             if not ln.startswith('"')]
    assert lines[0] == "2"
    assert lines[1] == "4"
    assert lines[2] == "1 1 1 -2"
    rhs = lines[3].split()
    assert float(rhs[0]) == -2.0 and float(rhs[1]) == -2.0


def test_export_round_trip(inst4):
    sink = io.StringIO()
    meta_sink = io.StringIO()
    export_sdpa(inst4, sink, digits=30, sidecar=meta_sink)
    text = sink.getvalue()
    parsed = parse_sdpa(text)
    assert parsed.mdim == 17
    assert parsed.block_sizes == inst4.block_sizes() + [-17]
    assert parsed.rhs[:2] == [-2.0, -2.0]
    assert all(v == 0.0 for v in parsed.rhs[2:])
    # slack entries present for every constraint
    for i in range(1, 18):
        assert parsed.entries[i][(25, i, i)] == "1." + "0" * 29 + "e+00"
    # constant matrix is the negated objective: -1 on the first empty block
    assert parsed.entries[0][(1, 1, 1)].startswith("-1.0000")
    meta = json.loads(meta_sink.getvalue())
    assert meta["n"] == 65 and meta["k"] == 4 and meta["digits"] == 30
    assert len(meta["constraint_orbits"]) == 17
    assert meta["slack_block"] == {"index": 25, "size": 17}


def test_export_upper_triangle_only(inst4):
    sink = io.StringIO()
    export_sdpa(inst4, sink, digits=20)
    for matno, entries in parse_sdpa(sink.getvalue()).entries.items():
        for (blk, i, j) in entries:
            assert i <= j


def test_parse_rejects_malformed():
    with pytest.raises(ValueError):
        parse_sdpa("2\n2\n1 1\n-2 -2\n1 1 1 1\n")  # four-token entry line
    with pytest.raises(ValueError):
        parse_sdpa("2\n3\n1 1\n-2 -2\n")  # block count mismatch


def test_reparse_values_match_printed_precision(inst4):
    sink = io.StringIO()
    export_sdpa(inst4, sink, digits=30)
    parsed = parse_sdpa(sink.getvalue())
    realized = inst4.realize_row(inst4.constraints[0], R256)
    for bi, mat in realized.items():
        for i in range(len(mat)):
            for j in range(i, len(mat)):
                if mat[i][j] == 0:
                    continue
                lit = parsed.entries[1][(bi + 1, i + 1, j + 1)]
                assert abs(float(lit) - float(mat[i][j])) <= 1e-28 * max(
                    1.0, abs(float(mat[i][j])))
