"""Command-line workflows: orbit listings, single bound computations,
dimension sweeps with CSV output, a-posteriori certification, and
closed-form reference tables."""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from fractions import Fraction
from typing import List, Optional, Sequence, Tuple

from . import certify as certify_mod
from . import closedforms
from .configs import InnerProductSet, enumerate_orbits
from .numerics import RealOps
from .sdpgen import build_delta_k, export_sdpa
from .solver import Solution, solve_embedded, solve_external

MIN_K, MAX_K = 2, 6


class ConfigError(ValueError):
    """Invalid run configuration."""


def _rational(text: str) -> Fraction:
    try:
        return Fraction(text.strip())
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"not a rational 'p/q': {text!r}") from exc


def _parse_range(text: str) -> List[int]:
    """n ranges as 'lo:hi[:step]', inclusive on both ends."""
    parts = text.split(":")
    if len(parts) not in (2, 3):
        raise ConfigError(f"range must be 'lo:hi[:step]': {text!r}")
    lo, hi = int(parts[0]), int(parts[1])
    step = int(parts[2]) if len(parts) == 3 else 1
    if step <= 0:
        raise ConfigError(f"step must be positive: {text!r}")
    return list(range(lo, hi + 1, step))  # hi < lo: empty sweep is fine


@dataclass
class RunConfig:
    D: InnerProductSet
    ns: List[int]
    k: int
    d: int
    precision: int
    solver: str
    certify: bool
    out: Optional[str]
    jobs: int
    no_timestamp: bool

    @classmethod
    def from_args(cls, args) -> "RunConfig":
        if getattr(args, "D", None):
            D = InnerProductSet([_rational(v) for v in args.D.split(",")])
        elif getattr(args, "a", None):
            D = InnerProductSet.equiangular(_rational(args.a))
        else:
            raise ConfigError("one of --a or --D is required")
        if getattr(args, "n_range", None):
            ns = _parse_range(args.n_range)
        elif getattr(args, "n", None) is not None:
            ns = [args.n]
        else:
            raise ConfigError("one of --n or --n-range is required")
        for n in ns:
            if n < 2:
                raise ConfigError(f"n must be >= 2, got {n}")
        k = getattr(args, "k", 2)
        if not MIN_K <= k <= MAX_K:
            raise ConfigError(
                f"k must be between {MIN_K} and {MAX_K}, got {k} "
                f"(orbit catalogs beyond k={MAX_K} are not desk-scale)")
        return cls(
            D=D, ns=ns, k=k, d=getattr(args, "d", 5),
            precision=getattr(args, "precision", 256),
            solver=getattr(args, "solver", "embedded"),
            certify=getattr(args, "certify", False),
            out=getattr(args, "out", None),
            jobs=getattr(args, "jobs", 1),
            no_timestamp=getattr(args, "no_timestamp", False),
        )


@dataclass
class BoundRow:
    n: int
    method: str
    value: float
    floor: int
    certified: bool
    runtime: float

    def csv_value(self) -> str:
        return f"{self.value:.6f}"


def solve_tolerance(precision: int) -> float:
    """Deep enough that integer floors are unambiguous, shallow enough
    that the final slacks (which scale with the duality gap) stay far
    above the equality residual left by the Schur solves (~2^-prec /
    gap); past gap ~ 2^-prec/2 the iterate stops being certifiable."""
    return max(1e-18, 2.0 ** -(precision // 2 - 16))


def bound_pipeline(D: InnerProductSet, n: int, k: int, d: int,
                   precision: int, solver: str = "embedded",
                   want_certificate: bool = False,
                   catalog=None):
    """build -> solve -> (optionally) certify; the shared workflow."""
    start = time.monotonic()
    instance = build_delta_k(D, n, k, d, precision=precision,
                             catalog=catalog)
    if solver == "embedded":
        tol = solve_tolerance(precision)
        sol = solve_embedded(instance, ops=RealOps(precision),
                             tol_gap=tol, tol_feas=tol)
    elif solver.startswith("external:"):
        sol = solve_external(instance, solver.split(":", 1)[1])
    else:
        raise ConfigError(f"unknown solver {solver!r}; use 'embedded' "
                          f"or 'external:<command>'")
    cert = None
    if want_certificate:
        rounded = certify_mod.round_for_certification(
            sol, psd_shift=0, instance=instance)
        cert = certify_mod.verify((D, n, k, d), rounded,
                                  catalog=instance.catalog)
        value = float(cert.certified_bound.hi)
        floor = cert.floor_bound
    else:
        value = float(sol.bound)
        floor = math.floor(value)
    row = BoundRow(n=n, method=f"delta_{k}", value=value, floor=floor,
                   certified=bool(cert and cert.certified),
                   runtime=time.monotonic() - start)
    return row, sol, cert


# -------------------------------------------------------------------
# subcommands
# -------------------------------------------------------------------


def _single_n(cfg: RunConfig) -> int:
    if not cfg.ns:
        raise ConfigError("an ambient dimension --n is required here")
    return cfg.ns[0]


def cmd_orbits(cfg: RunConfig, stream=None) -> int:
    out = stream or sys.stdout
    catalog = enumerate_orbits(cfg.D, cfg.k, _single_n(cfg))
    for size, reps in enumerate(catalog.reps_by_size):
        stabs = " ".join(str(len(r.stabilizer)) for r in reps)
        out.write(f"size {size}: {len(reps)} orbit(s); "
                  f"stabilizer sizes: {stabs or '-'}\n")
    counts = catalog.counts()
    out.write("counts: " + " ".join(str(c) for c in counts[1:]) + "\n")
    return 0


def cmd_bound(cfg: RunConfig, stream=None) -> int:
    out = stream or sys.stdout
    row, sol, cert = bound_pipeline(
        cfg.D, _single_n(cfg), cfg.k, cfg.d, cfg.precision, cfg.solver,
        want_certificate=cfg.certify)
    out.write(f"n={row.n} method={row.method} value={row.value:.9f} "
              f"floor={row.floor} certified={'yes' if row.certified else 'no'} "
              f"status={sol.status} runtime={row.runtime:.2f}s\n")
    if cfg.out:
        with open(cfg.out, "w") as fh:
            fh.write(sol.to_json())
        if cert is not None:
            with open(cfg.out + ".cert.json", "w") as fh:
                fh.write(cert.to_json())
        out.write(f"solution written to {cfg.out}\n")
    if cfg.certify and not (cert and cert.certified):
        return 1
    return 0


def _reference_rows(cfg: RunConfig, n: int) -> List[Tuple[str, Fraction]]:
    entries = cfg.D.entries
    if len(entries) == 2 and entries[0] == -entries[1]:
        return closedforms.reference_bounds(n, abs(entries[0]))
    return [("gerzon", closedforms.gerzon(n))]


def _sweep_solve(payload) -> dict:
    """Worker for one sweep dimension (plain dict in/out: picklable)."""
    (d_entries, n, k, d, precision, solver, want_cert) = payload
    D = InnerProductSet([Fraction(v) for v in d_entries])
    row, _, _ = bound_pipeline(D, n, k, d, precision, solver,
                               want_certificate=want_cert)
    return {"n": n, "method": row.method, "value": row.value,
            "floor": row.floor, "certified": row.certified}


def _frac_str(v: Fraction) -> str:
    return str(v.numerator) if v.denominator == 1 else str(v)


def cmd_sweep(cfg: RunConfig, stream=None) -> int:
    close = False
    if cfg.out:
        out = open(cfg.out, "w")
        close = True
    else:
        out = stream or sys.stdout
    status = 0
    try:
        if not cfg.no_timestamp:
            stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
            out.write(f"# generated {stamp}\n")
        out.write("n,method,value,floor,certified,best\n")
        payloads = [([str(v) for v in cfg.D.entries], n, cfg.k, cfg.d,
                     cfg.precision, cfg.solver, cfg.certify)
                    for n in cfg.ns]
        if cfg.jobs > 1:
            pool = ProcessPoolExecutor(max_workers=cfg.jobs)
            futures = [pool.submit(_sweep_solve, p) for p in payloads]
            results = ((f, None) for f in futures)
        else:
            results = ((None, p) for p in payloads)
        for n, (fut, payload) in zip(cfg.ns, results):
            refs = _reference_rows(cfg, n)
            try:
                got = fut.result() if fut is not None else _sweep_solve(payload)
            except Exception as exc:  # per-n failure: mark and move on
                out.write(f"{n},delta_{cfg.k},FAILED,,,\n")
                out.flush()
                print(f"n={n} failed: {exc}", file=sys.stderr)
                status = 1
                continue
            rows = [(got["method"], Fraction(got["value"]).limit_denominator(10 ** 12),
                     got["value"], f"{got['value']:.6f}",
                     got["floor"], got["certified"])]
            for name, val in refs:
                rows.append((name, val, float(val), _frac_str(val),
                             math.floor(val), False))
            best = min(r[2] for r in rows)
            for method, _, fval, text, floor, certified in rows:
                flag = 1 if fval == best else 0
                out.write(f"{n},{method},{text},{floor},"
                          f"{1 if certified else 0},{flag}\n")
            out.flush()
        if cfg.jobs > 1:
            pool.shutdown()
    finally:
        if close:
            out.close()
    return status


def cmd_certify(args, stream=None) -> int:
    out = stream or sys.stdout
    try:
        with open(args.solution) as fh:
            sol = Solution.from_json(fh.read())
    except (OSError, ValueError, KeyError) as exc:
        print(f"cannot read solution file: {exc}", file=sys.stderr)
        return 2
    try:
        if args.instance:
            with open(args.instance) as fh:
                meta = json.load(fh)
        else:
            meta = sol.meta
        D = InnerProductSet([_rational(v) for v in meta["D"]])
        n, k, d = int(meta["n"]), int(meta["k"]), int(meta["d"])
    except (OSError, ValueError, KeyError, TypeError) as exc:
        print(f"cannot read instance parameters: {exc}", file=sys.stderr)
        return 2
    shift = _rational(args.psd_shift) if args.psd_shift else 0
    rounded = certify_mod.round_for_certification(sol, psd_shift=shift)
    cert = certify_mod.verify((D, n, k, d), rounded,
                              precision=args.precision)
    text = cert.to_json()
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        out.write(text + "\n")
    out.write(f"verdict: {cert.verdict}; floor bound {cert.floor_bound}\n")
    return 0 if cert.certified else 1


def cmd_reference(args, stream=None) -> int:
    out = stream or sys.stdout
    a = _rational(args.a)
    pillar = None
    if args.lin_yu:
        if args.n < 63:
            print("lin-yu requires n >= 63", file=sys.stderr)
            return 1
        pillar_D = InnerProductSet([Fraction(1, 13), Fraction(-5, 13)])
        row, _, cert = bound_pipeline(
            pillar_D, args.n - 4, args.pillar_k, 5, args.precision,
            want_certificate=True)
        pillar = cert.floor_bound if cert.certified else math.floor(row.value)
        out.write(f"# pillar bound A({args.n - 4}, {{1/13, -5/13}}) "
                  f"<= {pillar} (delta_{args.pillar_k}, "
                  f"certified={'yes' if cert.certified else 'no'})\n")
    for name, val in closedforms.reference_bounds(args.n, a, pillar):
        out.write(f"{name}: {_frac_str(val)} ({float(val):.4f})\n")
    return 0


def cmd_export(cfg: RunConfig, stream=None) -> int:
    out = stream or sys.stdout
    n = _single_n(cfg)
    instance = build_delta_k(cfg.D, n, cfg.k, cfg.d,
                             precision=cfg.precision)
    target = cfg.out or f"delta{cfg.k}_n{n}.dat-s"
    with open(target, "w") as fh, open(target + ".meta.json", "w") as side:
        export_sdpa(instance, fh, sidecar=side)
    out.write(f"instance written to {target}\n")
    return 0


# -------------------------------------------------------------------
# argument parsing
# -------------------------------------------------------------------


def _add_common(p, with_range=False):
    p.add_argument("--a", help="common inner product magnitude, 'p/q'")
    p.add_argument("--D", help="comma-separated inner products, 'p/q,...'")
    p.add_argument("--n", type=int, help="ambient dimension")
    if with_range:
        p.add_argument("--n-range", dest="n_range",
                       help="dimensions 'lo:hi[:step]'")
    p.add_argument("--k", type=int, default=2, help="hierarchy level (2..6)")
    p.add_argument("--d", type=int, default=5, help="polynomial degree cap")
    p.add_argument("--precision", type=int, default=256,
                   help="working precision in bits")
    p.add_argument("--solver", default="embedded",
                   help="'embedded' or 'external:<command>'")
    p.add_argument("--certify", action="store_true",
                   help="verify the solution in interval arithmetic")
    p.add_argument("--out", help="output path")
    p.add_argument("--jobs", type=int, default=1,
                   help="parallel workers for sweeps")
    p.add_argument("--no-timestamp", dest="no_timestamp",
                   action="store_true", help="omit the CSV timestamp header")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="equibound",
        description="k-point semidefinite bounds for spherical codes and "
                    "equiangular lines, with interval certification")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("orbits", help="orbit counts and stabilizer sizes")
    _add_common(p)

    p = sub.add_parser("bound", help="compute one bound")
    _add_common(p)

    p = sub.add_parser("sweep", help="bounds across a dimension range, CSV")
    _add_common(p, with_range=True)

    p = sub.add_parser("export", help="write the instance in SDPA format")
    _add_common(p)

    p = sub.add_parser("certify", help="verify a saved solution")
    p.add_argument("--solution", required=True, help="solution JSON file")
    p.add_argument("--instance", help="instance parameter JSON "
                   "(defaults to the solution's embedded metadata)")
    p.add_argument("--precision", type=int, default=512)
    p.add_argument("--psd-shift", dest="psd_shift",
                   help="rounding shift as 'p/q' (default 0)")
    p.add_argument("--out", help="certificate JSON path")

    p = sub.add_parser("reference", help="closed-form reference bounds")
    p.add_argument("--a", required=True, help="angle cosine, 'p/q'")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--lin-yu", dest="lin_yu", action="store_true",
                   help="solve the pillar instance and add the combined row")
    p.add_argument("--pillar-k", dest="pillar_k", type=int, default=2)
    p.add_argument("--precision", type=int, default=192)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "certify":
            return cmd_certify(args)
        if args.command == "reference":
            return cmd_reference(args)
        cfg = RunConfig.from_args(args)
        handlers = {"orbits": cmd_orbits, "bound": cmd_bound,
                    "sweep": cmd_sweep, "export": cmd_export}
        return handlers[args.command](cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
