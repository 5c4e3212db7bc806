"""Benchmark harness and command-line interface.

Subcommands: ``solve`` (one solver, JSON report), ``compare`` (several
solvers, CSV), ``sweep`` (F3R parameter grid, CSV) and ``model``
(memory-traffic table, CSV).
"""
from __future__ import annotations

import argparse
import csv
import itertools
import json
import sys
import time
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from . import __version__
from .costmodel import CostParams, advise_split, cost_fgmres
from .krylov import (
    ConvergenceReport,
    IndefiniteOperator,
    bicgstab_solve,
    cg_solve,
    fgmres_restarted,
)
from .nesting import VARIANTS, F3rConfig, PrimaryPrecond, SpecError, build, resolve_spec
from .precision import Precision
from .precond import FactorizationError, IluConfig, factorize
from .sparse import CsrMatrix, StencilSpec, diagonal_scale, generate_stencil, read_matrix_market

SCHEMA_VERSION = 1
REFERENCE_SOLVERS = ("cg", "bicgstab", "fgmres64")


@dataclass(frozen=True)
class RunConfig:
    matrix: str | None = None
    stencil: str | None = None
    solver: str = "fp16-F3R"
    precond_blocks: int = 4
    alpha: float = 1.0
    precond_kind: str = "auto"  # auto | ilu0 | ic0
    precond_precision: Precision = Precision.P64
    tol: float = 1e-8
    seed: int = 0
    repeats: int = 3
    zero_rhs: bool = False
    hpgmp_beta: float = 0.5
    out: str | None = None

    def __post_init__(self):
        if (self.matrix is None) == (self.stencil is None):
            raise ValueError("give exactly one of a matrix file or a stencil name")
        if not 0 < self.tol < 1:
            raise ValueError("tol must lie in (0, 1)")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        object.__setattr__(self, "precond_precision", Precision.parse(self.precond_precision))


@dataclass(eq=False)
class Problem:
    name: str
    A: CsrMatrix  # diagonally scaled
    b: np.ndarray  # scaled right-hand side
    scale: np.ndarray
    symmetric: bool


def random_rhs(n: int, seed: int) -> np.ndarray:
    """Uniform [0, 1) entries from numpy's PCG64 generator seeded with ``seed``."""
    return np.random.Generator(np.random.PCG64(seed)).random(n)


def load_problem(cfg: RunConfig) -> Problem:
    if cfg.stencil is not None:
        spec = StencilSpec.parse(cfg.stencil, hpgmp_beta=cfg.hpgmp_beta)
        A, name = generate_stencil(spec), spec.name
    else:
        A, name = read_matrix_market(cfg.matrix), cfg.matrix
    b = np.zeros(A.n) if cfg.zero_rhs else random_rhs(A.n, cfg.seed)
    As, bs, d = diagonal_scale(A, b)
    return Problem(name, As, bs, d, As.is_symmetric())


def _precond_kind(cfg: RunConfig, problem: Problem) -> str:
    if cfg.precond_kind != "auto":
        return cfg.precond_kind
    return "ic0" if problem.symmetric else "ilu0"


class _Factors:
    """Caches binary64 factorizations per (kind, blocks, alpha)."""

    def __init__(self, A: CsrMatrix):
        self.A = A
        self.seconds: dict[tuple, float] = {}
        self._cache = {}

    def get(self, kind: str, blocks: int, alpha: float):
        key = (kind, blocks, alpha)
        if key not in self._cache:
            t0 = time.perf_counter()
            self._cache[key] = factorize(self.A, IluConfig(blocks, alpha, kind == "ic0", Precision.P64))
            self.seconds[key] = time.perf_counter() - t0
        return self._cache[key]


def make_solver(name: str, problem: Problem, cfg: RunConfig, factors: _Factors,
                f3r: F3rConfig | None = None) -> tuple[Callable, dict]:
    """Return ``(solve(b) -> (x, report), description)`` for a solver name or spec string."""
    kind = _precond_kind(cfg, problem)
    key = name.strip().lower()
    if key in REFERENCE_SOLVERS:
        M = factors.get(kind, cfg.precond_blocks, cfg.alpha).cast(cfg.precond_precision)
        desc = {"name": key, "spec": key,
                "precond": {"kind": kind, "blocks": cfg.precond_blocks, "alpha": cfg.alpha,
                            "precision": cfg.precond_precision.label}}
        if key == "cg":
            return (lambda b: cg_solve(problem.A, M, b, cfg.tol)), desc
        if key == "bicgstab":
            return (lambda b: bicgstab_solve(problem.A, M, b, cfg.tol)), desc
        return (lambda b: fgmres_restarted(problem.A, M, b, 64, cfg.tol)), desc
    if f3r is not None:
        spec = f3r.spec(PrimaryPrecond(kind, cfg.precond_blocks, cfg.alpha))
        max_cycles = f3r.max_cycles
    else:
        spec = resolve_spec(name, kind, cfg.precond_blocks, cfg.alpha)
        max_cycles = 3
    prim = spec.primary
    M = None
    if prim.kind != "identity":
        M = factors.get(prim.kind, prim.blocks or 1, 1.0 if prim.alpha is None else prim.alpha)
    solver = build(spec, problem.A, M, max_cycles=max_cycles)
    desc = {"name": name, "spec": str(spec),
            "precond": {"kind": prim.kind, "blocks": prim.blocks, "alpha": prim.alpha,
                        "precision": prim.precision.label}}
    return (lambda b: solver.solve(b, cfg.tol)), desc


def _run_repeats(solve: Callable, problem: Problem, repeats: int) -> list[ConvergenceReport]:
    reports = []
    for _ in range(repeats):
        try:
            _, rep = solve(problem.b)
        except IndefiniteOperator as exc:
            rep = ConvergenceReport(False, 0, 0, [1.0], float("nan"), reason=str(exc))
        reports.append(rep)
    return reports


def cmd_solve(cfg: RunConfig) -> dict:
    problem = load_problem(cfg)
    factors = _Factors(problem.A)
    solve, desc = make_solver(cfg.solver, problem, cfg, factors)
    reports = _run_repeats(solve, problem, cfg.repeats)
    first = reports[0].to_dict()
    result = {
        "schema_version": SCHEMA_VERSION,
        "problem": {"name": problem.name, "n": problem.A.n, "nnz": problem.A.nnz, "symmetric": problem.symmetric},
        "solver": desc,
        "tol": cfg.tol,
        "seed": cfg.seed,
        "zero_rhs": cfg.zero_rhs,
        "repeats": cfg.repeats,
        "factorization_seconds": sum(factors.seconds.values()),
        **first,
        "wall_seconds": float(np.mean([r.wall_seconds for r in reports])),
        "runs": [{"precond_invocations": r.precond_invocations, "outer_iterations": r.outer_iterations,
                  "converged": r.converged, "wall_seconds": r.wall_seconds} for r in reports],
        "mean_precond_invocations": float(np.mean([r.precond_invocations for r in reports])),
    }
    return result


COMPARE_FIELDS = ["solver", "spec", "converged", "outer_iterations", "precond_invocations",
                  "wall_seconds", "speedup", "final_true_residual"]


def cmd_compare(cfg: RunConfig, solvers: list[str]) -> list[dict]:
    """One row per solver; speedups are relative to the first solver."""
    problem = load_problem(cfg)
    factors = _Factors(problem.A)
    rows = []
    for name in solvers:
        solve, desc = make_solver(name, problem, cfg, factors)
        reports = _run_repeats(solve, problem, cfg.repeats)
        rows.append({
            "solver": name,
            "spec": desc["spec"],
            "converged": reports[0].converged,
            "outer_iterations": reports[0].outer_iterations,
            "precond_invocations": reports[0].precond_invocations,
            "wall_seconds": float(np.mean([r.wall_seconds for r in reports])),
            "final_true_residual": reports[0].final_true_residual,
        })
    base = rows[0]["wall_seconds"] if rows else 0.0
    for row in rows:
        row["speedup"] = base / row["wall_seconds"] if row["converged"] and row["wall_seconds"] > 0 else ""
    return rows


SWEEP_FIELDS = ["mode", "m1", "m2", "m3", "m4", "c", "fixed_omega", "converged", "outer_iterations",
                "precond_invocations", "wall_seconds", "final_true_residual", "omegas_final"]


def cmd_sweep(cfg: RunConfig, grid: dict[str, list]) -> list[dict]:
    """Cartesian product of F3R settings on one problem with a shared right-hand side.

    ``grid`` keys: ``mode``, ``m1``..``m4``, ``c`` (None = no updates) and
    ``fixed_omega`` (None = adaptive).
    """
    problem = load_problem(cfg)
    factors = _Factors(problem.A)
    base = F3rConfig()
    keys = ["mode", "m1", "m2", "m3", "m4", "c", "fixed_omega"]
    axes = [grid.get(k) or [getattr(base, k)] for k in keys]
    rows = []
    for values in itertools.product(*axes):
        f3r = replace(base, **dict(zip(keys, values)))
        solve, _ = make_solver("f3r", problem, cfg, factors, f3r=f3r)
        reports = _run_repeats(solve, problem, cfg.repeats)
        rep = reports[0]
        rows.append({
            "mode": f3r.mode.label, "m1": f3r.m1, "m2": f3r.m2, "m3": f3r.m3, "m4": f3r.m4,
            "c": "inf" if f3r.c is None or f3r.fixed_omega is not None else f3r.c,
            "fixed_omega": "" if f3r.fixed_omega is None else f3r.fixed_omega,
            "converged": rep.converged, "outer_iterations": rep.outer_iterations,
            "precond_invocations": rep.precond_invocations,
            "wall_seconds": float(np.mean([r.wall_seconds for r in reports])),
            "final_true_residual": rep.final_true_residual,
            "omegas_final": json.dumps(rep.omegas_final),
        })
    return rows


MODEL_FIELDS = ["m_outer", "m_inner", "kind", "cost", "reference_cost", "saving"]


def cmd_model(c_a: float, c_m: float, m: int) -> list[dict]:
    p = CostParams(c_a, c_m, m)
    ref = cost_fgmres(p)
    return [{"m_outer": s.m_outer, "m_inner": float(s.m_inner), "kind": s.kind, "cost": float(s.cost),
             "reference_cost": float(ref), "saving": float(ref - s.cost)} for s in advise_split(p)]


# --- command line -------------------------------------------------------------------

SPEC_HELP = """solver: a variant name ({variants}), a reference solver ({refs}),
or a spec string such as
  'F100:f64/f64 > F8:f32/f32 > F4:f16/f32 > R2:f16,c=64 > ilu0(blocks=8,alpha=1.0,prec=f16)'
Each '>' adds one nesting level; 'Fm:A/V' is FGMRES(m) with matrix precision A
and vector precision V; 'Rm:P,c=C,omega=W' is Richardson with weight-update
cycle C ('inf' = fixed weights) and initial weight W; the terminal is
ilu0(...), ic0(...) or identity."""


def _int_list(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t]


def _cycle_list(text: str) -> list[int | None]:
    return [None if t.lower() in ("inf", "none") else int(t) for t in text.split(",") if t]


def _omega_list(text: str) -> list[float | None]:
    return [None if t.lower() in ("adaptive", "none") else float(t) for t in text.split(",") if t]


def _add_problem_args(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--matrix", help="Matrix Market file")
    src.add_argument("--stencil", help="generated problem, e.g. hpcg_5_5_5 or hpgmp_5_5_5")
    p.add_argument("--precond-blocks", type=int, default=4)
    p.add_argument("--alpha", type=float, default=1.0, help="diagonal boost used in the factorization")
    p.add_argument("--precond-kind", choices=["auto", "ilu0", "ic0"], default="auto")
    p.add_argument("--precond-precision", default="f64", help="preconditioner precision of reference solvers")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--zero-rhs", action="store_true")
    p.add_argument("--beta", type=float, default=0.5, help="z-asymmetry of hpgmp stencils")
    p.add_argument("--out", help="output file (default: stdout)")


def build_parser() -> argparse.ArgumentParser:
    variants = ", ".join(VARIANTS)
    epilog = SPEC_HELP.format(variants=variants, refs=", ".join(REFERENCE_SOLVERS))
    parser = argparse.ArgumentParser(prog="nestkrylov", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter, epilog=epilog)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="run one solver and write a JSON report", epilog=epilog,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    _add_problem_args(p)
    p.add_argument("--solver", default="fp16-F3R")

    p = sub.add_parser("compare", help="run several solvers and write a CSV table", epilog=epilog,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    _add_problem_args(p)
    p.add_argument("--solver", action="append", required=True, help="repeatable; the first is the baseline")

    p = sub.add_parser("sweep", help="grid over F3R parameters, CSV output")
    _add_problem_args(p)
    p.add_argument("--mode", default="f16", help="comma list of f64,f32,f16")
    for k in ("m1", "m2", "m3", "m4"):
        p.add_argument(f"--{k}", type=_int_list, default=None, help="comma list")
    p.add_argument("--c", type=_cycle_list, default=None, help="comma list; 'inf' disables updates")
    p.add_argument("--fixed-omega", type=_omega_list, default=None,
                   help="comma list of fixed weights; 'adaptive' keeps updates")

    p = sub.add_parser("model", help="memory-traffic model table, CSV output")
    p.add_argument("--cA", type=float, required=True)
    p.add_argument("--cM", type=float, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--out")
    return parser


def _config(args) -> RunConfig:
    return RunConfig(
        matrix=args.matrix, stencil=args.stencil,
        solver=s if isinstance(s := getattr(args, "solver", None), str) else "fp16-F3R",
        precond_blocks=args.precond_blocks, alpha=args.alpha, precond_kind=args.precond_kind,
        precond_precision=args.precond_precision, tol=args.tol, seed=args.seed, repeats=args.repeats,
        zero_rhs=args.zero_rhs, hpgmp_beta=args.beta, out=args.out,
    )


def _emit_csv(rows: list[dict], fields: list[str], out: str | None) -> None:
    fh = open(out, "w", newline="") if out else sys.stdout
    try:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)
    finally:
        if out:
            fh.close()


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "threads", None):
        import numba

        numba.set_num_threads(args.threads)
    try:
        if args.command == "model":
            _emit_csv(cmd_model(args.cA, args.cM, args.m), MODEL_FIELDS, args.out)
            return 0
        cfg = _config(args)
        if args.command == "solve":
            text = json.dumps(cmd_solve(cfg), indent=2)
            if args.out:
                with open(args.out, "w") as fh:
                    fh.write(text + "\n")
            else:
                print(text)
        elif args.command == "compare":
            _emit_csv(cmd_compare(cfg, args.solver), COMPARE_FIELDS, args.out)
        else:
            grid = {"mode": [Precision.parse(m) for m in args.mode.split(",")],
                    "m1": args.m1, "m2": args.m2, "m3": args.m3, "m4": args.m4,
                    "c": args.c, "fixed_omega": args.fixed_omega}
            _emit_csv(cmd_sweep(cfg, grid), SWEEP_FIELDS, args.out)
    except SpecError as exc:
        print(f"nestkrylov: error: {exc}", file=sys.stderr)
        return 2
    except (FactorizationError, ValueError, OSError) as exc:
        print(f"nestkrylov: error: {exc}", file=sys.stderr)
        return 3
    return 0

