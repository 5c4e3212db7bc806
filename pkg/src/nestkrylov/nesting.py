"""Recursive composition of nested solvers (S1, S2, ..., SD, M) and the F3R builder.

Each inner level acts as the preconditioner of its parent: a call runs the
level's full iteration count from a zero initial guess without any
tolerance test.  Only the outermost FGMRES checks convergence.

Solver descriptions can be written as strings, one ``>``-separated token per
level followed by the primary preconditioner::

    F100:f64/f64 > F8:f32/f32 > F4:f16/f32 > R2:f16,c=64 > ilu0(blocks=8,alpha=1.0,prec=f16)

``Fm:P/Q`` is FGMRES with m iterations, matrix at P and vectors at Q.
``Rm:P/Q,c=C,omega=W`` is Richardson with weight-update cycle C (``inf``
disables updates) and initial weight W; a single precision sets both.  The
terminal is ``ilu0(...)``, ``ic0(...)`` or ``identity``.
"""
from __future__ import annotations

import re
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .krylov import (
    DEFAULT_TOL,
    ConvergenceReport,
    CountingPreconditioner,
    InnerDivergence,
    LinearOperator,
    RichardsonState,
    fgmres_cycle,
    richardson_apply,
)
from .precision import Precision
from .precond import BlockJacobiIlu0, IluConfig, factorize
from .sparse import CsrMatrix, PrecisionReplicas, spmv

P16, P32, P64 = Precision.P16, Precision.P32, Precision.P64


class SpecError(ValueError):
    def __init__(self, message: str, token: str | None = None):
        self.token = token
        super().__init__(message if token is None else f"{message}: {token!r}")


@dataclass(frozen=True)
class Fgmres:
    m: int
    matrix: Precision = P64
    vectors: Precision = P64

    def __str__(self):
        return f"F{self.m}:{self.matrix.label}/{self.vectors.label}"


@dataclass(frozen=True)
class Richardson:
    m: int
    matrix: Precision = P64
    vectors: Precision = P64
    c: int | None = 64
    omega: float = 1.0

    def __str__(self):
        opts = f",c={'inf' if self.c is None else self.c}"
        if self.omega != 1.0:
            opts += f",omega={self.omega!r}"
        return f"R{self.m}:{self.matrix.label}/{self.vectors.label}{opts}"


@dataclass(frozen=True)
class PrimaryPrecond:
    kind: str = "ilu0"  # ilu0 | ic0 | identity
    blocks: int | None = None
    alpha: float | None = None
    precision: Precision = P64

    def __str__(self):
        if self.kind == "identity":
            return "identity"
        args = []
        if self.blocks is not None:
            args.append(f"blocks={self.blocks}")
        if self.alpha is not None:
            args.append(f"alpha={self.alpha!r}")
        args.append(f"prec={self.precision.label}")
        return f"{self.kind}({','.join(args)})"

    def config(self, default: IluConfig | None = None) -> IluConfig:
        default = default or IluConfig()
        return IluConfig(
            nblocks=default.nblocks if self.blocks is None else self.blocks,
            alpha=default.alpha if self.alpha is None else self.alpha,
            symmetric=self.kind == "ic0",
            apply_precision=self.precision,
        )


Level = Fgmres | Richardson


@dataclass(frozen=True)
class SolverSpec:
    levels: tuple[Level, ...]
    primary: PrimaryPrecond = PrimaryPrecond()
    allow_increasing: bool = False

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(self.levels))
        if not self.levels:
            raise SpecError("a nested solver needs at least one level")
        if not isinstance(self.levels[0], Fgmres):
            raise SpecError("the outermost level must be FGMRES", str(self.levels[0]))
        if not self.allow_increasing:
            for parent, child in zip(self.levels, self.levels[1:]):
                if child.matrix > parent.matrix or child.vectors > parent.vectors:
                    raise SpecError("precision increases with depth", str(child))

    @property
    def depth(self) -> int:
        return len(self.levels)

    def __str__(self):
        return " > ".join([*map(str, self.levels), str(self.primary)])

    @classmethod
    def parse(cls, text: str, allow_increasing: bool = False) -> "SolverSpec":
        tokens = [t.strip() for t in text.split(">")]
        if len(tokens) < 2 or any(not t for t in tokens):
            raise SpecError("expected 'level > ... > primary'", text)
        levels = tuple(_parse_level(t) for t in tokens[:-1])
        return cls(levels, _parse_primary(tokens[-1]), allow_increasing)


_LEVEL = re.compile(r"([FR])(\d+)(?::([a-z0-9]+)(?:/([a-z0-9]+))?)?((?:,[a-z_]+=[^,]+)*)", re.I)
_PRIMARY = re.compile(r"(ilu0|ic0|identity|none)(?:\((.*)\))?", re.I)


def _parse_precision(text: str, token: str) -> Precision:
    try:
        return Precision.parse(text)
    except ValueError:
        raise SpecError("unknown precision", token) from None


def _parse_level(token: str) -> Level:
    m = _LEVEL.fullmatch(token)
    if m is None:
        raise SpecError("bad level token", token)
    kind, count, prec_a, prec_b, opts = m.groups()
    count = int(count)
    if count < 1:
        raise SpecError("iteration count must be >= 1", token)
    matrix = _parse_precision(prec_a, token) if prec_a else P64
    vectors = _parse_precision(prec_b, token) if prec_b else matrix
    options = dict(o.split("=", 1) for o in opts.split(",")[1:]) if opts else {}
    if kind.upper() == "F":
        if options:
            raise SpecError("FGMRES levels take no options", token)
        return Fgmres(count, matrix, vectors)
    c_given = "c" in options
    c_text = options.pop("c", "64")
    omega_text = options.pop("omega", None)
    if options:
        raise SpecError("unknown Richardson option", token)
    try:
        c = None if c_text.lower() in ("inf", "none") else int(c_text)
        omega = 1.0 if omega_text is None else float(omega_text)
    except ValueError:
        raise SpecError("bad Richardson option value", token) from None
    if omega_text is not None and not c_given:
        c = None  # a given weight without a cycle means a fixed weight
    if c is not None and c < 1:
        raise SpecError("weight-update cycle must be >= 1", token)
    return Richardson(count, matrix, vectors, c, omega)


def _parse_primary(token: str) -> PrimaryPrecond:
    m = _PRIMARY.fullmatch(token)
    if m is None:
        raise SpecError("bad primary preconditioner token", token)
    kind, args = m.groups()
    kind = kind.lower()
    if kind in ("identity", "none"):
        if args:
            raise SpecError("identity takes no arguments", token)
        return PrimaryPrecond("identity")
    params = {}
    for item in filter(None, (a.strip() for a in (args or "").split(","))):
        key, _, value = item.partition("=")
        params[key.strip().lower()] = value.strip()
    try:
        blocks = int(params.pop("blocks")) if "blocks" in params else None
        alpha = float(params.pop("alpha")) if "alpha" in params else None
    except ValueError:
        raise SpecError("bad preconditioner argument", token) from None
    precision = _parse_precision(params.pop("prec"), token) if "prec" in params else P64
    if params:
        raise SpecError("unknown preconditioner argument", next(iter(params)))
    return PrimaryPrecond(kind, blocks, alpha, precision)


# --- canonical configurations -----------------------------------------------------


@dataclass(frozen=True)
class F3rConfig:
    """(F_m1, F_m2, F_m3, R_m4, M) with a per-mode precision schedule.

    ``mode`` selects fp64-, fp32- or fp16-F3R.  The outermost solver runs at
    most ``max_cycles`` times m1 iterations; ``fixed_omega`` switches the
    Richardson weights off adaptation.
    """

    m1: int = 100
    m2: int = 8
    m3: int = 4
    m4: int = 2
    c: int | None = 64
    mode: Precision = P16
    max_cycles: int = 3
    fixed_omega: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "mode", Precision.parse(self.mode))
        if min(self.m1, self.m2, self.m3, self.m4, self.max_cycles) < 1:
            raise ValueError("iteration counts and max_cycles must be >= 1")

    def spec(self, primary: PrimaryPrecond = PrimaryPrecond()) -> SolverSpec:
        if self.mode is P16:
            l2, l3, l4 = (P32, P32), (P16, P32), (P16, P16)
        else:
            l2 = l3 = l4 = (self.mode, self.mode)
        if self.fixed_omega is None:
            rich = Richardson(self.m4, *l4, c=self.c)
        else:
            rich = Richardson(self.m4, *l4, c=None, omega=self.fixed_omega)
        levels = (Fgmres(self.m1, P64, P64), Fgmres(self.m2, *l2), Fgmres(self.m3, *l3), rich)
        return SolverSpec(levels, replace(primary, precision=l4[0]) if primary.kind != "identity" else primary)


# The depth variants and F3R modes, with the primary preconditioner left open.
VARIANTS = {
    "fp64-F3R": "F100:f64/f64 > F8:f64/f64 > F4:f64/f64 > R2:f64/f64,c=64 > ilu0(prec=f64)",
    "fp32-F3R": "F100:f64/f64 > F8:f32/f32 > F4:f32/f32 > R2:f32/f32,c=64 > ilu0(prec=f32)",
    "fp16-F3R": "F100:f64/f64 > F8:f32/f32 > F4:f16/f32 > R2:f16/f16,c=64 > ilu0(prec=f16)",
    "F2": "F100:f64/f64 > F64:f32/f32 > ilu0(prec=f16)",
    "fp16-F2": "F100:f64/f64 > F64:f16/f16 > ilu0(prec=f16)",
    "F3": "F100:f64/f64 > F8:f32/f32 > F8:f16/f32 > ilu0(prec=f16)",
    "fp16-F3": "F100:f64/f64 > F8:f32/f32 > F8:f16/f16 > ilu0(prec=f16)",
    "F4": "F100:f64/f64 > F8:f32/f32 > F4:f16/f32 > F2:f16/f16 > ilu0(prec=f16)",
}


def resolve_spec(text: str, kind: str | None = None, blocks: int | None = None,
                 alpha: float | None = None) -> SolverSpec:
    """Parse a spec string or variant name and fill in the primary's block
    count and alpha where the string leaves them open.  ``kind`` replaces the
    preconditioner kind of named variants only."""
    variant = text.strip() in VARIANTS
    spec = SolverSpec.parse(VARIANTS.get(text.strip(), text))
    prim = spec.primary
    if prim.kind != "identity":
        prim = replace(
            prim,
            kind=kind if (variant and kind) else prim.kind,
            blocks=prim.blocks if prim.blocks is not None else blocks,
            alpha=prim.alpha if prim.alpha is not None else alpha,
        )
    return replace(spec, primary=prim)


# --- composed solver ------------------------------------------------------------------


@dataclass
class _LevelRuntime:
    desc: Level
    op: LinearOperator
    state: RichardsonState | None
    invocations: int = 0
    iterations: int = 0


@dataclass(eq=False)
class NestedSolver:
    """Executable nested solver; build it with :func:`build` or :func:`build_f3r`."""

    spec: SolverSpec
    replicas: PrecisionReplicas
    primary: BlockJacobiIlu0 | None
    max_cycles: int = 3
    reset_weights_on_restart: bool = False
    levels: list[_LevelRuntime] = field(init=False)
    primary_counter: CountingPreconditioner = field(init=False)

    def __post_init__(self):
        apply = None if self.primary is None else self.primary.apply
        self.primary_counter = CountingPreconditioner(apply)
        self.levels = []
        for desc in self.spec.levels:
            state = None
            if isinstance(desc, Richardson):
                state = RichardsonState(desc.m, c=desc.c, initial_omega=desc.omega)
            op = LinearOperator(self.replicas[desc.matrix], None, desc.vectors)
            self.levels.append(_LevelRuntime(desc, op, state))
        for d, lv in enumerate(self.levels):
            if d + 1 < len(self.levels):
                lv.op._precondition = self._child(d + 1)
            else:
                lv.op._precondition = self.primary_counter

    @property
    def n(self) -> int:
        return self.replicas.n

    @property
    def richardson_states(self) -> list[RichardsonState]:
        return [lv.state for lv in self.levels if lv.state is not None]

    def _child(self, d: int):
        lv = self.levels[d]

        def invoke(v: np.ndarray) -> np.ndarray:
            v = v.astype(lv.desc.vectors.dtype)
            lv.invocations += 1
            try:
                if lv.state is None:
                    res = fgmres_cycle(lv.op, v, lv.desc.m)
                    lv.iterations += res.iterations
                    return res.x
                lv.iterations += lv.desc.m
                return richardson_apply(lv.op, v, lv.state)
            except InnerDivergence as exc:
                if exc.level is None:
                    exc = InnerDivergence(exc.step, d + 1)
                raise exc

        return invoke

    def reset(self) -> None:
        self.primary_counter.count = 0
        for lv in self.levels:
            lv.invocations = lv.iterations = 0
            if lv.state is not None:
                lv.state.reset()

    def solve(self, b: np.ndarray, tol: float = DEFAULT_TOL):
        """Solve A x = b from x = 0; returns ``(x, ConvergenceReport)`` with x at binary64."""
        t0 = time.perf_counter()
        self.reset()
        A64 = self.replicas.a64
        b64 = np.asarray(b, dtype=np.float64)
        if b64.shape != (self.n,):
            raise ValueError(f"right-hand side has shape {b64.shape}, expected ({self.n},)")
        bnorm = float(np.linalg.norm(b64))
        outer = self.levels[0]
        x = np.zeros(self.n, dtype=outer.desc.vectors.dtype)
        history = [0.0 if bnorm == 0 else 1.0]
        cycles: list[list[float]] = []
        converged = bnorm == 0
        reason = None
        if not converged:
            reason = "max iterations"
            try:
                for cycle in range(self.max_cycles):
                    if cycle and self.reset_weights_on_restart:
                        for st in self.richardson_states:
                            st.reset()
                    outer.invocations += 1
                    res = fgmres_cycle(outer.op, b64, outer.desc.m, x0=x, tol=tol, bnorm=bnorm)
                    outer.iterations += res.iterations
                    x = res.x
                    history.extend(h / bnorm for h in res.history[1:])
                    cycles.append([h / bnorm for h in res.history])
                    if _true_residual(A64, x, b64, bnorm) < tol:
                        converged, reason = True, None
                        break
                    if res.iterations == 0:
                        reason = "stagnation"
                        break
            except InnerDivergence as exc:
                reason = str(exc)
        x64 = x.astype(np.float64)
        report = ConvergenceReport(
            converged=converged,
            outer_iterations=outer.iterations,
            precond_invocations=self.primary_counter.count,
            residual_history=history,
            final_true_residual=0.0 if bnorm == 0 else _true_residual(A64, x64, b64, bnorm),
            wall_seconds=time.perf_counter() - t0,
            omegas_final=[st.omegas.tolist() for st in self.richardson_states],
            reason=reason,
            level_iterations=[lv.iterations for lv in self.levels] + [self.primary_counter.count],
            level_invocations=[lv.invocations for lv in self.levels] + [self.primary_counter.count],
            cycle_histories=cycles,
            degenerate_omega_steps=sum(st.degenerate_steps for st in self.richardson_states),
        )
        return x64, report


def _true_residual(A: CsrMatrix, x: np.ndarray, b: np.ndarray, bnorm: float) -> float:
    r = b - spmv(A, x.astype(np.float64), P64)
    return float(np.linalg.norm(r) / bnorm)


def _as_replicas(A) -> PrecisionReplicas:
    if isinstance(A, PrecisionReplicas):
        return A
    if isinstance(A, CsrMatrix):
        return PrecisionReplicas(A.astype(P64) if A.precision is not P64 else A)
    raise TypeError("expected a CsrMatrix or PrecisionReplicas")


def build(spec: SolverSpec | str, A, M: BlockJacobiIlu0 | None = None, max_cycles: int = 3,
          reset_weights_on_restart: bool = False) -> NestedSolver:
    """Compose the solver described by ``spec`` over ``A``.

    ``M`` is the binary64 (or already cast) primary preconditioner; it is
    factorized from the SolverSpec's parameters when omitted, then cast to the
    precision it requests.
    """
    if isinstance(spec, str):
        spec = SolverSpec.parse(spec)
    replicas = _as_replicas(A)
    if max_cycles < 1:
        raise ValueError("max_cycles must be >= 1")
    if spec.primary.kind == "identity":
        M = None
    else:
        if M is None:
            M = factorize(replicas.a64, replace(spec.primary.config(), apply_precision=P64))
        if M.n != replicas.n:
            raise ValueError("preconditioner and matrix sizes differ")
        M = M.cast(spec.primary.precision)
    return NestedSolver(spec, replicas, M, max_cycles, reset_weights_on_restart)


def build_f3r(cfg: F3rConfig, A, M: BlockJacobiIlu0 | None = None, kind: str = "ilu0",
              reset_weights_on_restart: bool = False) -> NestedSolver:
    prim = PrimaryPrecond("ic0" if M is not None and M.symmetric else kind)
    return build(cfg.spec(prim), A, M, cfg.max_cycles, reset_weights_on_restart)


def run(solver: NestedSolver, b: np.ndarray, tol: float = DEFAULT_TOL):
    return solver.solve(b, tol)
