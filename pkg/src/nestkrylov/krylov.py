"""Base iterative solvers: one FGMRES cycle, adaptively weighted Richardson,
and the reference CG / BiCGStab / restarted FGMRES solvers."""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from . import _kernels
from .precision import Precision, compute_precision, store, widen
from .sparse import CsrMatrix, axpy, dot, norm2, residual, spmv

DEFAULT_TOL = 1e-8
DEFAULT_MAX_INVOCATIONS = 19200


class InnerDivergence(FloatingPointError):
    """Non-finite values appeared in an Arnoldi step."""

    def __init__(self, step: int, level: int | None = None):
        self.step = step
        self.level = level
        where = f" at level {level}" if level is not None else ""
        super().__init__(f"inner divergence{where}, step {step}")


class IndefiniteOperator(ArithmeticError):
    pass


class LinearOperator:
    """A matrix at one storage precision paired with a preconditioning action.

    Vectors handled by solvers built on this operator live at ``precision``.
    ``precondition`` may be any callable, including another solver, and need
    not be linear; ``None`` means the identity.
    """

    def __init__(self, A: CsrMatrix, precondition: Callable | None = None, precision: Precision | None = None):
        self.A = A
        self.precision = A.precision if precision is None else Precision.parse(precision)
        self._precondition = precondition

    @property
    def n(self) -> int:
        return self.A.n

    def multiply(self, x: np.ndarray, precision: Precision | None = None) -> np.ndarray:
        return spmv(self.A, x, self.precision if precision is None else precision)

    def precondition(self, v: np.ndarray) -> np.ndarray:
        dt = self.precision.dtype
        if self._precondition is None:
            return v.astype(dt)
        return np.asarray(self._precondition(v)).astype(dt, copy=False)


class CountingPreconditioner:
    """Wraps a preconditioner and counts its invocations."""

    def __init__(self, apply: Callable | None):
        self.apply = apply
        self.count = 0

    def __call__(self, v):
        self.count += 1
        return v.copy() if self.apply is None else self.apply(v)


@dataclass
class ConvergenceReport:
    converged: bool
    outer_iterations: int
    precond_invocations: int
    residual_history: list[float]
    final_true_residual: float
    wall_seconds: float = 0.0
    omegas_final: list[list[float]] = field(default_factory=list)
    reason: str | None = None
    level_iterations: list[int] = field(default_factory=list)
    level_invocations: list[int] = field(default_factory=list)
    cycle_histories: list[list[float]] = field(default_factory=list)
    degenerate_omega_steps: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


class CycleResult(NamedTuple):
    x: np.ndarray
    residual_norm: float
    iterations: int
    history: list[float]
    breakdown: bool


def fgmres_cycle(
    op: LinearOperator,
    b: np.ndarray,
    m: int,
    x0: np.ndarray | None = None,
    tol: float | None = None,
    bnorm: float | None = None,
) -> CycleResult:
    """Run at most ``m`` flexible Arnoldi steps from ``x0``.

    Classical Gram-Schmidt (single pass) builds the basis and Givens rotations
    reduce the Hessenberg matrix.  Vectors and small dense quantities are held
    at ``op.precision``.  With ``tol`` set, the cycle stops as soon as the
    rotated residual estimate drops below ``tol * bnorm``.  ``history`` holds
    the initial residual norm followed by the estimate after every step.
    """
    if m < 1:
        raise ValueError("cycle length must be >= 1")
    p = op.precision
    ct = p.compute_dtype.type
    st = p.dtype.type

    def rnd(s):
        return ct(st(s))

    n = op.n
    b = b.astype(p.dtype, copy=False)
    if x0 is None:
        x0 = np.zeros(n, dtype=p.dtype)
        r = b
    else:
        x0 = x0.astype(p.dtype, copy=False)
        r = residual(op.A, x0, b)
    beta = rnd(norm2(r))
    if bnorm is None:
        bnorm = float(norm2(b))
    history = [float(beta)]
    if beta == 0 or (tol is not None and beta < tol * bnorm):
        return CycleResult(x0.copy(), float(beta), 0, history, False)
    if not np.isfinite(beta):
        raise InnerDivergence(0)

    V = np.empty((m + 1, n), dtype=p.compute_dtype)
    Z = np.empty((m, n), dtype=p.compute_dtype)
    H = np.zeros((m + 1, m), dtype=p.compute_dtype)
    cs = np.zeros(m, dtype=p.compute_dtype)
    sn = np.zeros(m, dtype=p.compute_dtype)
    g = np.zeros(m + 1, dtype=p.compute_dtype)
    g[0] = beta
    V[0] = widen(store(widen(r, p) / beta, p), p)
    eps = np.finfo(p.dtype).eps
    k = 0
    breakdown = False
    # non-finite values are detected explicitly below
    with np.errstate(over="ignore", invalid="ignore"):
        for j in range(m):
            Z[j] = widen(op.precondition(store(V[j], p)), p)
            w = widen(op.multiply(store(Z[j], p)), p)
            wnorm0 = np.sqrt(_kernels.dot(w, w))
            h = np.empty(j + 1, dtype=p.compute_dtype)
            _kernels.dot_rows(V, j + 1, w, h)
            h = widen(store(h, p), p)
            w = widen(store(w - V[: j + 1].T @ h, p), p)
            hn = rnd(np.sqrt(_kernels.dot(w, w)))
            H[: j + 1, j] = h
            H[j + 1, j] = hn
            if not (np.all(np.isfinite(h)) and np.isfinite(hn)):
                raise InnerDivergence(j + 1)
            for i in range(j):
                t = rnd(cs[i] * H[i, j] + sn[i] * H[i + 1, j])
                H[i + 1, j] = rnd(-sn[i] * H[i, j] + cs[i] * H[i + 1, j])
                H[i, j] = t
            denom = rnd(np.hypot(H[j, j], H[j + 1, j]))
            if denom == 0:
                # A z_j vanished: the new direction adds nothing
                breakdown = True
                break
            cs[j] = rnd(H[j, j] / denom)
            sn[j] = rnd(H[j + 1, j] / denom)
            H[j, j] = denom
            H[j + 1, j] = 0
            g[j + 1] = rnd(-sn[j] * g[j])
            g[j] = rnd(cs[j] * g[j])
            k = j + 1
            history.append(float(abs(g[j + 1])))
            if hn <= (j + 1) * eps * wnorm0:
                breakdown = True
                break
            if tol is not None and abs(g[j + 1]) < tol * bnorm:
                break
            if j + 1 < m:
                V[j + 1] = widen(store(w / hn, p), p)

    y = np.zeros(k, dtype=p.compute_dtype)
    for i in range(k - 1, -1, -1):
        y[i] = rnd((g[i] - H[i, i + 1 : k] @ y[i + 1 : k]) / H[i, i])
    x = store(widen(x0, p) + Z[:k].T @ y, p)
    return CycleResult(x, float(abs(g[k])), k, history, breakdown)


# --- Richardson ----------------------------------------------------------------


@dataclass
class RichardsonState:
    """Per-level weights and call counter that persist across invocations.

    ``c=None`` disables weight updates (fixed weights).  ``omega_primes``
    records every locally optimal weight as ``(call, k, value)``.
    """

    m: int
    c: int | None = 64
    initial_omega: float = 1.0
    omega_precision: Precision = Precision.P32
    omegas: np.ndarray = field(init=False)
    c_ntr: int = field(init=False, default=1)
    omega_primes: list[tuple[int, int, float]] = field(init=False, default_factory=list)
    degenerate_steps: int = field(init=False, default=0)

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("Richardson needs m >= 1")
        if self.c is not None and self.c < 1:
            raise ValueError("update cycle c must be >= 1")
        self.reset()

    def reset(self) -> None:
        self.omegas = np.full(self.m, self.initial_omega, dtype=np.float64)
        self.c_ntr = 1
        self.omega_primes = []
        self.degenerate_steps = 0

    @property
    def updating(self) -> bool:
        return self.c is not None and self.c_ntr % self.c == 0


def richardson_apply(op: LinearOperator, v: np.ndarray, state: RichardsonState) -> np.ndarray:
    """``state.m`` Richardson steps on A z = v from z = 0, with adaptive weights.

    On every ``c``-th call the locally optimal weight
    (r, AMr) / (AMr, AMr) is computed for each step at the wider of
    ``state.omega_precision`` and the operator precision, used for that step,
    and folded into the running mean stored in ``state.omegas``.
    """
    p = op.precision
    q = compute_precision(state.omega_precision, p)
    qt = q.dtype.type
    v = v.astype(p.dtype, copy=False)
    z = np.zeros(op.n, dtype=p.dtype)
    update = state.updating
    # number of earlier updates
    prior = (state.c_ntr - 1) // state.c if update else 0
    for k in range(state.m):
        r = v if k == 0 else residual(op.A, z, v)
        u = op.precondition(r)
        omega = state.omegas[k]
        if update:
            w = op.multiply(u, precision=q)
            den = dot(w, w)
            if den == 0 or not np.isfinite(den):
                state.degenerate_steps += 1
            else:
                opt = qt(dot(r.astype(q.dtype), w) / den)
                state.omega_primes.append((state.c_ntr, k, float(opt)))
                state.omegas[k] = float(qt((prior * qt(omega) + opt) / (prior + 1)))
                omega = opt
        z = axpy(omega, u, z)
    state.c_ntr += 1
    return z


# --- reference solvers -----------------------------------------------------------


def _rel(A, x, b, bnorm):
    return float(np.linalg.norm(b - spmv(A, x, Precision.P64)) / bnorm)


def _zero_rhs_report():
    return ConvergenceReport(True, 0, 0, [0.0], 0.0)


def cg_solve(A: CsrMatrix, M: Callable | None, b: np.ndarray, tol: float = DEFAULT_TOL,
             maxiter: int = DEFAULT_MAX_INVOCATIONS):
    """Preconditioned conjugate gradients at binary64.

    ``M`` maps a residual to a preconditioned vector; ``None`` is the identity.
    Convergence is confirmed on the true residual.
    """
    t0 = time.perf_counter()
    Mc = CountingPreconditioner(M)
    b = np.asarray(b, dtype=np.float64)
    x = np.zeros_like(b)
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0:
        return x, _zero_rhs_report()
    r = b.copy()
    z = Mc(r)
    p = z.copy()
    rz = dot(r, z)
    history = [1.0]
    converged = False
    reason = "max iterations"
    it = 0
    while it < maxiter:
        it += 1
        Ap = spmv(A, p)
        pAp = dot(p, Ap)
        if not pAp > 0:
            raise IndefiniteOperator(f"indefinite operator detected at iteration {it} (p^T A p = {pAp})")
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        rel = float(np.linalg.norm(r)) / bnorm
        history.append(rel)
        if rel < tol:
            r = b - spmv(A, x)
            if float(np.linalg.norm(r)) / bnorm < tol:
                converged, reason = True, None
                break
        if it == maxiter:
            break
        z = Mc(r)
        rz_new = dot(r, z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    report = ConvergenceReport(converged, it, Mc.count, history, _rel(A, x, b, bnorm),
                               time.perf_counter() - t0, reason=reason)
    return x, report


def bicgstab_solve(A: CsrMatrix, M: Callable | None, b: np.ndarray, tol: float = DEFAULT_TOL,
                   maxiter: int = DEFAULT_MAX_INVOCATIONS, shadow: np.ndarray | None = None):
    """Right-preconditioned BiCGStab at binary64; two M applications per iteration.

    ``shadow`` overrides the shadow residual (default: the initial residual).
    """
    t0 = time.perf_counter()
    Mc = CountingPreconditioner(M)
    b = np.asarray(b, dtype=np.float64)
    x = np.zeros_like(b)
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0:
        return x, _zero_rhs_report()
    r = b.copy()
    rhat = r.copy() if shadow is None else np.asarray(shadow, dtype=np.float64)
    rho_prev = alpha = omega = 1.0
    v = np.zeros_like(b)
    p = np.zeros_like(b)
    history = [1.0]
    converged = False
    reason = "max iterations"
    eps = np.finfo(np.float64).eps
    it = 0
    while it < maxiter:
        rho = float(dot(rhat, r))
        if abs(rho) <= eps * float(np.linalg.norm(rhat)) * float(np.linalg.norm(r)):
            reason = "breakdown"
            break
        it += 1
        beta = (rho / rho_prev) * (alpha / omega)
        p = r + beta * (p - omega * v)
        phat = Mc(p)
        v = spmv(A, phat)
        alpha = rho / float(dot(rhat, v))
        s = r - alpha * v
        shat = Mc(s)
        t = spmv(A, shat)
        tt = float(dot(t, t))
        omega = float(dot(t, s)) / tt if tt > 0 else 0.0
        x += alpha * phat + omega * shat
        r = s - omega * t
        rho_prev = rho
        rel = float(np.linalg.norm(r)) / bnorm
        history.append(rel)
        if rel < tol:
            r = b - spmv(A, x)
            if float(np.linalg.norm(r)) / bnorm < tol:
                converged, reason = True, None
                break
        if omega == 0.0:
            reason = "breakdown"
            break
    report = ConvergenceReport(converged, it, Mc.count, history, _rel(A, x, b, bnorm),
                               time.perf_counter() - t0, reason=reason)
    return x, report


def fgmres_restarted(A: CsrMatrix, M: Callable | None, b: np.ndarray, m: int = 64, tol: float = DEFAULT_TOL,
                     max_restarts: int | None = None, max_invocations: int = DEFAULT_MAX_INVOCATIONS):
    """FGMRES(m) at binary64, stopped at ``max_invocations`` preconditioner calls
    or after ``max_restarts`` cycles, whichever comes first."""
    t0 = time.perf_counter()
    Mc = CountingPreconditioner(M)
    op = LinearOperator(A, Mc, Precision.P64)
    b = np.asarray(b, dtype=np.float64)
    x = np.zeros_like(b)
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0:
        return x, _zero_rhs_report()
    history = [1.0]
    cycles = []
    converged = False
    reason = "max iterations"
    steps = 0
    try:
        while Mc.count < max_invocations:
            res = fgmres_cycle(op, b, min(m, max_invocations - Mc.count), x0=x, tol=tol, bnorm=bnorm)
            x = res.x
            steps += res.iterations
            history.extend(h / bnorm for h in res.history[1:])
            cycles.append([h / bnorm for h in res.history])
            if _rel(A, x, b, bnorm) < tol:
                converged, reason = True, None
                break
            if res.iterations == 0:
                reason = "stagnation"
                break
            if max_restarts is not None and len(cycles) >= max_restarts:
                break
    except InnerDivergence as exc:
        reason = str(exc)
    report = ConvergenceReport(converged, steps, Mc.count, history, _rel(A, x, b, bnorm),
                               time.perf_counter() - t0, reason=reason, cycle_histories=cycles)
    return x, report
