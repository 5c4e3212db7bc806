"""Block-Jacobi ILU(0) / IC(0) preconditioner with diagonal boosting."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import _kernels
from .precision import Precision, compute_precision, store, widen
from .sparse import CsrMatrix, from_coo


class FactorizationError(ValueError):
    pass


@dataclass(frozen=True)
class IluConfig:
    nblocks: int = 1
    alpha: float = 1.0
    symmetric: bool = False  # IC(0) instead of ILU(0)
    apply_precision: Precision = Precision.P64

    def __post_init__(self):
        if self.nblocks < 1:
            raise ValueError("nblocks must be positive")
        if not self.alpha >= 1.0:
            raise ValueError("alpha must be >= 1")
        object.__setattr__(self, "apply_precision", Precision.parse(self.apply_precision))


def block_partition(n: int, nblocks: int) -> np.ndarray:
    """Offsets of ``nblocks`` contiguous row ranges; leading blocks take the remainder."""
    if not 1 <= nblocks <= n:
        raise ValueError(f"nblocks={nblocks} must be in [1, {n}]")
    sizes = np.full(nblocks, n // nblocks, dtype=np.int64)
    sizes[: n % nblocks] += 1
    return np.concatenate([[0], np.cumsum(sizes)])


@dataclass(eq=False)
class BlockJacobiIlu0:
    """Incomplete factors restricted to the diagonal blocks of A.

    For ILU(0) ``factor`` holds the strict unit-lower part L and U (with its
    diagonal) in one CSR pattern; for IC(0) it holds the lower factor L with
    the diagonal stored last in every row.
    """

    block_ptr: np.ndarray
    factor: CsrMatrix
    diag: np.ndarray | None
    symmetric: bool
    alpha: float = 1.0

    @property
    def n(self) -> int:
        return self.factor.n

    @property
    def nblocks(self) -> int:
        return len(self.block_ptr) - 1

    @property
    def apply_precision(self) -> Precision:
        return self.factor.precision

    @property
    def block_ranges(self) -> list[tuple[int, int]]:
        return [(int(a), int(b)) for a, b in zip(self.block_ptr[:-1], self.block_ptr[1:])]

    def cast(self, p: Precision) -> "BlockJacobiIlu0":
        """Copy with factor values rounded to ``p`` for application."""
        p = Precision.parse(p)
        if p is self.apply_precision:
            return self
        factor = self.factor.astype(p)
        pivots = factor.values[self._pivot_positions()]
        bad = np.flatnonzero(~np.isfinite(pivots) | (pivots == 0))
        if bad.size:
            row = int(bad[0])
            raise FactorizationError(
                f"pivot of row {row} (block {self._block_of(row)}) is {pivots[row]} after rounding to {p.label}"
            )
        return replace(self, factor=factor)

    def apply(self, r: np.ndarray, precision: Precision | None = None) -> np.ndarray:
        """Return z ~= A^-1 r; the result is stored at ``precision`` (default: r's)."""
        if r.shape[0] != self.n:
            raise ValueError(f"dimension mismatch: preconditioner is {self.n}, vector is {r.shape[0]}")
        rp = Precision.of(r)
        cp = compute_precision(self.apply_precision, rp)
        dt = cp.compute_dtype
        out = np.empty(self.n, dtype=dt)
        f = self.factor
        if self.symmetric:
            _kernels.ic_solve(self.block_ptr, f.row_ptr, f.col_idx, f.values_as(dt), widen(r, cp), out)
        else:
            _kernels.lu_solve(self.block_ptr, f.row_ptr, f.col_idx, f.values_as(dt), self.diag, widen(r, cp), out)
        return store(out, rp if precision is None else Precision(precision))

    __call__ = apply

    def lower(self) -> CsrMatrix:
        """L as a CSR matrix (unit diagonal made explicit for ILU(0))."""
        f = self.factor.astype(Precision.P64)
        rows, cols = f.row_ids(), f.col_idx.astype(np.int64)
        if self.symmetric:
            return f
        keep = cols < rows
        n = self.n
        return from_coo(n, np.r_[rows[keep], np.arange(n)], np.r_[cols[keep], np.arange(n)],
                        np.r_[f.values[keep], np.ones(n)])

    def upper(self) -> CsrMatrix:
        """U for ILU(0); L^T for IC(0)."""
        f = self.factor.astype(Precision.P64)
        if self.symmetric:
            return f.transpose()
        rows, cols = f.row_ids(), f.col_idx.astype(np.int64)
        keep = cols >= rows
        return from_coo(self.n, rows[keep], cols[keep], f.values[keep])

    def _pivot_positions(self) -> np.ndarray:
        if self.symmetric:
            return self.factor.row_ptr[1:].astype(np.int64) - 1
        return self.diag

    def _block_of(self, row: int) -> int:
        return int(np.searchsorted(self.block_ptr, row, side="right") - 1)


def factorize(A: CsrMatrix, cfg: IluConfig) -> BlockJacobiIlu0:
    """Factor each diagonal block of ``A`` (diagonal multiplied by ``cfg.alpha``)
    at binary64, then round the factors to ``cfg.apply_precision``."""
    if A.precision is not Precision.P64:
        raise ValueError("factorization expects a binary64 matrix")
    n = A.n
    block_ptr = block_partition(n, cfg.nblocks)
    block_of = np.searchsorted(block_ptr, np.arange(n), side="right") - 1
    rows = A.row_ids()
    cols = A.col_idx.astype(np.int64)
    keep = block_of[rows] == block_of[cols]
    if cfg.symmetric:
        keep &= cols <= rows
    rows, cols, vals = rows[keep], cols[keep], A.values[keep].astype(np.float64)
    on_diag = rows == cols
    has_diag = np.zeros(n, dtype=bool)
    has_diag[rows[on_diag]] = True
    missing = np.flatnonzero(~has_diag)
    if missing.size:
        i = int(missing[0])
        raise FactorizationError(f"missing diagonal entry in block {int(block_of[i])}, row {i}")
    vals = np.where(on_diag, vals * cfg.alpha, vals)
    factor = from_coo(n, rows, cols, vals, sum_duplicates=False)
    fvals = factor.values.copy()
    if cfg.symmetric:
        failed = _kernels.ic0_inplace(factor.row_ptr, factor.col_idx, fvals)
        diag = None
        kind = "non-positive"
    else:
        fr = factor.row_ids()
        diag = np.flatnonzero(fr == factor.col_idx.astype(np.int64)).astype(np.int64)
        failed = _kernels.ilu0_inplace(factor.row_ptr, factor.col_idx, fvals, diag)
        kind = "zero"
    if failed >= 0:
        raise FactorizationError(f"{kind} pivot in block {int(block_of[failed])}, row {failed}")
    factor = CsrMatrix(n, factor.row_ptr, factor.col_idx, fvals)
    m = BlockJacobiIlu0(block_ptr, factor, diag, cfg.symmetric, cfg.alpha)
    return m.cast(cfg.apply_precision)
