"""CSR storage at three precisions, SpMV and BLAS-1 kernels, Matrix Market I/O,
HPCG/HPGMP stencil generation and symmetric diagonal scaling."""
from __future__ import annotations

import io
import os
import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import IO

import numpy as np

from . import _kernels
from .precision import Precision, compute_precision, store, widen

INDEX_DTYPE = np.uint32
_INDEX_LIMIT = 2**31


class MatrixMarketError(ValueError):
    pass


class ScalingError(ValueError):
    pass


@dataclass(eq=False)
class CsrMatrix:
    """Square CSR matrix with 32-bit indices and values at one precision."""

    n: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if self.n >= _INDEX_LIMIT or len(self.values) >= _INDEX_LIMIT:
            raise ValueError("matrix too large for 32-bit indices")
        self.row_ptr = np.ascontiguousarray(self.row_ptr, dtype=INDEX_DTYPE)
        self.col_idx = np.ascontiguousarray(self.col_idx, dtype=INDEX_DTYPE)
        self.values = np.ascontiguousarray(self.values)
        Precision.of(self.values)
        if self.row_ptr.shape != (self.n + 1,) or self.col_idx.shape != self.values.shape:
            raise ValueError("inconsistent CSR array shapes")

    @property
    def nnz(self) -> int:
        return int(self.values.shape[0])

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.n)

    @property
    def precision(self) -> Precision:
        return Precision.of(self.values)

    @cached_property
    def _compute_values(self) -> np.ndarray:
        return widen(self.values, self.precision)

    def values_as(self, dtype) -> np.ndarray:
        dtype = np.dtype(dtype)
        if dtype == self._compute_values.dtype:
            return self._compute_values
        return self.values.astype(dtype)

    def astype(self, p: Precision) -> "CsrMatrix":
        """Same pattern with values rounded to ``p`` (shares index arrays)."""
        with np.errstate(over="ignore"):  # out-of-range values become +-inf
            values = self.values.astype(Precision(p).dtype)
        return CsrMatrix(self.n, self.row_ptr, self.col_idx, values)

    def row_ids(self) -> np.ndarray:
        return np.repeat(np.arange(self.n, dtype=np.int64), np.diff(self.row_ptr.astype(np.int64)))

    def diagonal(self) -> np.ndarray:
        d = np.zeros(self.n, dtype=self.values.dtype)
        rows = self.row_ids()
        on = rows == self.col_idx
        d[rows[on]] = self.values[on]
        return d

    def validate(self) -> None:
        rp = self.row_ptr.astype(np.int64)
        if rp[0] != 0 or rp[-1] != self.nnz or np.any(np.diff(rp) < 0):
            raise ValueError("row_ptr must start at 0, end at nnz and be non-decreasing")
        if self.nnz and int(self.col_idx.max()) >= self.n:
            raise ValueError("column index out of range")
        cols = self.col_idx.astype(np.int64)
        same_row = self.row_ids()[1:] == self.row_ids()[:-1]
        if np.any(np.diff(cols)[same_row] <= 0):
            raise ValueError("column indices must be strictly increasing within a row")

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n, self.n), dtype=self.values.dtype)
        out[self.row_ids(), self.col_idx.astype(np.int64)] = self.values
        return out

    def to_scipy(self):
        import scipy.sparse as sp

        return sp.csr_matrix(
            (self.values.astype(np.float64), self.col_idx.astype(np.int64), self.row_ptr.astype(np.int64)),
            shape=self.shape,
        )

    def transpose(self) -> "CsrMatrix":
        return from_coo(self.n, self.col_idx, self.row_ids(), self.values)

    def is_symmetric(self, rtol: float = 0.0) -> bool:
        t = self.transpose()
        if not (np.array_equal(t.row_ptr, self.row_ptr) and np.array_equal(t.col_idx, self.col_idx)):
            return False
        scale = np.max(np.abs(self.values)) if self.nnz else 0.0
        return bool(np.all(np.abs(t.values - self.values) <= rtol * scale))

    @classmethod
    def from_dense(cls, dense, precision: Precision = Precision.P64) -> "CsrMatrix":
        dense = np.asarray(dense, dtype=np.float64)
        if dense.ndim != 2 or dense.shape[0] != dense.shape[1]:
            raise ValueError("dense matrix must be square")
        rows, cols = np.nonzero(dense)
        return from_coo(dense.shape[0], rows, cols, dense[rows, cols]).astype(precision)

    @classmethod
    def identity(cls, n: int, precision: Precision = Precision.P64) -> "CsrMatrix":
        idx = np.arange(n)
        return cls(n, np.arange(n + 1), idx, np.ones(n, dtype=Precision(precision).dtype))


def from_coo(n: int, rows, cols, values, sum_duplicates: bool = True) -> CsrMatrix:
    """Build CSR from coordinates; rows are sorted by column, duplicates summed."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    values = np.asarray(values)
    order = np.lexsort((cols, rows))
    rows, cols, values = rows[order], cols[order], values[order]
    if sum_duplicates and len(rows):
        first = np.ones(len(rows), dtype=bool)
        first[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
        group = np.cumsum(first) - 1
        summed = np.zeros(int(group[-1]) + 1, dtype=np.float64)
        np.add.at(summed, group, values.astype(np.float64))
        rows, cols = rows[first], cols[first]
        values = summed.astype(values.dtype)
    row_ptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n), out=row_ptr[1:])
    return CsrMatrix(n, row_ptr, cols, values)


@dataclass(eq=False)
class PrecisionReplicas:
    """One matrix held at binary64, binary32 and binary16 simultaneously."""

    a64: CsrMatrix
    a32: CsrMatrix = field(init=False)
    a16: CsrMatrix = field(init=False)

    def __post_init__(self):
        if self.a64.precision is not Precision.P64:
            raise ValueError("replicas are built from a binary64 matrix")
        self.a32 = self.a64.astype(Precision.P32)
        self.a16 = self.a64.astype(Precision.P16)

    @property
    def n(self) -> int:
        return self.a64.n

    def __getitem__(self, p: Precision) -> CsrMatrix:
        return {Precision.P64: self.a64, Precision.P32: self.a32, Precision.P16: self.a16}[Precision(p)]


# --- kernels -------------------------------------------------------------------


def _check_len(*arrays):
    n = arrays[0].shape[0]
    for a in arrays[1:]:
        if a.shape[0] != n:
            raise ValueError(f"dimension mismatch: {n} vs {a.shape[0]}")


def spmv(A: CsrMatrix, x: np.ndarray, precision: Precision | None = None) -> np.ndarray:
    """y = A x computed at the wider of A's and x's precision, stored at ``precision``.

    ``precision`` defaults to the precision of ``x``.
    """
    if x.shape[0] != A.n:
        raise ValueError(f"dimension mismatch: matrix is {A.n}, vector is {x.shape[0]}")
    xp = Precision.of(x)
    cp = compute_precision(A.precision, xp)
    dt = cp.compute_dtype
    out = np.empty(A.n, dtype=dt)
    _kernels.spmv(A.row_ptr, A.col_idx, A.values_as(dt), widen(x, cp), out)
    return store(out, xp if precision is None else Precision(precision))


def residual(A: CsrMatrix, x: np.ndarray, b: np.ndarray, precision: Precision | None = None) -> np.ndarray:
    """b - A x at the compute precision of the operands."""
    return axpy(-1.0, spmv(A, x, compute_precision(Precision.of(x), Precision.of(b))), b, precision)


def dot(x: np.ndarray, y: np.ndarray):
    """Inner product accumulated sequentially at the compute precision.

    Returns a scalar rounded to the compute precision (binary16 when both
    operands are binary16).
    """
    _check_len(x, y)
    cp = compute_precision(Precision.of(x), Precision.of(y))
    value = _kernels.dot(widen(x, cp), widen(y, cp))
    return cp.dtype.type(value)


def norm2(x: np.ndarray):
    p = Precision.of(x)
    xc = widen(x, p)
    return p.dtype.type(np.sqrt(p.compute_dtype.type(_kernels.dot(xc, xc))))


def axpy(alpha, x: np.ndarray, y: np.ndarray, precision: Precision | None = None) -> np.ndarray:
    """alpha * x + y, stored at ``precision`` (default: y's precision)."""
    _check_len(x, y)
    cp = compute_precision(Precision.of(x), Precision.of(y))
    dt = cp.compute_dtype
    out = widen(x, cp) * dt.type(alpha)
    out += widen(y, cp)
    return store(out, Precision.of(y) if precision is None else Precision(precision))


def scale(alpha, x: np.ndarray) -> np.ndarray:
    p = Precision.of(x)
    return store(widen(x, p) * p.compute_dtype.type(alpha), p)


def copy(x: np.ndarray, precision: Precision | None = None) -> np.ndarray:
    """Copy of ``x``, optionally converted to ``precision``."""
    if precision is None:
        return x.copy()
    return x.astype(Precision(precision).dtype)


# --- Matrix Market -------------------------------------------------------------

_HEADER = re.compile(r"%%matrixmarket\s+matrix\s+coordinate\s+(real|integer|pattern)\s+(general|symmetric)\s*$")


def read_matrix_market(source: str | os.PathLike | IO[str]) -> CsrMatrix:
    """Parse a coordinate-format Matrix Market file into a binary64 CSR matrix."""
    if isinstance(source, (str, os.PathLike)):
        with open(source) as fh:
            return read_matrix_market(fh)
    header = source.readline()
    m = _HEADER.match(header.strip().lower())
    if m is None:
        raise MatrixMarketError(f"malformed header: {header.strip()!r}")
    field_kind, symmetry = m.groups()
    line = source.readline()
    while line and (line.startswith("%") or not line.strip()):
        line = source.readline()
    try:
        nrows, ncols, nnz = (int(tok) for tok in line.split())
    except ValueError:
        raise MatrixMarketError(f"malformed size line: {line.strip()!r}") from None
    if nrows != ncols:
        raise MatrixMarketError(f"matrix is not square ({nrows} x {ncols})")
    ncol_expected = 2 if field_kind == "pattern" else 3
    body = [ln for ln in source.read().splitlines() if ln.strip() and not ln.startswith("%")]
    if len(body) != nnz:
        raise MatrixMarketError(f"expected {nnz} entries, found {len(body)}")
    if nnz:
        data = np.loadtxt(io.StringIO("\n".join(body)), ndmin=2, dtype=np.float64)
        if data.shape[1] < ncol_expected:
            raise MatrixMarketError("entry lines have too few fields")
        rows = data[:, 0].astype(np.int64) - 1
        cols = data[:, 1].astype(np.int64) - 1
        vals = np.ones(nnz) if field_kind == "pattern" else data[:, 2]
    else:
        rows = cols = np.zeros(0, dtype=np.int64)
        vals = np.zeros(0)
    bad = (rows < 0) | (rows >= nrows) | (cols < 0) | (cols >= ncols)
    if np.any(bad):
        k = int(np.argmax(bad))
        raise MatrixMarketError(f"index out of bounds: entry ({rows[k] + 1},{cols[k] + 1}) in a {nrows}x{ncols} matrix")
    if symmetry == "symmetric":
        off = rows != cols
        rows, cols, vals = (np.concatenate([rows, cols[off]]), np.concatenate([cols, rows[off]]),
                            np.concatenate([vals, vals[off]]))
    return from_coo(nrows, rows, cols, vals.astype(np.float64))


def write_matrix_market(A: CsrMatrix, target: str | os.PathLike | IO[str]) -> None:
    if isinstance(target, (str, os.PathLike)):
        with open(target, "w") as fh:
            return write_matrix_market(A, fh)
    target.write("%%MatrixMarket matrix coordinate real general\n")
    target.write(f"{A.n} {A.n} {A.nnz}\n")
    rows = A.row_ids() + 1
    cols = A.col_idx.astype(np.int64) + 1
    vals = A.values.astype(np.float64)
    target.writelines(f"{r} {c} {v!r}\n" for r, c, v in zip(rows.tolist(), cols.tolist(), vals.tolist()))


# --- stencil generation ----------------------------------------------------------


@dataclass(frozen=True)
class StencilSpec:
    """27-point stencil problem on a 2^lx x 2^ly x 2^lz grid.

    ``beta`` = 0 gives HPCG matrices; ``beta`` > 0 makes the z-coupling
    non-symmetric as in HPGMP.
    """

    log2_nx: int
    log2_ny: int
    log2_nz: int
    beta: float = 0.0

    def __post_init__(self):
        for e in (self.log2_nx, self.log2_ny, self.log2_nz):
            if not 1 <= e <= 10:
                raise ValueError(f"grid exponent {e} outside [1, 10]")
        if not 0.0 <= self.beta < 1.0:
            raise ValueError(f"beta={self.beta} outside [0, 1)")

    @property
    def name(self) -> str:
        kind = "hpcg" if self.beta == 0 else "hpgmp"
        return f"{kind}_{self.log2_nx}_{self.log2_ny}_{self.log2_nz}"

    @classmethod
    def parse(cls, text: str, hpgmp_beta: float = 0.5) -> "StencilSpec":
        m = re.fullmatch(r"(hpcg|hpgmp)_(\d+)_(\d+)_(\d+)", text.strip().lower())
        if m is None:
            raise ValueError(f"bad stencil name {text!r}; expected hpcg_X_Y_Z or hpgmp_X_Y_Z")
        kind, *dims = m.groups()
        return cls(*(int(d) for d in dims), beta=0.0 if kind == "hpcg" else hpgmp_beta)


def generate_stencil(spec: StencilSpec) -> CsrMatrix:
    """Assemble the stencil matrix with lexicographic (x fastest) numbering."""
    nx, ny, nz = 1 << spec.log2_nx, 1 << spec.log2_ny, 1 << spec.log2_nz
    n = nx * ny * nz
    z, y, x = np.meshgrid(np.arange(nz), np.arange(ny), np.arange(nx), indexing="ij")
    x, y, z = x.ravel(), y.ravel(), z.ravel()
    row = np.arange(n, dtype=np.int64)
    rows, cols, vals = [], [], []
    for dz in (-1, 0, 1):
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                xx, yy, zz = x + dx, y + dy, z + dz
                ok = (xx >= 0) & (xx < nx) & (yy >= 0) & (yy < ny) & (zz >= 0) & (zz < nz)
                if (dx, dy, dz) == (0, 0, 0):
                    v = 26.0
                elif (dx, dy) == (0, 0) and dz == 1:
                    v = -1.0 + spec.beta
                elif (dx, dy) == (0, 0) and dz == -1:
                    v = -1.0 - spec.beta
                else:
                    v = -1.0
                rows.append(row[ok])
                cols.append((xx + nx * (yy + ny * zz))[ok])
                vals.append(np.full(int(ok.sum()), v))
    return from_coo(n, np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), sum_duplicates=False)


# --- scaling ---------------------------------------------------------------------


def diagonal_scale(A: CsrMatrix, b: np.ndarray | None = None):
    """Symmetric scaling D^-1/2 A D^-1/2 with D = diag(|a_ii|).

    Returns ``(A_scaled, b_scaled, d)`` where ``d = diag(D^-1/2)``; the
    solution of the original system is ``d * x_scaled``.
    """
    if A.precision is not Precision.P64:
        raise ValueError("scaling expects a binary64 matrix")
    d_abs = np.abs(A.diagonal())
    zero = np.flatnonzero(d_abs == 0)
    if zero.size:
        raise ScalingError(f"zero or missing diagonal entry in row {int(zero[0]) + 1}")
    d = 1.0 / np.sqrt(d_abs)
    # one rounding per entry; the diagonal becomes exactly +-1
    vals = A.values / np.sqrt(d_abs[A.row_ids()] * d_abs[A.col_idx.astype(np.int64)])
    scaled = CsrMatrix(A.n, A.row_ptr, A.col_idx, vals)
    b_scaled = None if b is None else d * np.asarray(b, dtype=np.float64)
    return scaled, b_scaled, d

