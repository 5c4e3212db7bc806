"""Compiled inner loops.

Every kernel works on arrays that already live in a compute dtype (float32 or
float64); callers widen binary16 storage before the call and round results
afterwards.  Row- and block-parallel loops never share outputs, so results do
not depend on the thread count.  Reductions are sequential in index order.
"""
import numba as nb
import numpy as np


@nb.njit(cache=True, parallel=True)
def spmv(row_ptr, col_idx, values, x, out):
    n = out.shape[0]
    for i in nb.prange(n):
        acc = out.dtype.type(0)
        for k in range(row_ptr[i], row_ptr[i + 1]):
            acc += values[k] * x[col_idx[k]]
        out[i] = acc


@nb.njit(cache=True)
def dot(x, y):
    acc = x.dtype.type(0)
    for i in range(x.shape[0]):
        acc += x[i] * y[i]
    return acc


@nb.njit(cache=True)
def dot_rows(V, count, w, out):
    """out[i] = <V[i], w> for i < count."""
    for i in range(count):
        acc = w.dtype.type(0)
        row = V[i]
        for k in range(w.shape[0]):
            acc += row[k] * w[k]
        out[i] = acc


@nb.njit(cache=True)
def ilu0_inplace(row_ptr, col_idx, values, diag):
    """ILU(0) of a CSR matrix with sorted rows.  Returns -1 or the failing row."""
    n = row_ptr.shape[0] - 1
    marker = np.full(n, -1, np.int64)
    for i in range(n):
        for k in range(row_ptr[i], row_ptr[i + 1]):
            marker[col_idx[k]] = k
        for kk in range(row_ptr[i], diag[i]):
            k = col_idx[kk]
            pivot = values[diag[k]]
            values[kk] /= pivot
            lik = values[kk]
            for jj in range(diag[k] + 1, row_ptr[k + 1]):
                pos = marker[col_idx[jj]]
                if pos >= 0:
                    values[pos] -= lik * values[jj]
        for k in range(row_ptr[i], row_ptr[i + 1]):
            marker[col_idx[k]] = -1
        if values[diag[i]] == 0.0 or not np.isfinite(values[diag[i]]):
            return i
    return -1


@nb.njit(cache=True)
def ic0_inplace(row_ptr, col_idx, values):
    """IC(0) of a lower-triangular CSR pattern (diagonal last in each row).

    Returns -1 or the row whose pivot is not positive.
    """
    n = row_ptr.shape[0] - 1
    marker = np.full(n, -1, np.int64)
    for i in range(n):
        start = row_ptr[i]
        last = row_ptr[i + 1] - 1
        for k in range(start, last):
            marker[col_idx[k]] = k
        for kk in range(start, last):
            k = col_idx[kk]
            s = values[kk]
            for jj in range(row_ptr[k], row_ptr[k + 1] - 1):
                pos = marker[col_idx[jj]]
                if pos >= 0:
                    s -= values[pos] * values[jj]
            values[kk] = s / values[row_ptr[k + 1] - 1]
        d = values[last]
        for k in range(start, last):
            d -= values[k] * values[k]
            marker[col_idx[k]] = -1
        if not d > 0.0:
            return i
        values[last] = np.sqrt(d)
    return -1


@nb.njit(cache=True, parallel=True)
def lu_solve(block_ptr, row_ptr, col_idx, values, diag, r, out):
    """Solve (LU) out = r blockwise; L is unit lower, U holds the diagonal."""
    nblocks = block_ptr.shape[0] - 1
    for b in nb.prange(nblocks):
        lo = block_ptr[b]
        hi = block_ptr[b + 1]
        for i in range(lo, hi):
            acc = r[i]
            for k in range(row_ptr[i], diag[i]):
                acc -= values[k] * out[col_idx[k]]
            out[i] = acc
        for i in range(hi - 1, lo - 1, -1):
            acc = out[i]
            for k in range(diag[i] + 1, row_ptr[i + 1]):
                acc -= values[k] * out[col_idx[k]]
            out[i] = acc / values[diag[i]]


@nb.njit(cache=True, parallel=True)
def ic_solve(block_ptr, row_ptr, col_idx, values, r, out):
    """Solve (L L^T) out = r blockwise with L stored row-wise, diagonal last."""
    nblocks = block_ptr.shape[0] - 1
    for b in nb.prange(nblocks):
        lo = block_ptr[b]
        hi = block_ptr[b + 1]
        for i in range(lo, hi):
            acc = r[i]
            last = row_ptr[i + 1] - 1
            for k in range(row_ptr[i], last):
                acc -= values[k] * out[col_idx[k]]
            out[i] = acc / values[last]
        for i in range(hi - 1, lo - 1, -1):
            last = row_ptr[i + 1] - 1
            zi = out[i] / values[last]
            out[i] = zi
            for k in range(row_ptr[i], last):
                out[col_idx[k]] -= values[k] * zi
