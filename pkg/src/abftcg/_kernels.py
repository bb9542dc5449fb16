"""Compiled inner loops shared by the plain and protected products.

All reductions are strict left-to-right (recursive summation); nothing here
may be reassociated, so ``fastmath`` stays off.  Every kernel tolerates a
corrupted CSR structure: out-of-range row pointers are clamped and
out-of-range column indices contribute nothing, and both raise the returned
guard flag.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _row_bounds(rowptr, i, nnz):
    start = rowptr[i]
    end = rowptr[i + 1]
    guard = False
    if start < 0:
        start = 0
        guard = True
    elif start > nnz:
        start = nnz
        guard = True
    if end < 0:
        end = 0
        guard = True
    elif end > nnz:
        end = nnz
        guard = True
    if end < start:
        end = start
        guard = True
    return start, end, guard


@njit(cache=True)
def csr_matvec(rowptr, colid, val, x, y):
    n = y.shape[0]
    nnz = val.shape[0]
    guard = False
    for i in range(n):
        start, end, g = _row_bounds(rowptr, i, nnz)
        guard = guard or g
        acc = 0.0
        for j in range(start, end):
            c = colid[j]
            if c < 0 or c >= n:
                guard = True
                continue
            acc += val[j] * x[c]
        y[i] = acc
    return guard


@njit(cache=True)
def csr_matvec_split(rowptr, colid, val, mask, x, y, yhat):
    # entries flagged in ``mask`` accumulate into yhat, the rest into y
    n = y.shape[0]
    nnz = val.shape[0]
    guard = False
    touched = 0
    for i in range(n):
        start, end, g = _row_bounds(rowptr, i, nnz)
        guard = guard or g
        acc = 0.0
        acch = 0.0
        for j in range(start, end):
            c = colid[j]
            if c < 0 or c >= n:
                guard = True
                continue
            if mask[j]:
                acch += val[j] * x[c]
                touched += 1
            else:
                acc += val[j] * x[c]
        y[i] = acc
        yhat[i] = acch
    return guard, touched


@njit(cache=True)
def csr_row(rowptr, colid, val, x, i):
    n = x.shape[0]
    start, end, guard = _row_bounds(rowptr, i, val.shape[0])
    acc = 0.0
    for j in range(start, end):
        c = colid[j]
        if c < 0 or c >= n:
            continue
        acc += val[j] * x[c]
    return acc


@njit(cache=True)
def dot(u, v):
    acc = 0.0
    for i in range(u.shape[0]):
        acc += u[i] * v[i]
    return acc


@njit(cache=True)
def weighted_sums(W, v):
    # W is n x k; returns W^T v, each component summed in index order
    n, k = W.shape
    out = np.zeros(k)
    for l in range(k):
        acc = 0.0
        for i in range(n):
            acc += W[i, l] * v[i]
        out[l] = acc
    return out


@njit(cache=True)
def column_checksums(rowptr, colid, val, W, n):
    """C[l, j] = sum_i W[i, l] * a_ij, accumulated in row order."""
    k = W.shape[1]
    nnz = val.shape[0]
    C = np.zeros((k, n))
    for i in range(n):
        start, end, g = _row_bounds(rowptr, i, nnz)
        for j in range(start, end):
            c = colid[j]
            if c < 0 or c >= n:
                continue
            for l in range(k):
                C[l, c] += W[i, l] * val[j]
    return C


@njit(cache=True)
def column_checksum_one(rowptr, colid, val, W, n, col):
    # same accumulation order as column_checksums, restricted to one column
    k = W.shape[1]
    nnz = val.shape[0]
    out = np.zeros(k)
    for i in range(n):
        start, end, g = _row_bounds(rowptr, i, nnz)
        for j in range(start, end):
            if colid[j] == col:
                for l in range(k):
                    out[l] += W[i, l] * val[j]
    return out


@njit(cache=True)
def abs_column_sums(rowptr, colid, val, n):
    out = np.zeros(n)
    for i in range(n):
        for j in range(rowptr[i], rowptr[i + 1]):
            out[colid[j]] += abs(val[j])
    return out
