"""Compressed sparse row matrices, Matrix Market I/O, and the reference product."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse as sp

from . import _kernels

__all__ = [
    "CsrMatrix",
    "from_coo",
    "from_scipy",
    "load_matrix_market",
    "write_matrix_market",
    "spmxv_plain",
    "generate_test_matrix",
    "LAPLACIAN_SHIFT",
]

# Diagonal shift that makes the grid Laplacian definite.  A power of two keeps
# the shifted diagonal exactly representable.
LAPLACIAN_SHIFT = 2.0 ** -10


@dataclass
class CsrMatrix:
    """Square matrix in CSR form with 0-based ``rowptr`` and ``colid``.

    ``rowptr`` and ``colid`` are int64 so that every stored word is 64 bits
    wide, which is what the fault injector flips.
    """

    n: int
    rowptr: np.ndarray
    colid: np.ndarray
    val: np.ndarray

    def __post_init__(self):
        self.rowptr = np.ascontiguousarray(self.rowptr, dtype=np.int64)
        self.colid = np.ascontiguousarray(self.colid, dtype=np.int64)
        self.val = np.ascontiguousarray(self.val, dtype=np.float64)
        self.n = int(self.n)
        self.check()

    @property
    def nnz(self) -> int:
        return int(self.val.shape[0])

    def check(self) -> None:
        """Raise ``ValueError`` unless the canonical CSR invariants hold."""
        n, rp, ci = self.n, self.rowptr, self.colid
        if n < 1:
            raise ValueError("matrix order must be positive")
        if rp.shape != (n + 1,):
            raise ValueError(f"rowptr must have length {n + 1}, got {rp.shape}")
        if ci.shape != self.val.shape:
            raise ValueError("colid and val lengths differ")
        if rp[0] != 0 or rp[-1] != ci.shape[0]:
            raise ValueError("rowptr must start at 0 and end at nnz")
        if np.any(np.diff(rp) < 0):
            raise ValueError("rowptr must be non-decreasing")
        if ci.size and (ci.min() < 0 or ci.max() >= n):
            raise ValueError("column index out of range")
        # strictly increasing columns inside each row
        if ci.size > 1:
            step = np.diff(ci)
            row_starts = np.zeros(ci.size, dtype=bool)
            row_starts[rp[1:-1][rp[1:-1] < ci.size]] = True
            if np.any((step <= 0) & ~row_starts[1:]):
                raise ValueError("column indices must be strictly increasing within a row")

    def copy(self) -> "CsrMatrix":
        return CsrMatrix(self.n, self.rowptr.copy(), self.colid.copy(), self.val.copy())

    def to_scipy(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.val, self.colid, self.rowptr), shape=(self.n, self.n))

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n, self.n))
        for i in range(self.n):
            for j in range(self.rowptr[i], self.rowptr[i + 1]):
                out[i, self.colid[j]] = self.val[j]
        return out

    def norm1(self) -> float:
        """Largest absolute column sum."""
        if self.nnz == 0:
            return 0.0
        return float(_kernels.abs_column_sums(self.rowptr, self.colid, self.val, self.n).max())

    def column_sums(self) -> np.ndarray:
        ones = np.ones((self.n, 1))
        return _kernels.column_checksums(self.rowptr, self.colid, self.val, ones, self.n)[0]

    def transpose(self) -> "CsrMatrix":
        return from_scipy(self.to_scipy().T)

    def diagonal(self) -> np.ndarray:
        return self.to_scipy().diagonal()

    def __eq__(self, other) -> bool:
        if not isinstance(other, CsrMatrix):
            return NotImplemented
        return (
            self.n == other.n
            and np.array_equal(self.rowptr, other.rowptr)
            and np.array_equal(self.colid, other.colid)
            and np.array_equal(self.val.view(np.uint64), other.val.view(np.uint64))
        )


def from_coo(n: int, rows, cols, vals) -> CsrMatrix:
    """Build a canonical matrix from triplets; duplicates are summed."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    vals = np.asarray(vals, dtype=np.float64)
    if rows.size and (rows.min() < 0 or rows.max() >= n or cols.min() < 0 or cols.max() >= n):
        raise ValueError("triplet index out of range")
    m = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    return from_scipy(m)


def from_scipy(m) -> CsrMatrix:
    m = sp.csr_matrix(m)
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"matrix must be square, got {m.shape}")
    if np.iscomplexobj(m.data):
        raise ValueError("complex matrices are not supported")
    m.sum_duplicates()
    m.sort_indices()
    return CsrMatrix(m.shape[0], m.indptr, m.indices, m.data.astype(np.float64))


def load_matrix_market(path) -> CsrMatrix:
    """Read a real square coordinate Matrix Market file into canonical form.

    Symmetric storage is expanded to both triangles.  Explicit zeros in the
    file are kept as stored entries.
    """
    path = Path(path)
    try:
        rows, cols, _, fmt, field, symmetry = scipy.io.mminfo(str(path))
    except Exception as exc:  # scipy raises several exception types here
        raise ValueError(f"cannot parse Matrix Market header of {path}: {exc}") from exc
    if fmt != "coordinate":
        raise ValueError(f"only coordinate format is supported, got {fmt!r}")
    if field not in ("real", "integer"):
        raise ValueError(f"only real matrices are supported, got field {field!r}")
    if rows != cols:
        raise ValueError(f"matrix must be square, got {rows}x{cols}")
    try:
        m = scipy.io.mmread(str(path))
    except Exception as exc:
        raise ValueError(f"cannot parse {path}: {exc}") from exc
    return from_scipy(sp.csr_matrix(m, dtype=np.float64))


def write_matrix_market(A: CsrMatrix, path) -> None:
    """Write ``A`` in general coordinate format with 1-based indices.

    Values use 17 significant digits, which round-trips every double exactly.
    """
    rows = np.repeat(np.arange(A.n), np.diff(A.rowptr))
    with open(path, "w") as fh:
        fh.write("%%MatrixMarket matrix coordinate real general\n")
        fh.write(f"{A.n} {A.n} {A.nnz}\n")
        for i, j, v in zip(rows, A.colid, A.val):
            fh.write(f"{i + 1} {j + 1} {float(v)!r}\n")


def spmxv_plain(A: CsrMatrix, x) -> np.ndarray:
    """Unprotected ``y = A x``; each row is summed left to right."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.shape != (A.n,):
        raise ValueError(f"dimension mismatch: matrix order {A.n}, vector shape {x.shape}")
    y = np.empty(A.n)
    _kernels.csr_matvec(A.rowptr, A.colid, A.val, x, y)
    return y


def _laplacian2d(m: int) -> CsrMatrix:
    # 5-point stencil on an m-by-m grid, natural ordering
    n = m * m
    rows, cols, vals = [], [], []
    for gi in range(m):
        for gj in range(m):
            i = gi * m + gj
            rows.append(i); cols.append(i); vals.append(4.0 + LAPLACIAN_SHIFT)
            for di, dj in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                a, b = gi + di, gj + dj
                if 0 <= a < m and 0 <= b < m:
                    rows.append(i); cols.append(a * m + b); vals.append(-1.0)
    return from_coo(n, rows, cols, vals)


def _path_laplacian(n: int) -> CsrMatrix:
    rows, cols, vals = [], [], []
    for i in range(n):
        deg = (i > 0) + (i < n - 1)
        rows.append(i); cols.append(i); vals.append(float(deg))
        if i > 0:
            rows.append(i); cols.append(i - 1); vals.append(-1.0)
        if i < n - 1:
            rows.append(i); cols.append(i + 1); vals.append(-1.0)
    return from_coo(n, rows, cols, vals)


def _first_primes(count: int) -> np.ndarray:
    # the count-th prime is below count (ln count + ln ln count) for count >= 6
    bound = max(15, int(count * (math.log(count) + math.log(math.log(count)))) + 1)
    sieve = np.ones(bound, dtype=bool)
    sieve[:2] = False
    for i in range(2, math.isqrt(bound) + 1):
        if sieve[i]:
            sieve[i * i::i] = False
    return np.flatnonzero(sieve)[:count].astype(np.float64)


def _trefethen(n: int) -> CsrMatrix:
    offsets = [1 << k for k in range(n.bit_length()) if (1 << k) < n]
    diags = [_first_primes(n)] + [np.ones(n - o) for o in offsets] * 2
    return from_scipy(sp.diags(diags, [0] + offsets + [-o for o in offsets], format="csr"))


def _diag_dominant(n: int, seed: int, nnz_per_row: int) -> CsrMatrix:
    rng = np.random.default_rng(seed)
    k = max(0, min(nnz_per_row - 1, n - 1))
    # choose about k/2 partners per row above the diagonal, then symmetrize
    upper = {}
    for i in range(n):
        others = rng.choice(n - 1, size=k // 2 if k > 1 else k, replace=False) if k else []
        for o in others:
            j = o if o < i else o + 1
            a, b = (i, j) if i < j else (j, i)
            if (a, b) not in upper:
                upper[(a, b)] = rng.uniform(-1.0, 1.0)
    rows, cols, vals = [], [], []
    offsum = np.zeros(n)
    for (a, b), v in upper.items():
        rows += [a, b]; cols += [b, a]; vals += [v, v]
        offsum[a] += abs(v); offsum[b] += abs(v)
    for i in range(n):
        rows.append(i); cols.append(i); vals.append(offsum[i] + 1.0)
    return from_coo(n, rows, cols, vals)


def generate_test_matrix(kind: str, n: int, seed: int = 0, nnz_per_row: int = 5) -> CsrMatrix:
    """Build one of the synthetic test matrices.

    ``laplacian2d`` takes ``n`` as the grid side, so the order is ``n*n``.
    ``zero_colsum`` is the Laplacian of the path graph on ``n`` vertices (every
    column sums to zero; singular).  ``diag_dominant`` is a random symmetric
    matrix with roughly ``nnz_per_row`` entries per row and a diagonal that
    exceeds the absolute off-diagonal row sum by one.  ``trefethen`` has the
    first ``n`` primes on the diagonal and ones wherever ``|i - j|`` is a power
    of two; at ``n = 20000`` it is the collection matrix Trefethen_20000.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    if kind == "laplacian2d":
        return _laplacian2d(n)
    if kind == "zero_colsum":
        return _path_laplacian(n)
    if kind == "diag_dominant":
        return _diag_dominant(n, seed, nnz_per_row)
    if kind == "trefethen":
        return _trefethen(n)
    if kind == "identity":
        return from_coo(n, np.arange(n), np.arange(n), np.ones(n))
    raise ValueError(f"unknown matrix kind {kind!r}")
