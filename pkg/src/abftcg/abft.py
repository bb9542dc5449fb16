"""Checksum-protected sparse matrix-vector products.

Three encodings are provided:

``shift``
    One all-ones weight vector.  Column checksums are shifted by an integer
    ``shift_k`` so that none is close to zero; an extra output entry
    ``y[n] = shift_k * sum(x')`` balances the shift.  Detects one error.
``split``
    One all-ones weight vector.  For every column whose sum is close to zero a
    single stored entry is moved into a second matrix with its own sparse
    checksum.  Detects one error.
``multi``
    ``k`` Vandermonde weight vectors ``(1, i, i**2)`` with ``i`` counted from 1.
    Detects up to ``k`` errors and, when asked, corrects a single one in the
    output, in ``val``/``colid``/``rowptr``, or in the input vector.

Every product takes a trusted copy ``x'`` of the input on entry.  Checksum
arithmetic, the trusted copy and row-pointer sums are assumed fault-free.
Floating point syndromes are compared against a rounding-error bound scaled
by ``max|x'|``; the row-pointer syndrome is exact integer arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .sparse import CsrMatrix

__all__ = [
    "UNIT_ROUNDOFF",
    "RATIO_EPS",
    "ChecksumSet",
    "SpmvOutcome",
    "gamma",
    "fp_tolerance",
    "compute_checksums",
    "count_null_columns",
    "choose_scheme",
    "select_scheme",
    "spmxv_shift",
    "spmxv_split",
    "spmxv_multi",
    "protected_spmxv",
    "overhead_counts",
    "syndrome_csv_header",
    "syndrome_csv_row",
]

UNIT_ROUNDOFF = 2.0 ** -53
# distance from an integer below which a syndrome ratio is accepted as a
# position; widened per call by the rounding noise the tolerance allows
RATIO_EPS = 1e-4
# column sums with magnitude below this are treated as null; x errors in such
# columns would otherwise be scaled down by the tiny sum and slip under the
# rounding threshold
NULL_COLUMN_MARGIN = 1.0


def gamma(m: int) -> float:
    """Accumulation factor ``m*u / (1 - m*u)`` for ``m`` roundings."""
    mu = m * UNIT_ROUNDOFF
    if mu >= 1.0:
        raise OverflowError(f"gamma undefined: {m} * u >= 1")
    return mu / (1.0 - mu)


def fp_tolerance(A: CsrMatrix, w_abs_max: float, n: Optional[int] = None) -> float:
    """x-independent part of the checksum rounding bound.

    Returns ``2 * gamma(2n) * n * w_abs_max * ||A||_1``.  Multiply by
    ``max|x|`` to get the threshold for one product.
    """
    n = A.n if n is None else int(n)
    return _tol_factor(A.norm1(), w_abs_max, n)


def _tol_factor(norm1: float, w_abs_max: float, n: int) -> float:
    return 2.0 * gamma(2 * n) * n * w_abs_max * norm1


@dataclass
class ChecksumSet:
    """Precomputed protection data for one matrix.  Never targeted by faults."""

    scheme: str
    k: int
    n: int
    W: np.ndarray            # n x k weights
    Wext: np.ndarray         # (n+1) x k integer weights for the row pointers
    C: np.ndarray            # k x n column checksums, shifted for ``shift``
    M: np.ndarray            # k x n, W^T - C (multi only)
    shift_k: float
    c_row: tuple             # exact integer checksums of rowptr
    tol_y_factor: np.ndarray  # per component, times max|x'|
    tol_x_factor: np.ndarray
    n_prime: int = 0
    split_mask: Optional[np.ndarray] = None
    c_hat: Optional[np.ndarray] = None        # dense length n, nonzero on null columns
    uncovered_columns: tuple = ()             # split: null columns with no stored entry
    # column-major view of the original pattern, used by the repair paths
    csc_ptr: np.ndarray = field(default=None, repr=False)
    csc_rows: np.ndarray = field(default=None, repr=False)
    csc_pos: np.ndarray = field(default=None, repr=False)
    # Transposed copies laid out for the sequential weighted-sum kernel.
    Ct: np.ndarray = field(default=None, repr=False)
    Mt: np.ndarray = field(default=None, repr=False)
    c_row_wrapped: np.ndarray = field(default=None, repr=False)

    @property
    def w_abs_max(self) -> np.ndarray:
        return np.abs(self.W).max(axis=0)


@dataclass
class SpmvOutcome:
    y: np.ndarray
    status: str                      # clean | corrected | detected
    location: Optional[tuple] = None  # (target, index) when corrected
    count_estimate: int = 0
    residual_syndromes: np.ndarray = None
    tolerances: np.ndarray = None
    guard: bool = False
    ops: dict = None

    @property
    def detected(self) -> bool:
        return self.status != "clean"

    @property
    def tau_ref(self) -> float:
        """Largest floating point threshold applied in this product."""
        return float(np.max(self.tolerances)) if self.tolerances is not None else 0.0


# ---------------------------------------------------------------- construction


def _vandermonde(n: int, k: int) -> np.ndarray:
    i = np.arange(1, n + 1, dtype=np.float64)
    return np.stack([i ** l for l in range(k)], axis=1)


def _csc_pattern(A: CsrMatrix):
    pos = sp.csr_matrix(
        (np.arange(A.nnz, dtype=np.int64), A.colid, A.rowptr), shape=(A.n, A.n)
    ).tocsc()
    pos.sort_indices()
    return pos.indptr.astype(np.int64), pos.indices.astype(np.int64), pos.data.astype(np.int64)


def _smallest_shift(c: np.ndarray) -> int:
    k = 0
    limit = int(math.ceil(NULL_COLUMN_MARGIN - min(0.0, float(c.min())))) + 1
    while k <= limit:
        if np.all(np.abs(c + k) >= NULL_COLUMN_MARGIN):
            return k
        k += 1
    raise RuntimeError("no integer shift separates the column sums from zero")


def _row_checksum(Wext_int: np.ndarray, rowptr: np.ndarray) -> tuple:
    return tuple(
        sum(int(w) * int(r) for w, r in zip(Wext_int[:, l], rowptr))
        for l in range(Wext_int.shape[1])
    )


def count_null_columns(A: CsrMatrix) -> int:
    """Number of columns whose sum is too close to zero to protect ``x``."""
    return int(np.sum(np.abs(A.column_sums()) < NULL_COLUMN_MARGIN))


def choose_scheme(n: int, n_prime: int) -> str:
    """Cheaper single-detection scheme given ``n`` and the null-column count.

    Overheads are ``5n`` for shifting and ``4n + 5n'`` for splitting, so
    shifting wins once ``n' > n/5``; the tie also goes to shifting.
    """
    return "shift" if 5 * n_prime >= n else "split"


def select_scheme(A: CsrMatrix) -> str:
    return choose_scheme(A.n, count_null_columns(A))


def compute_checksums(A: CsrMatrix, scheme: str = "multi", k: int = 2) -> ChecksumSet:
    """Build the protection data for ``A``.

    ``shift`` and ``split`` always use a single all-ones weight vector and
    ignore ``k``.  ``multi`` accepts ``k`` in {1, 2, 3}.
    """
    n = A.n
    if scheme in ("shift", "split"):
        k = 1
    elif scheme == "multi":
        if k not in (1, 2, 3):
            raise ValueError(f"k must be 1, 2 or 3, got {k}")
    else:
        raise ValueError(f"unknown scheme {scheme!r}")

    W = _vandermonde(n, k)
    Wext_int = np.stack(
        [np.arange(1, n + 2, dtype=np.int64) ** l for l in range(k)], axis=1
    )
    C = _kernels.column_checksums(A.rowptr, A.colid, A.val, W, n)
    c_row = _row_checksum(Wext_int, A.rowptr)
    norm1 = A.norm1()
    csc_ptr, csc_rows, csc_pos = _csc_pattern(A)
    wmax = np.abs(W).max(axis=0)
    common = dict(
        n=n, W=W, Wext=Wext_int, c_row=c_row,
        csc_ptr=csc_ptr, csc_rows=csc_rows, csc_pos=csc_pos,
        c_row_wrapped=np.array([r & 0xFFFFFFFFFFFFFFFF for r in c_row], dtype=np.uint64).view(np.int64),
    )

    if scheme == "shift":
        c = C[0]
        shift = _smallest_shift(c)
        Cs = (c + shift)[None, :]
        # the product grows one row (k * ones) and the 1-norm by k
        f = _tol_factor(norm1 + shift, 1.0, n + 1)
        return ChecksumSet(
            scheme="shift", k=1, C=Cs, M=np.zeros((1, n)), shift_k=float(shift),
            tol_y_factor=np.array([f]), tol_x_factor=np.array([f]),
            n_prime=int(np.sum(np.abs(c) < NULL_COLUMN_MARGIN)),
            Ct=np.ascontiguousarray(Cs.T), Mt=np.zeros((n, 1)), **common,
        )

    if scheme == "split":
        c = C[0].copy()
        null = np.abs(c) < NULL_COLUMN_MARGIN
        mask = np.zeros(A.nnz, dtype=bool)
        c_hat = np.zeros(n)
        uncovered = []
        for j in np.flatnonzero(null):
            lo, hi = csc_ptr[j], csc_ptr[j + 1]
            if hi == lo:
                uncovered.append(int(j))
                continue
            m = csc_pos[hi - 1]  # last stored entry of the column
            mask[m] = True
        # checksums of the two parts, accumulated in the same row order as the
        # product kernel
        ones = np.ones((n, 1))
        val_main = np.where(mask, 0.0, A.val)
        val_hat = np.where(mask, A.val, 0.0)
        c_main = _kernels.column_checksums(A.rowptr, A.colid, val_main, ones, n)[0]
        c_hat = _kernels.column_checksums(A.rowptr, A.colid, val_hat, ones, n)[0]
        f = _tol_factor(norm1, 1.0, n)
        Cs = np.stack([c_main, c_hat])
        return ChecksumSet(
            scheme="split", k=1, C=Cs, M=np.zeros((1, n)), shift_k=0.0,
            tol_y_factor=np.array([f, f]), tol_x_factor=np.array([f, f]),
            n_prime=int(mask.sum()), split_mask=mask, c_hat=c_hat,
            uncovered_columns=tuple(uncovered),
            Ct=np.ascontiguousarray(Cs.T), Mt=np.zeros((n, 1)), **common,
        )

    M = W.T - C
    ty = np.array([_tol_factor(norm1, w, n) for w in wmax])
    # d_x' works with (I - A) and with rounded M entries; double the bound
    tx = np.array([2.0 * _tol_factor(norm1 + 1.0, w, n) for w in wmax])
    return ChecksumSet(
        scheme="multi", k=k, C=C, M=M, shift_k=0.0,
        tol_y_factor=ty, tol_x_factor=tx, n_prime=0,
        Ct=np.ascontiguousarray(C.T), Mt=np.ascontiguousarray(M.T), **common,
    )


# ------------------------------------------------------------------ utilities


def _check_inputs(A: CsrMatrix, x, cs: ChecksumSet, x_trusted):
    x = np.asarray(x)
    if x.dtype != np.float64 or not x.flags.c_contiguous:
        x = np.ascontiguousarray(x, dtype=np.float64)
    if x.shape != (A.n,) or cs.n != A.n:
        raise ValueError("dimension mismatch between matrix, vector and checksums")
    xp = x.copy() if x_trusted is None else np.array(x_trusted, dtype=np.float64)
    if xp.shape != (A.n,):
        raise ValueError("trusted copy has the wrong length")
    return x, xp


def _infnorm(v: np.ndarray) -> float:
    return float(np.max(np.abs(v))) if v.size else 0.0


def _row_syndrome(cs: ChecksumSet, rowptr: np.ndarray) -> tuple:
    """Exact ``c_row - s_row``.  Cheap wrapped comparison first."""
    s = cs.Wext.T @ rowptr  # int64, wraps modulo 2**64
    if np.array_equal(s, cs.c_row_wrapped):
        # a single flip changes the all-ones component by +-2**b != 0 mod 2**64,
        # so equality here means the pointers are intact
        return (0,) * cs.k
    s_exact = _row_checksum(cs.Wext, rowptr)
    return tuple(c - s for c, s in zip(cs.c_row, s_exact))


def _exceeds(d: np.ndarray, tol: np.ndarray) -> bool:
    # NaN compares false, so it counts as a violation
    return bool(np.any(~(np.abs(d) <= tol)))


def syndrome_csv_header(k: int) -> list:
    return (
        ["iteration"]
        + [f"d_x{l + 1}" for l in range(k)]
        + [f"d_xp{l + 1}" for l in range(k)]
        + [f"d_r{l + 1}" for l in range(k)]
    )


def syndrome_csv_row(iteration: int, out: SpmvOutcome) -> list:
    return [iteration] + [repr(float(v)) for v in out.residual_syndromes]


def overhead_counts(scheme: str, n: int, n_prime: int = 0, k: int = 1) -> dict:
    """Per-product overhead in the units of the shift/split cost table."""
    if scheme == "shift":
        rows = {"init_y": n, "y_extra": n, "spmv": 0, "check": 2 * n, "c_y": n, "sum": 0}
    elif scheme == "split":
        rows = {
            "init_y": n, "y_extra": 0, "spmv": n_prime,
            "check": 2 * n + 2 * n_prime, "c_y": n + n_prime, "sum": n_prime,
        }
    elif scheme == "multi":
        rows = {"init_y": n, "diff": n, "weighted_y": k * n, "c_x": k * n,
                "weighted_diff": k * n, "m_x": k * n}
    else:
        raise ValueError(scheme)
    rows["total"] = sum(rows.values())
    return rows


# ------------------------------------------------------------ shift and split


def spmxv_shift(
    A: CsrMatrix,
    x,
    cs: ChecksumSet,
    *,
    x_trusted=None,
    y_hook: Optional[Callable[[np.ndarray], None]] = None,
) -> SpmvOutcome:
    """Detect a single error with the shifted all-ones checksum."""
    if cs.scheme != "shift":
        raise ValueError("checksum set was not built for the shift scheme")
    x, xp = _check_inputs(A, x, cs, x_trusted)
    n = A.n
    ops = {"init_y": 0, "y_extra": 0, "spmv": 0, "check": 0, "c_y": 0, "sum": 0}
    y = np.zeros(n + 1)
    ops["init_y"] += n
    guard = _kernels.csr_matvec(A.rowptr, A.colid, A.val, x, y[:n])
    y[n] = cs.shift_k * _kernels.dot(np.ones(n), xp)
    ops["y_extra"] += n
    if y_hook is not None:
        y_hook(y[:n])
    c_y = _kernels.dot(np.ones(n + 1), y)
    ops["c_y"] += n
    c = cs.C[0]
    d_x = _kernels.dot(c, x) - c_y
    d_xp = _kernels.dot(c, xp) - c_y
    ops["check"] += 2 * n
    d_r = _row_syndrome(cs, A.rowptr)
    tol = cs.tol_y_factor * _infnorm(xp)
    syn = np.array([d_x, d_xp, float(d_r[0])])
    ops["total"] = sum(ops.values())
    bad = _exceeds(np.array([d_x, d_xp]), np.array([tol[0], tol[0]])) or d_r[0] != 0 or guard
    return SpmvOutcome(
        y=y[:n].copy(), status="detected" if bad else "clean",
        count_estimate=1 if bad else 0, residual_syndromes=syn,
        tolerances=tol, guard=bool(guard), ops=ops,
    )


def spmxv_split(
    A: CsrMatrix,
    x,
    cs: ChecksumSet,
    *,
    x_trusted=None,
    y_hook: Optional[Callable[[np.ndarray], None]] = None,
) -> SpmvOutcome:
    """Detect a single error with the split-matrix checksums.

    The returned vector is ``y + y_hat`` formed in reliable mode, so its
    rounding can differ from the plain product on rows holding a moved entry.
    """
    if cs.scheme != "split":
        raise ValueError("checksum set was not built for the split scheme")
    x, xp = _check_inputs(A, x, cs, x_trusted)
    n = A.n
    ops = {"init_y": 0, "y_extra": 0, "spmv": 0, "check": 0, "c_y": 0, "sum": 0}
    y = np.empty(n)
    yhat = np.empty(n)
    ops["init_y"] += n
    mask = cs.split_mask
    if mask.shape[0] != A.nnz:
        raise ValueError("split mask does not match the matrix")
    guard, touched = _kernels.csr_matvec_split(A.rowptr, A.colid, A.val, mask, x, y, yhat)
    ops["spmv"] += int(touched)
    if y_hook is not None:
        y_hook(y)
    c_main, c_hat = cs.C
    hat_cols = np.flatnonzero(c_hat)
    hat_rows = np.flatnonzero(yhat)  # support of the sparse second product
    ops["c_y"] += n + cs.n_prime
    c_y = _kernels.dot(np.ones(n), y)
    c_yh = float(np.sum(yhat[hat_rows])) if hat_rows.size else 0.0
    ops["check"] += 2 * n + 2 * cs.n_prime
    d_x = _kernels.dot(c_main, x) - c_y
    d_xh = float(np.dot(c_hat[hat_cols], x[hat_cols])) - c_yh
    d_xp = _kernels.dot(c_main, xp) - c_y
    d_xhp = float(np.dot(c_hat[hat_cols], xp[hat_cols])) - c_yh
    d_r = _row_syndrome(cs, A.rowptr)
    tol = cs.tol_y_factor * _infnorm(xp)
    syn = np.array([d_x, d_xh, d_xp, d_xhp, float(d_r[0])])
    t0 = tol[0]
    bad = _exceeds(syn[:4], np.full(4, t0)) or d_r[0] != 0 or guard
    out = y.copy()
    out[hat_rows] += yhat[hat_rows]
    ops["sum"] += cs.n_prime
    ops["total"] = sum(ops.values())
    return SpmvOutcome(
        y=out, status="detected" if bad else "clean", count_estimate=1 if bad else 0,
        residual_syndromes=syn, tolerances=tol, guard=bool(guard), ops=ops,
    )


# --------------------------------------------------------------------- multi


def _multi_syndromes(A, x, xp, y, cs):
    with np.errstate(all="ignore"):
        return _multi_syndromes_raw(A, x, xp, y, cs)


def _multi_syndromes_raw(A, x, xp, y, cs):
    d_x = _kernels.weighted_sums(cs.W, y) - _kernels.weighted_sums(cs.Ct, x)
    d_xp = _kernels.weighted_sums(cs.W, xp - y) - _kernels.weighted_sums(cs.Mt, x)
    d_r = _row_syndrome(cs, A.rowptr)
    return d_x, d_xp, d_r


def _locate(d: np.ndarray, tol: np.ndarray, n: int) -> Optional[int]:
    """0-based position whose weight row explains the syndrome ``d``.

    The ratio of consecutive components must sit near the same integer in
    ``[1, n]``.  The acceptance radius is ``RATIO_EPS`` widened by how far the
    allowed rounding noise could move the ratio.
    """
    if d.shape[0] < 2 or not np.all(np.isfinite(d)) or d[0] == 0.0:
        return None
    rho = d[1] / d[0]
    sigma = int(round(rho))
    if sigma < 1 or sigma > n:
        return None
    slack = (tol[1] + abs(rho) * tol[0]) / abs(d[0])
    if abs(rho - sigma) > max(RATIO_EPS, min(slack, 0.5)):
        return None
    if d.shape[0] >= 3:
        if d[1] == 0.0:
            return None
        rho2 = d[2] / d[1]
        slack2 = (tol[2] + abs(rho2) * tol[1]) / abs(d[1])
        if abs(rho2 - sigma) > max(RATIO_EPS, min(slack2, 0.5)):
            return None
    return sigma - 1


def _column_checksum(A: CsrMatrix, cs: ChecksumSet, col: int) -> np.ndarray:
    return _kernels.column_checksum_one(A.rowptr, A.colid, A.val, cs.W, A.n, col)


def _same_bits(a: np.ndarray, b: np.ndarray) -> bool:
    return np.array_equal(
        np.ascontiguousarray(a, dtype=np.float64).view(np.uint64),
        np.ascontiguousarray(b, dtype=np.float64).view(np.uint64),
    )


def _differing_columns(A: CsrMatrix, cs: ChecksumSet) -> np.ndarray:
    Cp = _kernels.column_checksums(A.rowptr, A.colid, A.val, cs.W, A.n)
    diff = Cp.view(np.uint64) != cs.C.view(np.uint64)
    return np.flatnonzero(diff.any(axis=0))


def _repair_value(A: CsrMatrix, cs: ChecksumSet, col: int) -> Optional[int]:
    """Restore one flipped value in column ``col``; return its row or None."""
    lo, hi = cs.csc_ptr[col], cs.csc_ptr[col + 1]
    rows = cs.csc_rows[lo:hi]
    pos = cs.csc_pos[lo:hi]
    if pos.size == 0:
        return None
    target = cs.C[:, col]
    current = _column_checksum(A, cs, col)
    delta = current - target
    # the checksum difference is (v~ - v) * W[row]; its ratio names the row
    order = list(range(pos.size))
    if np.all(np.isfinite(delta)) and delta[0] != 0.0 and cs.k >= 2:
        rho = delta[1] / delta[0]
        hint = int(round(rho)) - 1
        order.sort(key=lambda t: abs(rows[t] - hint))
        v_hat = {t: A.val[pos[t]] - delta[0] for t in order}
    else:
        bad = [t for t in order if not np.isfinite(A.val[pos[t]])]
        order = bad + [t for t in order if t not in bad]
        v_hat = {t: np.nan for t in order}
    for t in order:
        j = pos[t]
        stored = A.val[j]
        word = np.array([stored]).view(np.uint64)[0]
        matches = []
        for b in range(64):
            cand = np.array([word ^ np.uint64(1 << b)], dtype=np.uint64).view(np.float64)[0]
            A.val[j] = cand
            if _same_bits(_column_checksum(A, cs, col), target):
                matches.append(cand)
        A.val[j] = stored
        if matches:
            vh = v_hat[t]
            if np.isfinite(vh) and len(matches) > 1:
                matches.sort(key=lambda v: abs(v - vh))
            A.val[j] = matches[0]
            return int(rows[t])
    return None


# columns longer than this are not searched for two flipped values
PAIR_SEARCH_MAX_ENTRIES = 16


def _repair_value_pair(A: CsrMatrix, cs: ChecksumSet, col: int) -> Optional[list]:
    """Restore two flipped value bits in column ``col``.

    Flips that stay under the detection threshold are left in memory, so two
    of them can pile up in one column over a long solve.  Every way of
    undoing two bit flips in the column is tried, with the checksum summed in
    the kernel's order so that a match is bit exact.  The repair is applied
    only when exactly one candidate matches.  Returns the repaired entries.
    """
    lo, hi = cs.csc_ptr[col], cs.csc_ptr[col + 1]
    rows = cs.csc_rows[lo:hi]
    pos = cs.csc_pos[lo:hi]
    m = pos.size
    if m == 0 or m > PAIR_SEARCH_MAX_ENTRIES:
        return None
    order = np.argsort(rows, kind="stable")
    rows, pos = rows[order], pos[order]
    target = cs.C[:, col].view(np.uint64)
    words = A.val[pos].view(np.uint64)
    masks = np.uint64(1) << np.arange(64, dtype=np.uint64)
    Wc = cs.W[rows]                                   # m x k

    def matches(cand):                                # cand: c x m words
        vals = cand.view(np.float64)
        acc = np.zeros((vals.shape[0], cs.k))
        with np.errstate(all="ignore"):
            for t in range(m):
                acc = acc + Wc[t] * vals[:, t:t + 1]
        return np.flatnonzero(np.all(acc.view(np.uint64) == target, axis=1))

    found = []
    bi, bj = np.triu_indices(64, 1)
    for a in range(m):
        cand = np.tile(words, (bi.size, 1))
        cand[:, a] ^= masks[bi] | masks[bj]
        found += [cand[h] for h in matches(cand)]
    gi, gj = np.meshgrid(np.arange(64), np.arange(64), indexing="ij")
    gi, gj = gi.ravel(), gj.ravel()
    for a in range(m):
        for b in range(a + 1, m):
            cand = np.tile(words, (gi.size, 1))
            cand[:, a] ^= masks[gi]
            cand[:, b] ^= masks[gj]
            found += [cand[h] for h in matches(cand)]
            if len(found) > 1:
                return None
    if len(found) != 1:
        return None
    changed = np.flatnonzero(found[0] != words)
    A.val[pos] = found[0].view(np.float64)
    return [int(rows[t]) for t in changed]


def _row_sorted(A: CsrMatrix, row: int) -> bool:
    seg = A.colid[A.rowptr[row]:A.rowptr[row + 1]]
    return bool(np.all(np.diff(seg) > 0))


def _repair_colid_pair(A: CsrMatrix, cs: ChecksumSet, f1: int, f2: int):
    """Swap the single misplaced column index between ``f1`` and ``f2``.

    Equal values in one row can make several swaps restore the checksums;
    the one leaving the row in canonical (increasing) order wins.
    """
    cand = np.flatnonzero((A.colid == f1) | (A.colid == f2))
    t1, t2 = cs.C[:, f1], cs.C[:, f2]
    passing = []
    for j in cand:
        old = A.colid[j]
        A.colid[j] = f2 if old == f1 else f1
        if _same_bits(_column_checksum(A, cs, f1), t1) and _same_bits(
            _column_checksum(A, cs, f2), t2
        ):
            row = _row_of(A, j)
            if _row_sorted(A, row):
                return int(j), row
            passing.append(j)
        A.colid[j] = old
    if passing:
        j = passing[0]
        A.colid[j] = f2 if A.colid[j] == f1 else f1
        return int(j), _row_of(A, j)
    return None


def _repair_colid_range(A: CsrMatrix, cs: ChecksumSet, col: int) -> Optional[int]:
    """Restore an out-of-range column index that should read ``col``."""
    bad = np.flatnonzero((A.colid < 0) | (A.colid >= A.n))
    target = cs.C[:, col]
    for j in bad:
        old = A.colid[j]
        A.colid[j] = col
        if _same_bits(_column_checksum(A, cs, col), target):
            return _row_of(A, j)
        A.colid[j] = old
    return None


def _row_of(A: CsrMatrix, j: int) -> int:
    return int(np.searchsorted(A.rowptr, j, side="right") - 1)


def _recompute_rows(A: CsrMatrix, x: np.ndarray, y: np.ndarray, rows) -> None:
    for i in rows:
        if 0 <= i < A.n:
            y[i] = _kernels.csr_row(A.rowptr, A.colid, A.val, x, int(i))


def spmxv_multi(
    A: CsrMatrix,
    x,
    cs: ChecksumSet,
    correct: bool = False,
    *,
    x_trusted=None,
    y_hook: Optional[Callable[[np.ndarray], None]] = None,
) -> SpmvOutcome:
    """Protected product with ``k`` weighted checksums.

    With ``correct=True`` a single error is repaired in place: the output
    entry is recomputed, a flipped ``val`` word or ``colid``/``rowptr`` entry
    of ``A`` is restored, or a corrupted input entry is reset from the
    trusted copy and the affected rows are recomputed.  The outcome is
    ``corrected`` only when all syndromes are clean after the repair;
    anything else is reported as ``detected``.

    ``x_trusted`` supplies the copy that would have been taken before a fault
    hit ``x``; ``y_hook`` mutates the freshly computed output to emulate a
    faulty computation.
    """
    if cs.scheme != "multi":
        raise ValueError("checksum set was not built for the multi scheme")
    x, xp = _check_inputs(A, x, cs, x_trusted)
    n, k = A.n, cs.k
    y = np.empty(n)
    guard = _kernels.csr_matvec(A.rowptr, A.colid, A.val, x, y)
    if y_hook is not None:
        y_hook(y)
    xnorm = _infnorm(xp)
    tol_y = cs.tol_y_factor * xnorm
    tol_x = cs.tol_x_factor * xnorm
    d_x, d_xp, d_r = _multi_syndromes(A, x, xp, y, cs)
    syn = np.concatenate([d_x, d_xp, np.array(d_r, dtype=np.float64)])
    tols = np.concatenate([tol_y, tol_x])
    ops = overhead_counts("multi", n, k=k)

    def outcome(status, location=None, count=0, yy=y):
        return SpmvOutcome(
            y=yy, status=status, location=location, count_estimate=count,
            residual_syndromes=syn, tolerances=tols, guard=bool(guard), ops=ops,
        )

    bad_y = _exceeds(d_x, tol_y)
    bad_x = _exceeds(d_xp, tol_x)
    bad_r = any(v != 0 for v in d_r)
    if not (bad_y or bad_x or bad_r or guard):
        return outcome("clean")
    if not correct:
        return outcome("detected", count=1)

    with np.errstate(all="ignore"):
        location = _correct_single(A, x, xp, y, cs, d_x, d_xp, d_r, tol_y, tol_x)
    if location is None:
        return outcome("detected", count=2)
    return outcome("corrected", location=location, count=1)


def _verified(A, x, xp, y, cs, tol_y, tol_x) -> bool:
    d_x, d_xp, d_r = _multi_syndromes(A, x, xp, y, cs)
    return not (_exceeds(d_x, tol_y) or _exceeds(d_xp, tol_x) or any(v != 0 for v in d_r))


def _correct_single(A, x, xp, y, cs, d_x, d_xp, d_r, tol_y, tol_x):
    """Try to explain the syndromes by one error and repair it.

    Returns the repaired location, or None.  A repair counts only if every
    syndrome is clean afterwards.  Recomputing an intact row or resetting an
    intact input entry from the trusted copy changes nothing, so trying a
    second interpretation after a failed first one is harmless.
    """
    n, k = A.n, cs.k
    if k < 2:
        return None

    tol_ok = (tol_y, tol_x)  # verification always uses the unscaled bounds

    def ok():
        return _verified(A, x, xp, y, cs, *tol_ok)

    if any(v != 0 for v in d_r):
        r0, r1 = d_r[0], d_r[1]
        if r0 == 0 or r1 % r0 != 0:
            return None
        rho = r1 // r0
        if not 1 <= rho <= n + 1:
            return None
        if k >= 3 and d_r[2] != rho * rho * r0:
            return None
        idx = rho - 1
        fixed = int(A.rowptr[idx]) + r0
        if not 0 <= fixed <= A.nnz:
            return None
        A.rowptr[idx] = fixed
        _recompute_rows(A, x, y, (idx - 1, idx, idx + 1))
        return ("rowptr", int(idx)) if ok() else None

    # Matrix errors are found exactly by recomputing the column checksums.
    # Every changed column is restored; flips that stayed below the tolerance
    # in earlier products are scrubbed along the way.  If the syndromes are
    # still dirty afterwards the remaining error is in the vectors.
    # A column that cannot be restored (two silent flips in one column) is
    # left alone: if the vectors can be repaired and every syndrome is then
    # within tolerance, that corruption is below the detection threshold.
    cols = _differing_columns(A, cs)
    matrix_loc = None
    if cols.size:
        hits = _repair_matrix(A, cs, cols)
        if hits:
            _recompute_rows(A, x, y, sorted({row for _, _, row in hits}))
            target, j, _ = hits[0]
            matrix_loc = (target, j)
            if ok():
                return matrix_loc
        d_x, d_xp, _ = _multi_syndromes(A, x, xp, y, cs)

    # Output error: d_x = eps*W[p] and d_x + d_x' is only rounding noise.
    # Input error: d_x' = -delta*W[s] and d_x is only rounding noise.
    finite = bool(np.all(np.isfinite(d_x)) and np.all(np.isfinite(d_xp)))
    if not finite and np.all(np.isfinite(x)) and np.all(np.isfinite(y)):
        # huge but finite entries overflow the weighted sums; a power-of-two
        # scaling is exact and brings the error term back into range
        sc = 2.0 ** -512
        d_x, d_xp, _ = _multi_syndromes(A, x * sc, xp * sc, y * sc, cs)
        tol_y, tol_x = tol_y * sc, tol_x * sc
        finite = bool(np.all(np.isfinite(d_x)) and np.all(np.isfinite(d_xp)))
    e_x = d_x + d_xp
    if finite:
        y_first = _exceeds(d_x, tol_y) and (
            not _exceeds(e_x, tol_y + tol_x) or abs(e_x[0]) < abs(d_x[0])
        )
    else:
        y_first = bool(np.all(np.isfinite(x)))

    def fix_output():
        if finite:
            s = _locate(d_x, tol_y, n)
        else:
            bad = np.flatnonzero(~np.isfinite(y))
            s = int(bad[0]) if bad.size == 1 else None
        if s is None:
            return None
        before = y[s]
        _recompute_rows(A, x, y, (s,))
        if np.float64(before).view(np.uint64) == np.float64(y[s]).view(np.uint64):
            return None  # the row was already right: not an output error
        return ("y", int(s)) if ok() else None

    def fix_input():
        s = _locate(d_xp, tol_x, n) if finite else None
        if s is None:
            # overflowed syndromes carry no position; fall back to comparing
            # against the trusted copy
            bad = np.flatnonzero(x.view(np.uint64) != xp.view(np.uint64))
            if bad.size != 1:
                return None
            s = int(bad[0])
        if x[s:s + 1].view(np.uint64)[0] == xp[s:s + 1].view(np.uint64)[0]:
            return None  # the entry is intact: not an input error
        x[s] = xp[s]
        lo, hi = cs.csc_ptr[s], cs.csc_ptr[s + 1]
        _recompute_rows(A, x, y, cs.csc_rows[lo:hi])
        return ("x", int(s)) if ok() else None

    for attempt in ((fix_output, fix_input) if y_first else (fix_input, fix_output)):
        loc = attempt()
        if loc is not None:
            return matrix_loc or loc
    return None


def _repair_matrix(A, cs, cols):
    """Restore ``val``/``colid`` from the columns whose checksums changed.

    Returns the list of ``(target, entry, row)`` repairs that succeeded.  A
    column that no single flip explains is left unchanged.  Out-of-range
    column indices are restored first.  A misplaced in-range index shows up
    as a pair of changed columns; pairs are matched next, and whatever is
    left must hold one or two flipped values.
    """
    hits = []
    remaining = []
    for f in cols:
        f = int(f)
        row = _repair_colid_range(A, cs, f)
        if row is not None:
            hits.append(("colid", _entry_index(A, row, f), row))
        else:
            remaining.append(f)
    paired = True
    while paired and len(remaining) >= 2:
        paired = False
        for a in range(len(remaining)):
            for b in range(a + 1, len(remaining)):
                hit = _repair_colid_pair(A, cs, remaining[a], remaining[b])
                if hit is not None:
                    j, row = hit
                    hits.append(("colid", j, row))
                    del remaining[b], remaining[a]
                    paired = True
                    break
            if paired:
                break
    for f in remaining:
        row = _repair_value(A, cs, f)
        if row is not None:
            hits.append(("val", _entry_index(A, row, f), row))
            continue
        for row in _repair_value_pair(A, cs, f) or ():
            hits.append(("val", _entry_index(A, row, f), row))
    return hits


def _entry_index(A: CsrMatrix, row: int, col: int) -> int:
    lo, hi = A.rowptr[row], A.rowptr[row + 1]
    for j in range(lo, hi):
        if A.colid[j] == col:
            return int(j)
    return int(lo)


def protected_spmxv(A, x, cs: ChecksumSet, correct: bool = False, **kw) -> SpmvOutcome:
    """Dispatch to the product matching ``cs.scheme``."""
    if cs.scheme == "shift":
        return spmxv_shift(A, x, cs, **kw)
    if cs.scheme == "split":
        return spmxv_split(A, x, cs, **kw)
    return spmxv_multi(A, x, cs, correct, **kw)
