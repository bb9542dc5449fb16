"""Preconditioned conjugate gradient with checkpointing and silent-error handling.

The preconditioner is given by a sparse factor ``F`` and applied as
``z = F^T (F r)``, two sparse products.  Four execution modes exist:

``none``
    plain PCG; faults go undetected and non-finite scalars abort the run.
``online_detection``
    plain products for ``A`` and the vector kernels.  Every ``d`` iterations the
    state is checked (conjugacy of ``p`` and ``q``, recomputed residual); a
    failed check rolls back to the last checkpoint.
``abft_detection``
    every sparse product carries two weighted checksums and every dot product
    and vector update runs three times with a vote.  Any detection rolls back.
``abft_correction``
    three checksums per product repair single errors in place; only
    uncorrectable errors or a three-way vote disagreement roll back.

Checkpoints are taken every ``s * d`` iterations (``d = 1`` for the ABFT
modes) and hold both the solver vectors and the matrix arrays, since memory
faults corrupt ``A`` as well.  The matrix copy is made once, at the start,
and shared by later checkpoints.  Time is accounted in units of one plain
iteration.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from . import _kernels
from .abft import compute_checksums, gamma, spmxv_multi
from .faults import FaultPlan, apply_flip, draw_events
from .sparse import CsrMatrix, from_scipy, spmxv_plain

__all__ = [
    "METHOD_NAMES",
    "SolverState",
    "Checkpoint",
    "MethodConfig",
    "RunReport",
    "RUN_COLUMNS",
    "default_preconditioner",
    "inverse_factor",
    "tmr_dot",
    "tmr_axpy",
    "TmrFailure",
    "take_checkpoint",
    "rollback",
    "verify_online",
    "default_tol_res",
    "pcg_solve",
]

METHOD_NAMES = ("none", "online_detection", "abft_detection", "abft_correction")


class TmrFailure(RuntimeError):
    """All three replicas of a redundant operation disagree."""


# ---------------------------------------------------------------- state


@dataclass
class SolverState:
    x: np.ndarray
    r: np.ndarray
    z: np.ndarray
    p: np.ndarray
    q: np.ndarray
    iter: int = 0
    rnorm2: float = 0.0
    rz: float = 0.0

    def copy(self) -> "SolverState":
        return SolverState(self.x.copy(), self.r.copy(), self.z.copy(), self.p.copy(),
                           self.q.copy(), self.iter, self.rnorm2, self.rz)

    def same_bits(self, other: "SolverState") -> bool:
        vecs = ("x", "r", "z", "p", "q")
        return (
            self.iter == other.iter
            and all(np.array_equal(getattr(self, v).view(np.uint64),
                                   getattr(other, v).view(np.uint64)) for v in vecs)
            and _bits(self.rnorm2) == _bits(other.rnorm2)
            and _bits(self.rz) == _bits(other.rz)
        )


def _bits(v: float) -> int:
    return int(np.float64(v).view(np.uint64))


@dataclass
class Checkpoint:
    state: SolverState
    matrix: tuple      # (rowptr, colid, val) copies of A
    factor: tuple      # same for the preconditioner factor
    factor_t: tuple    # and for its transpose
    taken_at: int


def _save(B: CsrMatrix) -> tuple:
    return (B.rowptr.copy(), B.colid.copy(), B.val.copy())


def _restore(B: CsrMatrix, saved: tuple) -> None:
    # in place, so checksum sets and callers keep referring to the same arrays
    B.rowptr[...] = saved[0]
    B.colid[...] = saved[1]
    B.val[...] = saved[2]


def take_checkpoint(A: CsrMatrix, M_factor: CsrMatrix, state: SolverState,
                    M_factor_t: Optional[CsrMatrix] = None,
                    reuse: Optional[Checkpoint] = None) -> Checkpoint:
    """Deep copy of the state and of the matrix arrays.

    The matrices never change during a solve, so ``reuse`` lets a new
    checkpoint share the matrix copies of an earlier, verified one.  This
    also keeps silent corruption that slipped below the detection threshold
    out of later checkpoints.
    """
    if reuse is not None:
        return Checkpoint(state.copy(), reuse.matrix, reuse.factor, reuse.factor_t, state.iter)
    ft = _save(M_factor_t) if M_factor_t is not None else None
    return Checkpoint(state.copy(), _save(A), _save(M_factor), ft, state.iter)


def rollback(ckpt: Checkpoint, A: CsrMatrix, M_factor: CsrMatrix,
             M_factor_t: Optional[CsrMatrix] = None) -> SolverState:
    """Restore the matrices in place and return a fresh copy of the saved state."""
    _restore(A, ckpt.matrix)
    _restore(M_factor, ckpt.factor)
    if M_factor_t is not None and ckpt.factor_t is not None:
        _restore(M_factor_t, ckpt.factor_t)
    return ckpt.state.copy()


# ---------------------------------------------------------- configuration


@dataclass
class MethodConfig:
    method: str = "abft_detection"
    d: int = 1
    s: int = 1
    tol_solver: float = 1e-14
    max_iters: int = 50
    tol_orth: float = 1e-10
    tol_res: Optional[float] = None   # None: rounding bound for the matrix order
    T_verif: float = 0.0
    T_cp: float = 0.0
    T_rec: float = 0.0
    T_verif_iter: float = 0.0
    max_failed_rollbacks: int = 50
    escalate_after: int = 3   # failed retries before falling back one checkpoint
    max_executed: Optional[int] = None   # default: 200 * max_iters

    def __post_init__(self):
        if self.method not in METHOD_NAMES:
            raise ValueError(f"unknown method {self.method!r}")
        if self.d < 1 or self.s < 1:
            raise ValueError("d and s must be at least 1")
        if self.method in ("abft_detection", "abft_correction") and self.d != 1:
            raise ValueError("ABFT methods verify every iteration; d must be 1")
        if self.escalate_after < 1:
            raise ValueError("escalate_after must be at least 1")
        if self.max_iters < 0:
            raise ValueError("max_iters must be non-negative")

    @property
    def checkpoint_interval(self) -> int:
        return self.s * self.d


RUN_COLUMNS = ["method", "converged", "aborted", "iters", "iters_executed", "rollbacks",
               "corrections", "detections", "checkpoints", "verifications", "faults",
               "final_residual", "wall_units", "wall_seconds"]


@dataclass
class RunReport:
    method: str
    converged: bool = False
    aborted: bool = False
    iters: int = 0
    iters_executed: int = 0
    rollbacks: int = 0
    corrections: int = 0
    detections: int = 0
    checkpoints: int = 0
    verifications: int = 0
    faults: int = 0
    final_residual: float = math.nan
    wall_units: float = 0.0
    wall_seconds: float = 0.0
    x: Optional[np.ndarray] = field(default=None, repr=False)
    iterates: Optional[list] = field(default=None, repr=False)
    trace: Optional[list] = field(default=None, repr=False)
    fault_log: list = field(default_factory=list, repr=False)

    def csv_row(self) -> list:
        out = []
        for c in RUN_COLUMNS:
            v = getattr(self, c)
            out.append(int(v) if isinstance(v, bool) else v)
        return out


# ------------------------------------------------------- redundant kernels


def _dot(u: np.ndarray, v: np.ndarray) -> float:
    return float(_kernels.dot(u, v))


def _axpy(alpha: float, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    return alpha * u + v


def _vote_scalar(a: float, b: float, c: float) -> float:
    ba, bb, bc = _bits(a), _bits(b), _bits(c)
    if ba == bb or ba == bc:
        return a
    if bb == bc:
        return b
    raise TmrFailure("three-way disagreement in a redundant dot product")


def tmr_dot(u: np.ndarray, v: np.ndarray, corrupt=None) -> float:
    """Dot product computed three times and decided by majority.

    ``corrupt(replica, value) -> value`` lets a fault model tamper with a
    replica's result.  Raises :class:`TmrFailure` if no two replicas agree.
    """
    if u.shape != v.shape:
        raise ValueError("dot product of vectors with different lengths")
    vals = []
    for rep in range(3):
        val = _dot(u, v)
        if corrupt is not None:
            val = corrupt(rep, val)
        vals.append(val)
    return _vote_scalar(*vals)


def tmr_axpy(alpha: float, u: np.ndarray, v: np.ndarray, corrupt=None) -> np.ndarray:
    """``alpha * u + v`` three times, voted component by component.

    ``corrupt(replica, array)`` may modify a replica in place.
    """
    if u.shape != v.shape:
        raise ValueError("vector update of vectors with different lengths")
    reps = []
    for rep in range(3):
        w = _axpy(alpha, u, v)
        if corrupt is not None:
            corrupt(rep, w)
        reps.append(w)
    a, b, c = (w.view(np.uint64) for w in reps)
    ab, ac, bc = a == b, a == c, b == c
    if np.all(ab & ac):
        return reps[0]
    if np.any(~(ab | ac | bc)):
        raise TmrFailure("three-way disagreement in a redundant vector update")
    out = reps[0].copy()
    use_b = ~(ab | ac)
    out[use_b] = reps[1][use_b]
    return out


# ------------------------------------------------------------ verification


def default_tol_res(n: int) -> float:
    """Relative bound on the drift between the recurrence and the true residual."""
    return 2.0 * gamma(2 * n) * n


def verify_online(A: CsrMatrix, b: np.ndarray, state: SolverState, tol_orth: float = 1e-10,
                  tol_res: Optional[float] = None, normA1: Optional[float] = None,
                  solved_below: float = 0.0) -> bool:
    """Conjugacy check on ``p``/``q`` and a recomputed-residual check.

    True when ``|p.q| <= tol_orth ||p|| ||q||`` and
    ``||(b - A x) - r||_inf <= tol_res (||A||_1 ||x||_inf + ||b||_inf)``.
    Non-finite values fail.

    Once the true residual ``||b - A x||_2`` is at most ``solved_below`` the
    search direction is rounding noise and conjugacy is not tested; the
    answer is then vouched for by the recomputed residual alone.
    """
    if tol_res is None:
        tol_res = default_tol_res(A.n)
    if normA1 is None:
        normA1 = A.norm1()
    with np.errstate(all="ignore"):
        p, q = state.p, state.q
        pn = math.sqrt(_dot(p, p))
        qn = math.sqrt(_dot(q, q))
        pq = abs(_dot(p, q))
        if not (math.isfinite(pn) and math.isfinite(qn) and math.isfinite(pq)):
            return False
        x = state.x
        if not np.all(np.isfinite(x)) or not np.all(np.isfinite(state.r)):
            return False
        try:
            ax = spmxv_plain(A, x)
        except ValueError:
            return False
        true_r = b - ax
        solved = math.sqrt(_dot(true_r, true_r)) <= solved_below
        if not solved and pn > 0 and qn > 0 and not (pq <= tol_orth * pn * qn):
            return False
        gap = float(np.max(np.abs(true_r - state.r)))
        scale = normA1 * float(np.max(np.abs(x))) + float(np.max(np.abs(b)))
    return gap <= tol_res * scale


# ---------------------------------------------------------- preconditioner


def default_preconditioner(A: CsrMatrix) -> CsrMatrix:
    """Diagonal factor ``diag(1/sqrt(a_ii))``."""
    dg = A.diagonal()
    if np.any(dg <= 0):
        raise ValueError("matrix has a non-positive diagonal entry; supply a factor")
    return CsrMatrix(A.n, np.arange(A.n + 1), np.arange(A.n), 1.0 / np.sqrt(dg))


DENSE_FACTOR_LIMIT = 5000


def inverse_factor(A: CsrMatrix, shift: float = 0.0, drop: float = 0.0) -> CsrMatrix:
    """Inverse Cholesky factor ``F = L^-1`` of ``A + shift*I`` as a sparse matrix.

    ``F^T F`` is the inverse of the shifted matrix, so a positive ``shift``
    gives a weaker but still dense approximate inverse.  Entries below
    ``drop`` times the largest magnitude of their row are discarded (the
    diagonal is always kept).  The factor is formed densely, which limits
    this builder to small orders.
    """
    if A.n > DENSE_FACTOR_LIMIT:
        raise ValueError(f"dense factorization limited to order {DENSE_FACTOR_LIMIT}")
    if shift < 0 or drop < 0:
        raise ValueError("shift and drop must be non-negative")
    dense = A.to_dense()
    dense[np.diag_indices(A.n)] += shift
    try:
        L = np.linalg.cholesky(dense)
    except np.linalg.LinAlgError as exc:
        raise ValueError("shifted matrix is not positive definite") from exc
    F = scipy.linalg.solve_triangular(L, np.eye(A.n), lower=True)
    if drop > 0:
        keep = np.abs(F) >= drop * np.abs(F).max(axis=1, keepdims=True)
        keep[np.diag_indices(A.n)] = True
        F[~keep] = 0.0
    return from_scipy(sp.csr_matrix(F))


# ------------------------------------------------------------------ solver


class _Rollback(Exception):
    """Raised when a step cannot be trusted; ``counted`` if already tallied."""

    def __init__(self, counted: bool = False):
        super().__init__()
        self.counted = counted


class _Abort(Exception):
    pass


@dataclass
class _Ctx:
    A: CsrMatrix
    F: CsrMatrix
    Ft: CsrMatrix
    b: np.ndarray
    cfg: MethodConfig
    report: RunReport
    cs_A: object = None
    cs_F: object = None
    cs_Ft: object = None
    trace: Optional[list] = None
    time: float = 0.0
    it: int = 0          # iteration being executed, for the event log

    def log(self, it, event):
        if self.trace is not None:
            self.trace.append((it, event, self.time))


def _finite(*vals) -> bool:
    return all(math.isfinite(v) for v in vals)


def _product(ctx: _Ctx, B: CsrMatrix, cs, v: np.ndarray, *, correct: bool,
             x_flips=(), y_flips=()) -> np.ndarray:
    """One checksum-protected product with the given input/output faults."""
    trusted = v.copy() if x_flips else None
    for idx, bit in x_flips:
        apply_flip(v, idx, bit)
    hook = None
    if y_flips:
        def hook(y):
            for idx, bit in y_flips:
                apply_flip(y, idx, bit)
    out = spmxv_multi(B, v, cs, correct, x_trusted=trusted, y_hook=hook)
    if out.status == "clean":
        return out.y
    ctx.report.detections += 1
    if out.status == "corrected":
        ctx.report.corrections += 1
        ctx.log(ctx.it, "correct")
        return out.y
    raise _Rollback(counted=True)


def _group(events):
    by = {}
    for e in events:
        by.setdefault(e.target, []).append((e.index, e.bit))
    return by


def _hit_matrix(A: CsrMatrix, by: dict) -> None:
    for t in ("val", "colid", "rowptr"):
        for idx, bit in by.get(t, ()):
            apply_flip(getattr(A, t), idx, bit)


def _replica_corrupter(flips):
    if not flips:
        return None

    def corrupt(rep, w):
        if rep == 0:
            for idx, bit in flips:
                apply_flip(w, idx, bit)
    return corrupt


def _step_protected(ctx: _Ctx, st: SolverState, events) -> SolverState:
    """One iteration with checksum-protected products and voted vector kernels."""
    correct = ctx.cfg.method == "abft_correction"
    by = _group(events)
    _hit_matrix(ctx.A, by)
    try:
        q = _product(ctx, ctx.A, ctx.cs_A, st.p, correct=correct,
                     x_flips=by.get("p", ()), y_flips=by.get("q", ()))
        pq = tmr_dot(st.p, q)
        alpha = st.rz / pq
        if not _finite(alpha):
            raise _Rollback()
        x = tmr_axpy(alpha, st.p, st.x, _replica_corrupter(by.get("x", ())))
        r = tmr_axpy(-alpha, q, st.r)
        u = _product(ctx, ctx.F, ctx.cs_F, r, correct=correct, x_flips=by.get("r", ()))
        z = _product(ctx, ctx.Ft, ctx.cs_Ft, u, correct=correct, y_flips=by.get("z", ()))
        rz = tmr_dot(r, z)
        beta = rz / st.rz
        if not _finite(beta):
            raise _Rollback()
        p = tmr_axpy(beta, st.p, z)
        rnorm2 = tmr_dot(r, r)
    except TmrFailure:
        ctx.report.detections += 1
        raise _Rollback(counted=True)
    if not _finite(rnorm2):
        raise _Rollback()
    return SolverState(x, r, z, p, q, st.iter + 1, rnorm2, rz)


def _step_plain(ctx: _Ctx, st: SolverState, events, guard_precond: bool) -> SolverState:
    """One iteration with plain kernels; faults land directly in memory."""
    by = _group(events)
    _hit_matrix(ctx.A, by)
    p = st.p
    for idx, bit in by.get("p", ()):
        apply_flip(p, idx, bit)
    with np.errstate(all="ignore"):
        try:
            q = spmxv_plain(ctx.A, p)
        except ValueError:
            raise _Abort()
        for idx, bit in by.get("q", ()):
            apply_flip(q, idx, bit)
        pq = _dot(p, q)
        alpha = st.rz / pq if pq != 0 else math.nan
        if not _finite(alpha):
            raise _Rollback()
        x = _axpy(alpha, p, st.x)
        for idx, bit in by.get("x", ()):
            apply_flip(x, idx, bit)
        r = _axpy(-alpha, q, st.r)
        for idx, bit in by.get("r", ()):
            apply_flip(r, idx, bit)
        if guard_precond:
            u = _product(ctx, ctx.F, ctx.cs_F, r, correct=False)
            z = _product(ctx, ctx.Ft, ctx.cs_Ft, u, correct=False)
        else:
            z = spmxv_plain(ctx.Ft, spmxv_plain(ctx.F, r))
        for idx, bit in by.get("z", ()):
            apply_flip(z, idx, bit)
        rz = _dot(r, z)
        beta = rz / st.rz if st.rz != 0 else math.nan
        if not _finite(beta):
            raise _Rollback()
        p_new = _axpy(beta, p, z)
        rnorm2 = _dot(r, r)
    if not _finite(rnorm2):
        raise _Rollback()
    return SolverState(x, r, z, p_new, q, st.iter + 1, rnorm2, rz)


def _initial_state(A, F, Ft, b, x0) -> SolverState:
    x = np.zeros(A.n) if x0 is None else np.array(x0, dtype=np.float64)
    r = b - spmxv_plain(A, x)
    z = spmxv_plain(Ft, spmxv_plain(F, r))
    p = z.copy()
    return SolverState(x, r, z, p, np.zeros(A.n), 0, _dot(r, r), _dot(r, z))


def pcg_solve(A: CsrMatrix, M_factor: Optional[CsrMatrix], b, cfg: MethodConfig,
              injector: Optional[FaultPlan] = None, *, x0=None, keep_iterates: bool = False,
              trace: bool = False) -> RunReport:
    """Solve ``A x = b`` under the resilience policy of ``cfg.method``.

    Stops when ``||r|| <= tol_solver (||A||_1 ||r_0|| + ||b||)``, after
    ``max_iters`` completed iterations, or on abort (non-finite values in the
    unprotected mode, too many consecutive failed rollbacks, or the execution
    cap).  Setup (initial residual, checksums) is fault-free.  The matrix is
    modified in place by faults and restored by rollbacks; pass a copy if the
    caller's matrix must stay intact.
    """
    t0 = time.perf_counter()
    b = np.ascontiguousarray(b, dtype=np.float64)
    if b.shape != (A.n,):
        raise ValueError("right-hand side has the wrong length")
    if not np.all(np.isfinite(b)):
        raise ValueError("right-hand side must be finite")
    F = default_preconditioner(A) if M_factor is None else M_factor
    if F.n != A.n:
        raise ValueError(f"preconditioner order {F.n} does not match matrix order {A.n}")
    Ft = F.transpose()
    method = cfg.method
    report = RunReport(method=method)
    ctx = _Ctx(A, F, Ft, b, cfg, report, trace=[] if trace else None)
    if method == "abft_detection":
        k = 2
    elif method == "abft_correction":
        k = 3
    else:
        k = 2
    if method != "none":
        ctx.cs_A = compute_checksums(A, "multi", k)
        ctx.cs_F = compute_checksums(F, "multi", k)
        ctx.cs_Ft = compute_checksums(Ft, "multi", k)

    normA1 = A.norm1()
    st = _initial_state(A, F, Ft, b, x0)
    threshold = cfg.tol_solver * (normA1 * math.sqrt(st.rnorm2) + math.sqrt(_dot(b, b)))
    tol_res = cfg.tol_res if cfg.tol_res is not None else default_tol_res(A.n)
    iterates = [st.x.copy()] if keep_iterates else None
    max_exec = cfg.max_executed if cfg.max_executed is not None else 200 * max(cfg.max_iters, 1)
    plan = injector if injector is not None else FaultPlan()
    protected = method in ("abft_detection", "abft_correction")
    interval = cfg.checkpoint_interval

    def charge(units, it, event):
        ctx.time += units
        ctx.log(it, event)

    # Checkpoints form a chain.  A state can pass verification and still fail
    # every retry (a perturbation just under the thresholds that grows later),
    # so repeated failures from one checkpoint fall back to the one before.
    chain = []
    if method != "none":
        chain.append(take_checkpoint(A, F, st, Ft))
        report.checkpoints += 1
        charge(cfg.T_cp, 0, "checkpoint")
    # The online residual check runs on the reliable checkpointed copy of the
    # matrix.  Checking against the working copy would accept a recurrence
    # that is consistent with a corrupted matrix.
    A_ref = CsrMatrix(A.n, *chain[0].matrix) if chain else A

    high_water = 0      # latest iteration ever checkpointed
    failed_in_row = 0   # failures since the last new checkpoint
    fails_here = 0      # failures since the last fall-back

    def fail_and_rollback():
        nonlocal st, failed_in_row, fails_here
        failed_in_row += 1
        fails_here += 1
        if fails_here >= cfg.escalate_after and len(chain) > 1:
            chain.pop()
            fails_here = 0
        st = rollback(chain[-1], A, F, Ft)
        report.rollbacks += 1
        charge(cfg.T_rec, st.iter, "rollback")

    def since_checkpoint():
        return st.iter - chain[-1].taken_at

    step = 0
    while True:
        converged = st.rnorm2 >= 0 and math.sqrt(st.rnorm2) <= threshold
        done = converged or st.iter >= cfg.max_iters
        if done and method == "online_detection" and since_checkpoint() % cfg.d != 0:
            report.verifications += 1
            ok = verify_online(A_ref, b, st, cfg.tol_orth, tol_res, normA1, threshold)
            charge(cfg.T_verif, st.iter, "verify")
            if not ok:
                report.detections += 1
                ctx.log(st.iter, "detect")
                fail_and_rollback()
                continue
        if done:
            report.converged = converged
            break
        if report.iters_executed >= max_exec or failed_in_row >= cfg.max_failed_rollbacks:
            report.aborted = True
            break

        events = draw_events(plan, step)
        step += 1
        report.faults += len(events)
        for e in events:
            report.fault_log.append((e.step, st.iter, e.target, e.index, e.bit))
        report.iters_executed += 1
        ctx.it = st.iter + 1
        try:
            if protected:
                new = _step_protected(ctx, st, events)
            else:
                new = _step_plain(ctx, st, events, guard_precond=method == "online_detection")
        except _Rollback as exc:
            # non-finite scalars are caught by a plain guard and count too
            if not exc.counted and method != "none":
                report.detections += 1
            charge(1.0 + (cfg.T_verif if protected else cfg.T_verif_iter), st.iter + 1, "detect")
            if method == "none":
                report.aborted = True
                break
            fail_and_rollback()
            continue
        except _Abort:
            charge(1.0, st.iter + 1, "step")
            report.aborted = True
            break
        st = new
        charge(1.0 + (cfg.T_verif if protected else cfg.T_verif_iter), st.iter, "step")
        if keep_iterates:
            del iterates[st.iter:]
            iterates.append(st.x.copy())

        if method == "online_detection" and since_checkpoint() % cfg.d == 0:
            report.verifications += 1
            ok = verify_online(A_ref, b, st, cfg.tol_orth, tol_res, normA1, threshold)
            charge(cfg.T_verif, st.iter, "verify")
            if not ok:
                report.detections += 1
                ctx.log(st.iter, "detect")
                fail_and_rollback()
                continue
        # after a fall-back no checkpoint is taken until the run has passed
        # every earlier one, so a bad stretch cannot be saved again
        if method != "none" and since_checkpoint() >= interval and st.iter > high_water:
            chain.append(take_checkpoint(A, F, st, Ft, reuse=chain[-1]))
            high_water = st.iter
            report.checkpoints += 1
            failed_in_row = fails_here = 0
            charge(cfg.T_cp, st.iter, "checkpoint")

    report.iters = st.iter
    report.final_residual = math.sqrt(st.rnorm2) if st.rnorm2 >= 0 else math.nan
    report.wall_units = ctx.time
    report.x = st.x
    report.iterates = iterates
    report.trace = ctx.trace
    report.wall_seconds = time.perf_counter() - t0
    return report
