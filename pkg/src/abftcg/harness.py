"""Experiment drivers behind the command line: kernel audits, solves, sweeps."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import stats

from .abft import compute_checksums, protected_spmxv
from .faults import FaultPlan, apply_flip, enumerate_single_flips, target_sizes
from .model import MethodProfile, calibrate_costs, optimize_interval
from .pcg import MethodConfig, RunReport, pcg_solve
from .sparse import CsrMatrix, spmxv_plain

# bumped whenever a column is added, removed, renamed or changes meaning
CSV_SCHEMA_VERSION = 1

SWEEP_COLUMNS = ["method", "alpha", "mtbf", "s", "d", "reps", "mean_wall", "ci_low",
                 "ci_high", "std_wall", "mean_rollbacks", "mean_corrections",
                 "converged_frac", "model_overhead"]
VALIDATE_COLUMNS = ["method", "alpha", "s", "reps", "mean_wall", "ci_low", "ci_high"]
VALIDATE_SUMMARY_COLUMNS = ["method", "alpha", "s_model", "mean_model", "s_best",
                            "mean_best", "loss_pct"]
MODEL_COLUMNS = ["method", "lambda", "s_opt", "d_opt", "expected_overhead",
                 "T_verif", "T_verif_iter", "T_cp", "T_rec"]
D_RANGE = range(1, 41)

AUDIT_COLUMNS = ["target", "index", "bit", "outcome", "perturbation", "tolerance",
                 "wrong_silent", "location_ok", "exact"]


@dataclass
class AuditRow:
    target: str
    index: int
    bit: int
    outcome: str
    perturbation: float
    tolerance: float
    wrong_silent: bool
    location_ok: bool
    exact: bool  # corrected output equals the fault-free product bit for bit


def _infnorm_diff(a: np.ndarray, b: np.ndarray) -> float:
    with np.errstate(all="ignore"):
        d = np.abs(a - b)
    if not np.all(np.isfinite(d)):
        return math.inf
    return float(d.max()) if d.size else 0.0


def audit_flip(A: CsrMatrix, x: np.ndarray, cs, target: str, index: int, bit: int,
               correct: bool = False, y_ref: Optional[np.ndarray] = None) -> AuditRow:
    """Inject one flip, run one protected product and classify the outcome.

    Matrix flips corrupt a private copy of ``A`` before the product.  Input
    flips hit ``x`` after the trusted copy was taken.  ``y`` flips corrupt the
    output right after it is computed.  The perturbation of an undetected
    input flip is the size of the input change; for everything else it is the
    largest change of the output.
    """
    if y_ref is None:
        y_ref = spmxv_plain(A, x)
    Aw = A.copy() if target in ("val", "colid", "rowptr") else A
    xw = x.copy()
    hook = None
    if target in ("val", "colid", "rowptr"):
        apply_flip(getattr(Aw, target), index, bit)
    elif target == "x":
        apply_flip(xw, index, bit)
    elif target == "y":
        def hook(y):
            apply_flip(y, index, bit)
    else:
        raise ValueError(f"unknown audit target {target!r}")
    x_bad = xw[index] if target == "x" else None

    out = protected_spmxv(Aw, xw, cs, correct, x_trusted=x, y_hook=hook)
    tau = out.tau_ref
    if target == "x" and out.status == "clean":
        delta = abs(x_bad - x[index])
        pert = math.inf if not np.isfinite(delta) else float(delta)
    else:
        pert = _infnorm_diff(out.y, y_ref)
    wrong_silent = out.status == "clean" and not (pert <= tau)
    loc_ok = out.status != "corrected" or out.location == (target, index)
    exact = out.status == "corrected" and np.array_equal(
        out.y.view(np.uint64), y_ref.view(np.uint64)
    )
    return AuditRow(target, index, bit, out.status, pert, tau, wrong_silent, loc_ok, exact)


def audit_spmv(A: CsrMatrix, scheme: str, k: int = 2, correct: bool = False,
               x: Optional[np.ndarray] = None, seed: int = 0,
               targets: Sequence[str] = ("val", "colid", "rowptr", "x"),
               sample: Optional[int] = None) -> list:
    """Single-flip audit of one protected product.

    Exhaustive over every word and bit of ``targets`` unless ``sample`` asks
    for that many uniformly drawn flips.  ``x`` defaults to a seeded vector
    with entries in ``[-1, 1]``.
    """
    rng = np.random.default_rng(seed)
    if x is None:
        x = rng.uniform(-1.0, 1.0, A.n)
    x = np.ascontiguousarray(x, dtype=np.float64)
    cs = compute_checksums(A, scheme, k)
    y_ref = spmxv_plain(A, x)
    flips = list(enumerate_single_flips(A, x, targets))
    if sample is not None:
        pick = rng.choice(len(flips), size=min(sample, len(flips)), replace=False)
        flips = [flips[i] for i in np.sort(pick)]
    return [audit_flip(A, x, cs, t, i, b, correct, y_ref) for t, i, b in flips]


def audit_summary(rows: Iterable[AuditRow]) -> dict:
    rows = list(rows)
    out = {"flips": len(rows)}
    for status in ("clean", "detected", "corrected"):
        out[status] = sum(r.outcome == status for r in rows)
    out["wrong_silent"] = sum(r.wrong_silent for r in rows)
    out["bad_location"] = sum(not r.location_ok for r in rows)
    return out


def rows_to_csv(rows: Iterable, columns: Sequence[str], fh=None) -> str:
    buf = fh if fh is not None else io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        d = asdict(r) if hasattr(r, "__dataclass_fields__") else dict(r)
        w.writerow([_fmt(d[c]) for c in columns])
    return buf.getvalue() if fh is None else ""


def _fmt(v):
    if isinstance(v, bool):
        return int(v)
    if isinstance(v, float):
        return repr(v)
    return v


# ---------------------------------------------------------------- solves


@dataclass
class Problem:
    """Matrix, preconditioner factor and right-hand side of one experiment."""

    A: CsrMatrix
    M_factor: Optional[CsrMatrix] = None
    b: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.b is None:
            # known solution of all ones
            self.b = spmxv_plain(self.A, np.ones(self.A.n))


def method_profile(prob: Problem, method: str, alpha: float) -> MethodProfile:
    """Calibrated costs with the fault rate expressed per iteration.

    ``alpha / M`` per word over ``M`` words gives ``alpha`` faults per
    iteration.
    """
    return calibrate_costs(prob.A, method, alpha, prob.M_factor)


def model_interval(prob: Problem, method: str, alpha: float, d_range=D_RANGE):
    """Model-optimal ``(s, d)`` for ``method`` and the predicted overhead."""
    prof = method_profile(prob, method, alpha)
    if method != "online_detection":
        d_range = (1,)
    sol = optimize_interval(prof, d_range)
    return sol.s_opt, sol.d_opt, sol.expected_overhead


def method_config(prob: Problem, method: str, alpha: float, s: int, d: int = 1,
                  max_iters: int = 50, **kw) -> MethodConfig:
    prof = method_profile(prob, method, alpha) if method != "none" else None
    costs = {}
    if prof is not None:
        costs = dict(T_verif=prof.T_verif, T_cp=prof.T_cp, T_rec=prof.T_rec,
                     T_verif_iter=prof.T_verif_iter)
    return MethodConfig(method=method, s=s, d=d, max_iters=max_iters, **costs, **kw)


def rep_seed(seed: int, rep: int) -> int:
    """Seed of repetition ``rep``; shared across methods and intervals."""
    return int(np.random.SeedSequence([seed, rep]).generate_state(1)[0])


def run_solve(prob: Problem, method: str, alpha: float = 0.0, seed: int = 0, s: int = 1,
              d: int = 1, max_iters: int = 50, lambda_: Optional[float] = None,
              trace: bool = False, plan: Optional[FaultPlan] = None, **kw) -> RunReport:
    """One seeded solve on a private copy of the matrix.

    The fault rate is ``alpha / M`` per word unless ``lambda_`` gives the
    per-word rate directly.
    """
    A = prob.A
    if plan is None:
        if lambda_ is not None:
            plan = FaultPlan(seed=seed, lambda_=lambda_, sizes=target_sizes(A.n, A.nnz))
            alpha = lambda_ * plan.enabled_words()
        else:
            plan = FaultPlan.from_alpha(alpha, A.n, A.nnz, seed=seed)
    cfg = method_config(prob, method, alpha, s, d, max_iters, **kw)
    F = prob.M_factor.copy() if prob.M_factor is not None else None
    return pcg_solve(A.copy(), F, prob.b, cfg, plan, trace=trace)


def _mean_ci(values: Sequence[float]):
    v = np.asarray(values, dtype=float)
    m = float(v.mean())
    if v.size < 2:
        return m, m, m, 0.0
    sd = float(v.std(ddof=1))
    half = float(stats.t.ppf(0.975, v.size - 1)) * sd / math.sqrt(v.size)
    return m, m - half, m + half, sd


def _one(job):
    prob, method, alpha, seed, s, d, max_iters = job
    rep = run_solve(prob, method, alpha, seed, s, d, max_iters)
    rep.x = rep.iterates = rep.trace = None
    return rep


def _repeat(prob, method, alpha, s, d, reps, seed, max_iters, workers=1):
    """Seeded repetitions, optionally on a process pool; order follows ``rep``."""
    jobs = [(prob, method, alpha, rep_seed(seed, r), s, d, max_iters) for r in range(reps)]
    if workers > 1 and reps > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_one, jobs))
    return [_one(j) for j in jobs]


def sweep(prob: Problem, methods: Sequence[str], alphas: Sequence[float], reps: int = 50,
          seed: int = 0, max_iters: int = 50, d_range=D_RANGE, workers: int = 1) -> list:
    """Mean simulated time per ``(method, alpha)`` at the model-chosen interval.

    Repetition ``r`` uses the same fault seed for every method and rate.
    """
    rows = []
    for method in methods:
        for alpha in alphas:
            s, d, pred = model_interval(prob, method, alpha, d_range)
            reports = _repeat(prob, method, alpha, s, d, reps, seed, max_iters, workers)
            mean, lo, hi, sd = _mean_ci([r.wall_units for r in reports])
            rows.append({
                "method": method, "alpha": alpha,
                "mtbf": math.inf if alpha == 0 else 1.0 / alpha,
                "s": s, "d": d, "reps": reps, "mean_wall": mean, "ci_low": lo,
                "ci_high": hi, "std_wall": sd,
                "mean_rollbacks": float(np.mean([r.rollbacks for r in reports])),
                "mean_corrections": float(np.mean([r.corrections for r in reports])),
                "converged_frac": float(np.mean([r.converged for r in reports])),
                "model_overhead": pred,
            })
    return rows


def validate_model(prob: Problem, method: str, alpha: float, s_values: Sequence[int],
                   reps: int = 100, seed: int = 0, max_iters: int = 50, d: Optional[int] = None,
                   workers: int = 1):
    """Measured mean time for each ``s`` against the model's choice.

    Returns ``(rows, summary)``.  The model's ``s`` is added to the scanned
    values if missing.  ``loss_pct`` is ``100 (E[s_model] - E[s_best]) / E[s_best]``
    with ``s_best`` the empirically fastest interval.  The same fault seeds
    are used for every ``s``.
    """
    s_model, d_model, _ = model_interval(prob, method, alpha)
    d = d_model if d is None else d
    values = sorted(set(int(v) for v in s_values) | {s_model})
    rows = []
    for s in values:
        reports = _repeat(prob, method, alpha, s, d, reps, seed, max_iters, workers)
        mean, lo, hi, _ = _mean_ci([r.wall_units for r in reports])
        rows.append({"method": method, "alpha": alpha, "s": s, "reps": reps,
                     "mean_wall": mean, "ci_low": lo, "ci_high": hi})
    best = min(rows, key=lambda r: (r["mean_wall"], r["s"]))
    at_model = next(r for r in rows if r["s"] == s_model)
    loss = 100.0 * (at_model["mean_wall"] - best["mean_wall"]) / best["mean_wall"]
    summary = {"method": method, "alpha": alpha, "s_model": s_model,
               "mean_model": at_model["mean_wall"], "s_best": best["s"],
               "mean_best": best["mean_wall"], "loss_pct": loss}
    return rows, summary


def model_table(prob: Problem, methods: Sequence[str], alphas: Sequence[float],
                d_range=D_RANGE) -> list:
    rows = []
    for method in methods:
        for alpha in alphas:
            prof = method_profile(prob, method, alpha)
            dr = d_range if method == "online_detection" else (1,)
            sol = optimize_interval(prof, dr)
            rows.append({"method": method, "lambda": alpha, "s_opt": sol.s_opt,
                         "d_opt": sol.d_opt, "expected_overhead": sol.expected_overhead,
                         "T_verif": prof.T_verif, "T_verif_iter": prof.T_verif_iter,
                         "T_cp": prof.T_cp, "T_rec": prof.T_rec})
    return rows
