"""Expected-time model for chunked verification with periodic checkpoints.

Work is split into chunks of length ``T`` followed by a verification; ``s``
chunks form a frame that ends with a checkpoint.  Faults arrive as a Poisson
process of rate ``lambda_`` per time unit.  A chunk succeeds with probability
``q``: no fault for pure detection, at most one fault when single errors are
corrected in place.  A failed chunk loses the frame so far, pays a recovery
and restarts the frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .sparse import CsrMatrix

__all__ = [
    "MethodProfile",
    "ModelSolution",
    "METHODS",
    "chunk_verif",
    "chunk_success_prob",
    "expected_lost_time",
    "expected_frame_time",
    "expected_frame_time_recursive",
    "frame_overhead",
    "optimize_interval",
    "iteration_ops",
    "calibrate_costs",
]

METHODS = ("online_detection", "abft_detection", "abft_correction")
_LIMIT_EPS = 1e-12
S_CAP = 10_000
PATIENCE = 50


@dataclass
class MethodProfile:
    T_verif: float
    T_cp: float
    T_rec: float
    lambda_: float
    success_law: str = "zero_error"   # or "at_most_one_error"
    T_iter: float = 1.0
    # verification work that scales with the chunk (paid once per iteration
    # inside a chunk rather than once per chunk)
    T_verif_iter: float = 0.0

    def __post_init__(self):
        for name in ("T_verif", "T_cp", "T_rec", "lambda_", "T_iter", "T_verif_iter"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.success_law not in ("zero_error", "at_most_one_error"):
            raise ValueError(f"unknown success law {self.success_law!r}")


@dataclass
class ModelSolution:
    s_opt: int
    d_opt: int
    expected_overhead: float      # E[s, T] / (s T) at the optimum
    expected_frame_time: float


def chunk_verif(profile: MethodProfile, T: float) -> float:
    """Verification cost attached to a chunk of length ``T``."""
    return profile.T_verif + (T / profile.T_iter) * profile.T_verif_iter


def chunk_success_prob(profile: MethodProfile, T: float) -> float:
    lt = profile.lambda_ * T
    if profile.success_law == "zero_error":
        return math.exp(-lt)
    return math.exp(-lt) * (1.0 + lt)


# Bernoulli numbers B_n / n! for n = 1, 2, 4, ..., 14 (odd ones past B_1 vanish)
_BERNOULLI_TERMS = (
    (1, -1.0 / 2.0),
    (2, 1.0 / 12.0),
    (4, -1.0 / 720.0),
    (6, 1.0 / 30240.0),
    (8, -1.0 / 1209600.0),
    (10, 1.0 / 47900160.0),
    (12, -691.0 / 1307674368000.0),
    (14, 1.0 / 74724249600.0),
)


def expected_lost_time(T: float, T_verif: float, q: float, s: int) -> float:
    """Expected work lost in a frame that fails, given a failure happened.

    The closed form ``(T+Tv)(s q^(s+1) - (s+1) q^s + 1) / ((1-q^s)(1-q))``
    cancels badly when ``s (1-q)`` is small.  With ``mu = -log q`` and
    ``B(y) = y / (e^y - 1)`` it equals ``(T+Tv)(1 + (B(mu) - B(s mu)) / mu)``,
    and the difference of the ``B`` terms has a series without cancellation
    for small ``s mu``.  At ``q = 1`` the value is ``(T+Tv)(s+1)/2``.
    """
    if s < 1:
        raise ValueError("s must be at least 1")
    if not 0.0 <= q <= 1.0:
        raise ValueError("q must lie in [0, 1]")
    c = T + T_verif
    if q == 0.0:
        return c
    mu = -math.log(q)
    y = s * mu
    if y < 0.5:
        # sum over n of (B_n / n!) mu^(n-1) (1 - s^n)
        ratio = 0.0
        for n, coef in _BERNOULLI_TERMS:
            ratio += coef * mu ** (n - 1) * (1.0 - float(s) ** n)
    else:
        ratio = 1.0 / math.expm1(mu) - s / math.expm1(y) if y < 700.0 else 1.0 / math.expm1(mu)
    return c * (1.0 + ratio)


def _geometric_sum(q: float, s: int) -> float:
    # (1 - q^s) / (1 - q) = 1 + q + ... + q^(s-1), stable near q = 1
    if 1.0 - q < _LIMIT_EPS:
        return float(s)
    return -math.expm1(s * math.log(q)) / (1.0 - q) if q > 0 else 1.0


def expected_frame_time(profile: MethodProfile, T: float, s: int) -> float:
    """Closed form ``T_cp + (q^-s - 1) T_rec + (T+Tv)(1 - q^s)/(q^s (1-q))``.

    Returns ``inf`` when ``q^-s`` overflows.
    """
    if s < 1 or T <= 0:
        raise ValueError("need s >= 1 and T > 0")
    q = chunk_success_prob(profile, T)
    if q == 0.0:
        return math.inf
    log_inv = -s * math.log(q)
    if log_inv > 700.0:
        return math.inf
    inv_qs = math.exp(log_inv)
    return (
        profile.T_cp
        + math.expm1(log_inv) * profile.T_rec
        + (T + chunk_verif(profile, T)) * _geometric_sum(q, s) * inv_qs
    )


def expected_frame_time_recursive(profile: MethodProfile, T: float, s: int) -> float:
    """Fixed point of ``E = q^s (s(T+Tv) + Tcp) + (1-q^s)(E_lost + Trec + E)``."""
    q = chunk_success_prob(profile, T)
    qs = q ** s
    if qs == 0.0:
        return math.inf
    tv = chunk_verif(profile, T)
    lost = expected_lost_time(T, tv, q, s) if qs < 1.0 else 0.0
    ok = qs * (s * (T + tv) + profile.T_cp)
    return (ok + (1.0 - qs) * (lost + profile.T_rec)) / qs


def frame_overhead(profile: MethodProfile, T: float, s: int) -> float:
    """The quantity minimised over ``s``: ``E[s, T] / (s T)``."""
    return expected_frame_time(profile, T, s) / (s * T)


def optimize_interval(profile: MethodProfile, d_range: Iterable[int] = (1,),
                      s_cap: int = S_CAP, patience: int = PATIENCE) -> ModelSolution:
    """Exhaustive scan for the frame length (and chunk length) of least overhead.

    For each chunk length ``d`` (``T = d * T_iter``) ``s`` runs from 1 until
    the objective has risen ``patience`` times in a row or ``s_cap`` is
    reached.  Ties go to the smaller ``s`` and then the smaller ``d``.
    """
    d_values = sorted(set(int(d) for d in d_range))
    if not d_values:
        raise ValueError("empty chunk-length range")
    if d_values[0] < 1:
        raise ValueError("chunk lengths must be positive")
    best = None
    for d in d_values:
        T = d * profile.T_iter
        prev = math.inf
        rises = 0
        for s in range(1, s_cap + 1):
            val = frame_overhead(profile, T, s)
            if best is None or val < best[0]:
                best = (val, s, d)
            rises = rises + 1 if val > prev else 0
            prev = val
            if rises >= patience:
                break
    val, s, d = best
    return ModelSolution(s, d, val, expected_frame_time(profile, d * profile.T_iter, s))


# ------------------------------------------------------------- calibration


def _spmv_ops(B: CsrMatrix) -> int:
    return B.nnz + B.n


def iteration_ops(A: CsrMatrix, M_factor: Optional[CsrMatrix] = None) -> int:
    """Word operations of one unprotected iteration.

    One product with ``A``, two with the preconditioner factor, three dot
    products (two for the scalars, one for the residual norm) and three
    vector updates.
    """
    if M_factor is None:
        M_factor = _diag_like(A)
    n = A.n
    return _spmv_ops(A) + 2 * _spmv_ops(M_factor) + 6 * n


def _diag_like(A: CsrMatrix) -> CsrMatrix:
    return CsrMatrix(A.n, np.arange(A.n + 1), np.arange(A.n), np.ones(A.n))


def calibrate_costs(A: CsrMatrix, method: str, lambda_: float = 0.0,
                    M_factor: Optional[CsrMatrix] = None,
                    cp_word_cost: float = 1.0, rec_word_cost: float = 1.0) -> MethodProfile:
    """Resilience costs of ``method`` in units of one plain iteration.

    ``lambda_`` is the fault rate per iteration.  Costs are operation counts
    divided by :func:`iteration_ops`:

    * ABFT verification: the checksum work of the three protected products,
      ``(4k+2) n`` each with ``k = 2`` for detection and ``k = 3`` for
      correction, plus two extra replicas and a vote for each of the three
      dot products and three vector updates (``13 n``).
    * Online verification: one extra product with ``A`` and six vector passes
      per chunk, plus the detecting checksums of the two preconditioner
      products in every iteration.
    * Checkpoint: the five solver vectors.  The matrices cannot change during
      a solve, so their copy is made once and shared.
    * Recovery: the solver vectors plus the matrix and factor arrays.

    ``cp_word_cost`` and ``rec_word_cost`` scale the per-word copy cost.
    """
    if M_factor is None:
        M_factor = _diag_like(A)
    n = A.n
    it = iteration_ops(A, M_factor)
    verif_iter = 0.0
    if method == "online_detection":
        verif = _spmv_ops(A) + 6 * n
        verif_iter = 2 * (4 * 2 + 2) * n
        law = "zero_error"
    elif method in ("abft_detection", "abft_correction"):
        k = 2 if method == "abft_detection" else 3
        verif = 3 * (4 * k + 2) * n + 13 * n
        law = "zero_error" if method == "abft_detection" else "at_most_one_error"
    else:
        raise ValueError(f"unknown method {method!r}")
    state_words = 5 * n
    matrix_words = (2 * A.nnz + A.n + 1) + 2 * (2 * M_factor.nnz + M_factor.n + 1)
    return MethodProfile(
        T_verif=verif / it,
        T_cp=cp_word_cost * state_words / it,
        T_rec=rec_word_cost * (state_words + matrix_words) / it,
        lambda_=lambda_,
        success_law=law,
        T_verif_iter=verif_iter / it,
    )
