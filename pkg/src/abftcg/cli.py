"""Command-line front end: ``abftcg <command> [options]``.

Every command writes RFC-4180 CSV to ``--out`` or to standard output.
"""

from __future__ import annotations

import argparse
import csv
import sys
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from . import __version__, harness
from .abft import compute_checksums, protected_spmxv
from .faults import memory_words
from .pcg import RUN_COLUMNS, inverse_factor
from .sparse import generate_test_matrix, load_matrix_market, spmxv_plain

METHOD_ALIASES = {
    "online": "online_detection",
    "abft-detect": "abft_detection",
    "abft-correct": "abft_correction",
    "none": "none",
}
ALL_METHODS = ("online", "abft-detect", "abft-correct")
DEFAULT_ALPHAS = "1/4,1/8,1/16,1/32,1/64"
TRACE_COLUMNS = ["iter", "event", "time"]


def _rate(text: str) -> float:
    """Parse ``0.0625`` or ``1/16``."""
    try:
        return float(Fraction(text.strip()))
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(f"not a rate: {text!r}") from exc


def _rates(text: str) -> list:
    return [_rate(t) for t in text.split(",") if t.strip()]


def _ints(text: str) -> list:
    """``1,2,4`` or an inclusive range ``1:24``."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if ":" in part:
            lo, hi = part.split(":", 1)
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    if not out or min(out) < 1:
        raise argparse.ArgumentTypeError("expected positive integers")
    return out


def _load_matrix(args):
    if args.matrix:
        return load_matrix_market(args.matrix)
    parts = args.generate.split(":")
    kind = parts[0]
    try:
        n = int(parts[1])
        seed = int(parts[2]) if len(parts) > 2 else 0
        npr = int(parts[3]) if len(parts) > 3 else 5
    except (IndexError, ValueError):
        raise SystemExit(f"bad --generate spec {args.generate!r}; use kind:n[:seed[:nnz_per_row]]")
    return generate_test_matrix(kind, n, seed=seed, nnz_per_row=npr)


def _problem(args) -> harness.Problem:
    A = _load_matrix(args)
    F = None
    if getattr(args, "factor", None):
        F = load_matrix_market(args.factor)
    elif getattr(args, "inverse_factor_shift", None) is not None:
        F = inverse_factor(A, shift=args.inverse_factor_shift)
    return harness.Problem(A, F)


def _writer(path: Optional[str]):
    fh = open(path, "w", newline="") if path else sys.stdout
    return fh, csv.writer(fh, lineterminator="\n")


def _write_table(path, columns, rows):
    fh, w = _writer(path)
    try:
        w.writerow(columns)
        for r in rows:
            w.writerow([harness._fmt(r[c]) for c in columns])
    finally:
        if fh is not sys.stdout:
            fh.close()


def _add_matrix_args(p, factor=True):
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--matrix", help="Matrix Market file (real, square, coordinate)")
    g.add_argument("--generate", help="generated matrix kind:n[:seed[:nnz_per_row]], "
                   "kinds: laplacian2d, zero_colsum, diag_dominant, identity, trefethen")
    if factor:
        f = p.add_mutually_exclusive_group()
        f.add_argument("--factor", help="preconditioner factor F (z = F^T F r) as Matrix Market")
        f.add_argument("--inverse-factor-shift", type=float, default=None,
                       help="use the dense inverse Cholesky factor of A + shift*I")
    p.add_argument("--out", help="CSV output file (default: standard output)")


def _method(name: str) -> str:
    try:
        return METHOD_ALIASES[name]
    except KeyError:
        raise SystemExit(f"unknown method {name!r}")


# ------------------------------------------------------------------ commands


def cmd_spmv_check(args) -> int:
    A = _load_matrix(args)
    targets = tuple(args.targets.split(","))
    bad = set(targets) - {"val", "colid", "rowptr", "x", "y"}
    if bad:
        raise SystemExit(f"unknown audit targets {sorted(bad)}")
    if args.scheme != "multi" and "y" in targets:
        raise SystemExit("output-error targets need the multi scheme")
    if args.mode == "control":
        rng = np.random.default_rng(args.seed)
        x = rng.uniform(-1.0, 1.0, A.n)
        cs = compute_checksums(A, args.scheme, args.k)
        out = protected_spmxv(A, x, cs, args.correct)
        pert = harness._infnorm_diff(out.y, spmxv_plain(A, x))
        rows = [harness.AuditRow("none", -1, -1, out.status, pert, out.tau_ref,
                                 out.status == "clean" and not pert <= out.tau_ref, True,
                                 False)]
    else:
        sample = args.count if args.mode == "sampled" else None
        rows = harness.audit_spmv(A, args.scheme, args.k, args.correct, seed=args.seed,
                                  targets=targets, sample=sample)
    fh, _ = _writer(args.out)
    try:
        harness.rows_to_csv(rows, harness.AUDIT_COLUMNS, fh)
    finally:
        if fh is not sys.stdout:
            fh.close()
    summary = harness.audit_summary(rows)
    print(" ".join(f"{k}={v}" for k, v in summary.items()), file=sys.stderr)
    return 1 if summary["wrong_silent"] else 0


def cmd_solve(args) -> int:
    prob = _problem(args)
    method = _method(args.method)
    alpha = args.alpha
    s, d = args.s, args.d
    if method != "none" and (s is None or d is None):
        s_m, d_m, _ = harness.model_interval(prob, method, alpha if args.lam is None
                                             else args.lam * _words(prob))
        s = s_m if s is None else s
        d = d_m if d is None else d
    s = s or 1
    d = d or 1
    rep = harness.run_solve(prob, method, alpha, args.seed, s, d, args.max_iters,
                            lambda_=args.lam, trace=bool(args.trace))
    fh, w = _writer(args.out)
    try:
        w.writerow(["s", "d", "alpha"] + RUN_COLUMNS)
        w.writerow([s, d, harness._fmt(alpha)] + [harness._fmt(v) for v in rep.csv_row()])
    finally:
        if fh is not sys.stdout:
            fh.close()
    if args.trace:
        with open(args.trace, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_COLUMNS)
            for it, ev, t in rep.trace:
                w.writerow([it, ev, repr(float(t))])
    return 0 if (rep.converged or method == "none") and not rep.aborted else 2


def _words(prob) -> int:
    return memory_words(prob.A.n, prob.A.nnz)


def cmd_sweep(args) -> int:
    prob = _problem(args)
    methods = [_method(m) for m in args.methods.split(",")]
    rows = harness.sweep(prob, methods, args.alphas, args.reps, args.seed, args.max_iters,
                         workers=args.workers)
    _write_table(args.out, harness.SWEEP_COLUMNS, rows)
    return 0


def cmd_validate_model(args) -> int:
    prob = _problem(args)
    method = _method(args.method)
    rows, summary = harness.validate_model(prob, method, args.alpha, args.s_range, args.reps,
                                           args.seed, args.max_iters, workers=args.workers)
    _write_table(args.out, harness.VALIDATE_COLUMNS, rows)
    if args.summary:
        _write_table(args.summary, harness.VALIDATE_SUMMARY_COLUMNS, [summary])
    else:
        if not args.out:
            sys.stdout.write("\n")
        _write_table(None, harness.VALIDATE_SUMMARY_COLUMNS, [summary])
    return 0


def cmd_model(args) -> int:
    prob = _problem(args)
    methods = [_method(m) for m in args.methods.split(",")]
    rows = harness.model_table(prob, methods, args.alphas)
    _write_table(args.out, harness.MODEL_COLUMNS, rows)
    return 0


# -------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="abftcg", description=__doc__)
    ap.add_argument("--version", action="version",
                    version=f"abftcg {__version__} (csv schema {harness.CSV_SCHEMA_VERSION})")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spmv-check", help="single-flip audit of one protected product")
    _add_matrix_args(p, factor=False)
    p.add_argument("--scheme", choices=("shift", "split", "multi"), default="multi")
    p.add_argument("--k", type=int, default=2, help="checksum count for the multi scheme")
    p.add_argument("--correct", action="store_true", help="repair single errors (multi, k >= 2)")
    p.add_argument("--mode", choices=("exhaustive", "sampled", "control"), default="exhaustive")
    p.add_argument("--count", type=int, default=1000, help="flips drawn in sampled mode")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--targets", default="val,colid,rowptr,x",
                   help="comma list from val,colid,rowptr,x,y")
    p.set_defaults(func=cmd_spmv_check)

    p = sub.add_parser("solve", help="one seeded solve, one CSV row")
    _add_matrix_args(p)
    p.add_argument("--method", choices=tuple(METHOD_ALIASES), default="abft-detect")
    rate = p.add_mutually_exclusive_group()
    rate.add_argument("--alpha", type=_rate, default=0.0, help="faults per iteration")
    rate.add_argument("--lambda", dest="lam", type=float, default=None,
                      help="fault rate per word and iteration")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--s", type=int, default=None, help="chunks per checkpoint (default: model)")
    p.add_argument("--d", type=int, default=None, help="iterations per chunk (online only)")
    p.add_argument("--max-iters", type=int, default=50)
    p.add_argument("--trace", help="write the per-iteration event log to this CSV file")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="mean simulated time over a grid of fault rates")
    _add_matrix_args(p)
    p.add_argument("--methods", default=",".join(ALL_METHODS))
    p.add_argument("--alphas", type=_rates, default=_rates(DEFAULT_ALPHAS))
    p.add_argument("--reps", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iters", type=int, default=50)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("validate-model", help="measured time per checkpoint interval")
    _add_matrix_args(p)
    p.add_argument("--method", choices=("abft-detect", "abft-correct", "online"),
                   default="abft-detect")
    p.add_argument("--alpha", type=_rate, default=1 / 16)
    p.add_argument("--s-range", type=_ints, default=_ints("1:16"))
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iters", type=int, default=50)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--summary", help="CSV file for the (s_model, s_best, loss) summary")
    p.set_defaults(func=cmd_validate_model)

    p = sub.add_parser("model", help="model-optimal intervals and predicted overheads")
    _add_matrix_args(p)
    p.add_argument("--methods", default=",".join(ALL_METHODS))
    p.add_argument("--alphas", type=_rates, default=_rates(DEFAULT_ALPHAS))
    p.set_defaults(func=cmd_model)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
