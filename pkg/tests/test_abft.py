import itertools

import numpy as np
import pytest

from abftcg.abft import (
    UNIT_ROUNDOFF,
    choose_scheme,
    compute_checksums,
    count_null_columns,
    fp_tolerance,
    gamma,
    overhead_counts,
    protected_spmxv,
    select_scheme,
    spmxv_multi,
    spmxv_shift,
    spmxv_split,
    syndrome_csv_header,
    syndrome_csv_row,
)
from abftcg.faults import apply_flip
from abftcg.sparse import CsrMatrix, from_coo, generate_test_matrix, spmxv_plain

g = generate_test_matrix
CORPUS = [g("identity", 8), g("laplacian2d", 5), g("zero_colsum", 8), g("diag_dominant", 16, seed=1)]
SCHEMES = [("shift", 1), ("split", 1), ("multi", 2), ("multi", 3)]


def bits_equal(a, b):
    return np.array_equal(np.asarray(a).view(np.uint64), np.asarray(b).view(np.uint64))


def rng_x(n, seed=0):
    return np.random.default_rng(seed).uniform(-1, 1, n)


# ------------------------------------------------------------- checksums


def test_shift_constant_examples():
    cs = compute_checksums(g("zero_colsum", 3), "shift")
    assert cs.shift_k == 1.0
    np.testing.assert_array_equal(cs.C[0], [1.0, 1.0, 1.0])
    cs = compute_checksums(g("identity", 3), "shift")
    assert cs.shift_k == 0.0
    np.testing.assert_array_equal(cs.C[0], [1.0, 1.0, 1.0])


def test_multi_checksums_of_identity():
    cs = compute_checksums(g("identity", 3), "multi", 2)
    np.testing.assert_array_equal(cs.C, [[1, 1, 1], [1, 2, 3]])
    np.testing.assert_array_equal(cs.M, np.zeros((2, 3)))


def test_weights_are_vandermonde_and_pairwise_independent():
    cs = compute_checksums(g("diag_dominant", 10, seed=2), "multi", 3)
    i = np.arange(1, 11, dtype=float)
    np.testing.assert_array_equal(cs.W, np.column_stack([np.ones(10), i, i * i]))
    for a, b in itertools.combinations(range(10), 2):
        assert np.linalg.det(cs.W[[a, b], :2]) != 0
    for a, b, c in itertools.combinations(range(10), 3):
        assert abs(np.linalg.det(cs.W[[a, b, c]])) > 0.5


@pytest.mark.parametrize("A", CORPUS)
def test_auxiliary_matrix_identity(A):
    cs = compute_checksums(A, "multi", 3)
    n = A.n
    lhs = cs.W.T @ A.to_dense() + cs.M
    bound = 4 * gamma(2 * n) * A.norm1() * np.abs(cs.W).max()
    assert np.all(np.abs(lhs - cs.W.T) <= bound)


@pytest.mark.parametrize("A", CORPUS)
def test_shifted_checksums_are_nonzero(A):
    cs = compute_checksums(A, "shift")
    assert np.all(cs.C[0] != 0.0)


def test_bad_checksum_requests():
    with pytest.raises(ValueError):
        compute_checksums(g("identity", 3), "multi", 4)
    with pytest.raises(ValueError):
        compute_checksums(g("identity", 3), "multi", 0)
    with pytest.raises(ValueError):
        compute_checksums(g("identity", 3), "weighted", 1)


def test_split_flags_a_null_column_without_entries():
    A = from_coo(2, [0], [0], [1.0])
    cs = compute_checksums(A, "split")
    assert cs.uncovered_columns == (1,)
    assert spmxv_split(A, np.array([1.0, 2.0]), cs).status == "clean"


# ------------------------------------------------------------- scheme choice


def test_scheme_choice_examples():
    assert choose_scheme(100, 30) == "shift"
    assert choose_scheme(100, 10) == "split"
    assert choose_scheme(5, 1) == "shift"
    assert choose_scheme(100, 20) == "shift"
    assert choose_scheme(100, 19) == "split"


def test_scheme_choice_on_matrices():
    assert select_scheme(g("zero_colsum", 8)) == "shift"
    assert select_scheme(g("identity", 8)) == "split"
    assert count_null_columns(g("laplacian2d", 5)) == 9   # interior grid points


@pytest.mark.parametrize("A", CORPUS)
def test_instrumented_overhead_matches_cost_table(A):
    n, n_prime = A.n, count_null_columns(A)
    x = rng_x(n)
    shift = spmxv_shift(A, x, compute_checksums(A, "shift"))
    split = spmxv_split(A, x, compute_checksums(A, "split"))
    assert shift.ops["total"] == 5 * n
    assert split.ops["total"] == 4 * n + 5 * n_prime
    assert overhead_counts("shift", n)["total"] == 5 * n
    assert overhead_counts("split", n, n_prime)["total"] == 4 * n + 5 * n_prime


# ------------------------------------------------------------- tolerance


def test_tolerance_examples():
    Z = CsrMatrix(3, np.zeros(4), [], [])
    assert fp_tolerance(Z, 1.0) == 0.0
    u = UNIT_ROUNDOFF
    assert fp_tolerance(g("identity", 3), 1.0) == pytest.approx(2 * (6 * u / (1 - 6 * u)) * 3)
    with pytest.raises(OverflowError):
        gamma(2 ** 53)


def test_tolerance_bounds_observed_checksum_error():
    # |fl(c^T x) - fl(1^T (A x))| over many random x never exceeds the bound
    A = g("laplacian2d", 8)
    n = A.n
    c = A.column_sums()
    factor = fp_tolerance(A, 1.0)
    rng = np.random.default_rng(42)
    X = rng.uniform(-1, 1, (n, 10_000)) * 10.0 ** rng.uniform(-3, 3, 10_000)
    AX = np.column_stack([spmxv_plain(A, X[:, t]) for t in range(X.shape[1])])
    lhs = np.cumsum(c[:, None] * X, axis=0)[-1]       # sequential sums
    rhs = np.cumsum(AX, axis=0)[-1]
    ratio = np.abs(lhs - rhs) / np.abs(X).max(axis=0)
    assert ratio.max() <= factor


# ------------------------------------------------------------- fault-free


@pytest.mark.parametrize("A", CORPUS)
@pytest.mark.parametrize("scheme,k", SCHEMES)
def test_fault_free_products_are_transparent(A, scheme, k):
    cs = compute_checksums(A, scheme, k)
    for seed in range(5):
        x = rng_x(A.n, seed)
        out = protected_spmxv(A, x, cs)
        y = spmxv_plain(A, x)
        assert out.status == "clean"
        if scheme == "split":
            # y + y_hat regroups the sums of rows that hold a moved entry
            moved = np.zeros(A.n, dtype=bool)
            rows = np.repeat(np.arange(A.n), np.diff(A.rowptr))
            moved[rows[cs.split_mask]] = True
            assert bits_equal(out.y[~moved], y[~moved])
            assert np.all(np.abs(out.y - y) <= out.tau_ref)
        else:
            assert bits_equal(out.y, y)


def test_split_with_no_null_column_is_plain():
    A = g("identity", 6)
    cs = compute_checksums(A, "split")
    assert not cs.split_mask.any()
    x = rng_x(6)
    assert bits_equal(spmxv_split(A, x, cs).y, spmxv_plain(A, x))


# ------------------------------------------------------------- detection


def test_shift_detects_flipped_value():
    A = g("identity", 3).copy()
    cs = compute_checksums(A, "shift")
    apply_flip(A.val, 1, 51)
    assert A.val[1] == 1.5
    x = np.array([1.0, 2.0, 3.0])
    out = spmxv_shift(A, x, cs)
    assert out.status == "detected"
    assert out.residual_syndromes[0] == pytest.approx(-0.5 * x[1])


def test_shift_detects_row_pointer_change():
    A0 = g("laplacian2d", 4)
    cs = compute_checksums(A0, "shift")
    A = A0.copy()
    A.rowptr[2] += 1
    out = spmxv_shift(A, np.ones(16), cs)
    assert out.status == "detected"
    assert out.residual_syndromes[2] != 0


def test_split_detects_input_change():
    A = g("zero_colsum", 3)
    cs = compute_checksums(A, "split")
    x = np.array([0.5, -1.0, 2.0])
    bad = x.copy()
    bad[0] += 1.0
    assert spmxv_split(A, bad, cs, x_trusted=x).status == "detected"


def test_out_of_range_column_sets_guard():
    A0 = g("laplacian2d", 4)
    cs = compute_checksums(A0, "multi", 2)
    A = A0.copy()
    apply_flip(A.colid, 5, 40)
    out = spmxv_multi(A, np.ones(16), cs)
    assert out.guard and out.status == "detected"


def test_wrong_scheme_is_rejected():
    A = g("identity", 3)
    with pytest.raises(ValueError):
        spmxv_shift(A, np.ones(3), compute_checksums(A, "multi", 2))
    with pytest.raises(ValueError):
        spmxv_multi(A, np.ones(4), compute_checksums(A, "multi", 2))


# ------------------------------------------------------------- correction


@pytest.mark.parametrize("p", [0, 7, 15])
def test_output_error_syndrome_and_repair(p):
    A = g("diag_dominant", 16, seed=3)
    x = rng_x(16, 1)
    eps = 0.25
    cs2 = compute_checksums(A, "multi", 2)

    def hook(y):
        y[p] += eps

    det = spmxv_multi(A, x, cs2, False, y_hook=hook)
    d_x = det.residual_syndromes[:2]
    assert d_x[1] / d_x[0] == pytest.approx(p + 1, abs=1e-4)
    out = spmxv_multi(A, x, compute_checksums(A, "multi", 3), True, y_hook=hook)
    assert out.status == "corrected" and out.location == ("y", p)
    assert bits_equal(out.y, spmxv_plain(A, x))


def test_two_output_errors_are_never_corrected():
    A = g("diag_dominant", 16, seed=1)
    cs = compute_checksums(A, "multi", 3)
    x = rng_x(16, 2)
    for p1, p2 in itertools.combinations(range(16), 2):
        for e1, e2 in itertools.product((1.0, -1.0), repeat=2):
            def hook(y):
                y[p1] += e1
                y[p2] += e2
            assert spmxv_multi(A, x, cs, True, y_hook=hook).status == "detected"


def test_input_error_is_corrected():
    A = g("laplacian2d", 6)
    cs = compute_checksums(A, "multi", 3)
    x = rng_x(36, 4)
    bad = x.copy()
    bad[5] += 2.0 ** -3
    out = spmxv_multi(A, bad, cs, True, x_trusted=x)
    assert out.status == "corrected" and out.location == ("x", 5)
    assert np.all(np.abs(out.y - spmxv_plain(A, x)) <= out.tau_ref)


@pytest.mark.parametrize("target,index,bit", [("val", 9, 52), ("colid", 4, 0), ("rowptr", 7, 1)])
def test_matrix_errors_are_repaired_in_place(target, index, bit):
    A0 = g("laplacian2d", 5)
    cs = compute_checksums(A0, "multi", 3)
    A = A0.copy()
    apply_flip(getattr(A, target), index, bit)
    x = rng_x(25, 5)
    out = spmxv_multi(A, x, cs, True)
    assert out.status == "corrected" and out.location == (target, index)
    assert A == A0
    assert bits_equal(out.y, spmxv_plain(A0, x))


def test_two_small_flips_in_one_column_are_scrubbed():
    # two flips too small to be seen, then one visible input error
    A0 = g("laplacian2d", 8)
    cs = compute_checksums(A0, "multi", 3)
    A = A0.copy()
    apply_flip(A.val, 245, 13)
    apply_flip(A.val, 205, 7)
    x = rng_x(64, 0)
    assert spmxv_multi(A, x, cs, True).status == "clean"
    bad = x.copy()
    apply_flip(bad, 22, 39)
    out = spmxv_multi(A, bad, cs, True, x_trusted=x)
    assert out.status == "corrected"
    assert A == A0


def test_detection_only_does_not_modify_inputs():
    A0 = g("laplacian2d", 4)
    cs = compute_checksums(A0, "multi", 3)
    A = A0.copy()
    apply_flip(A.val, 3, 60)
    assert spmxv_multi(A, np.ones(16), cs, False).status == "detected"
    assert A != A0


def test_syndrome_csv():
    A = g("identity", 4)
    out = spmxv_multi(A, np.ones(4), compute_checksums(A, "multi", 2))
    head = syndrome_csv_header(2)
    row = syndrome_csv_row(7, out)
    assert head == ["iteration", "d_x1", "d_x2", "d_xp1", "d_xp2", "d_r1", "d_r2"]
    assert len(row) == len(head) and row[0] == 7
