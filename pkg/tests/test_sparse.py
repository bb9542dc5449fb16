import numpy as np
import pytest

from abftcg.abft import gamma
from abftcg.sparse import (
    LAPLACIAN_SHIFT,
    CsrMatrix,
    from_coo,
    generate_test_matrix,
    load_matrix_market,
    spmxv_plain,
    write_matrix_market,
)


def dense_product(D, x):
    # triple-loop oracle, independent of the CSR code
    n = D.shape[0]
    y = np.zeros(n)
    for i in range(n):
        acc = 0.0
        for j in range(n):
            if D[i, j] != 0.0:
                acc += D[i, j] * x[j]
        y[i] = acc
    return y


def write(tmp_path, text, name="m.mtx"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_identity_from_file(tmp_path):
    p = write(tmp_path, "%%MatrixMarket matrix coordinate real general\n3 3 3\n1 1 1\n2 2 1\n3 3 1\n")
    A = load_matrix_market(p)
    assert A.n == 3 and A.nnz == 3
    assert A.rowptr.tolist() == [0, 1, 2, 3]
    assert A.colid.tolist() == [0, 1, 2]
    assert A.val.tolist() == [1.0, 1.0, 1.0]


def test_symmetric_storage_is_expanded(tmp_path):
    p = write(tmp_path, "%%MatrixMarket matrix coordinate real symmetric\n2 2 3\n1 1 2\n2 1 1\n2 2 2\n")
    A = load_matrix_market(p)
    assert A.nnz == 4
    np.testing.assert_array_equal(A.to_dense(), [[2.0, 1.0], [1.0, 2.0]])


def test_unsorted_duplicates_become_canonical(tmp_path):
    p = write(tmp_path, "%%MatrixMarket matrix coordinate real general\n2 2 4\n"
                        "1 2 1.5\n1 1 1\n1 2 0.5\n2 2 3\n")
    A = load_matrix_market(p)
    assert A.colid.tolist() == [0, 1, 1]
    assert A.val.tolist() == [1.0, 2.0, 3.0]


@pytest.mark.parametrize("text", [
    "%%MatrixMarket matrix coordinate real general\n2 3 1\n1 1 1\n",
    "%%MatrixMarket matrix coordinate complex general\n2 2 1\n1 1 1 0\n",
    "%%MatrixMarket matrix array real general\n2 2\n1\n0\n0\n1\n",
    "this is not a matrix market file\n",
])
def test_bad_files_are_rejected(tmp_path, text):
    with pytest.raises(ValueError):
        load_matrix_market(write(tmp_path, text))


@pytest.mark.parametrize("kind,n", [("laplacian2d", 4), ("diag_dominant", 30), ("zero_colsum", 9)])
def test_round_trip_is_bit_exact(tmp_path, kind, n):
    A = generate_test_matrix(kind, n, seed=3)
    p = tmp_path / "rt.mtx"
    write_matrix_market(A, p)
    B = load_matrix_market(p)
    assert B == A
    assert p.read_text().startswith("%%MatrixMarket matrix coordinate real general\n")


def test_writer_uses_one_based_indices(tmp_path):
    A = generate_test_matrix("identity", 2)
    p = tmp_path / "i.mtx"
    write_matrix_market(A, p)
    lines = p.read_text().splitlines()
    assert lines[1] == "2 2 2"
    assert lines[2].split()[:2] == ["1", "1"]


def test_constructor_rejects_broken_structure():
    with pytest.raises(ValueError):
        CsrMatrix(2, [0, 2, 1], [0, 1], [1.0, 1.0])        # rowptr decreases
    with pytest.raises(ValueError):
        CsrMatrix(2, [0, 1, 2], [0, 2], [1.0, 1.0])        # column out of range
    with pytest.raises(ValueError):
        CsrMatrix(2, [0, 2, 2], [1, 0], [1.0, 1.0])        # columns not increasing
    with pytest.raises(ValueError):
        CsrMatrix(2, [1, 2, 2], [0], [1.0])                # rowptr[0] != 0
    with pytest.raises(ValueError):
        from_coo(2, [0], [5], [1.0])


def test_plain_product_small_cases():
    A = generate_test_matrix("identity", 3)
    np.testing.assert_array_equal(spmxv_plain(A, [1.0, 2.0, 3.0]), [1.0, 2.0, 3.0])
    Z = CsrMatrix(4, np.zeros(5), [], [])
    np.testing.assert_array_equal(spmxv_plain(Z, np.arange(4.0)), np.zeros(4))
    with pytest.raises(ValueError):
        spmxv_plain(A, np.ones(4))


def test_plain_product_matches_dense_oracle():
    rng = np.random.default_rng(11)
    for trial in range(20):
        n = int(rng.integers(2, 65))
        D = rng.uniform(-1, 1, (n, n)) * (rng.random((n, n)) < 0.3)
        A = from_coo(n, *np.nonzero(D), D[np.nonzero(D)])
        bound_factor = 2 * gamma(2 * n) * max(A.norm1(), 1e-300)
        for _ in range(5):
            x = rng.uniform(-1, 1, n)
            tol = bound_factor * np.abs(x).max()
            diff = np.abs(spmxv_plain(A, x) - dense_product(D, x))
            assert np.all(diff <= tol)


def test_plain_product_sums_left_to_right():
    # 1e16 + 1 - 1e16 is 0 left to right, 1 with any other grouping
    A = from_coo(3, [0, 0, 0], [0, 1, 2], [1e16, 1.0, -1e16])
    y = spmxv_plain(A, np.ones(3))
    assert y[0] == (1e16 + 1.0) - 1e16


def test_generated_matrices():
    L = generate_test_matrix("laplacian2d", 2)
    assert L.n == 4
    assert np.all(L.diagonal() == 4.0 + LAPLACIAN_SHIFT)
    P = generate_test_matrix("zero_colsum", 3)
    assert np.all(P.column_sums() == 0.0)
    D = generate_test_matrix("diag_dominant", 8, seed=1)
    dense = D.to_dense()
    np.testing.assert_array_equal(dense, dense.T)
    assert np.linalg.eigvalsh(dense).min() > 0
    for kind in ("laplacian2d", "diag_dominant"):
        assert np.linalg.eigvalsh(generate_test_matrix(kind, 6, seed=2).to_dense()).min() > 0
    with pytest.raises(ValueError):
        generate_test_matrix("laplacian2d", 1)
    with pytest.raises(ValueError):
        generate_test_matrix("banded", 4)


def test_trefethen_generator_matches_definition():
    n = 37
    primes = [p for p in range(2, 200) if all(p % d for d in range(2, int(p ** 0.5) + 1))][:n]
    dense = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            gap = abs(i - j)
            dense[i, j] = primes[i] if gap == 0 else float(gap & (gap - 1) == 0)
    assert np.array_equal(generate_test_matrix("trefethen", n).to_dense(), dense)


def test_trefethen_20000_shape():
    A = generate_test_matrix("trefethen", 20000)
    assert A.nnz == 554466
    assert A.diagonal()[-1] == 224737.0       # the 20000th prime
