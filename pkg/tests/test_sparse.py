import numpy as np
import pytest
import scipy.linalg
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from rbsolve.sparse import (
    CSRMatrix,
    NotPositiveDefiniteError,
    axpy,
    cholesky_factor,
    cholesky_solve,
    dot,
    load_vector,
    mgs_append,
    norm2,
    read_mtx,
    residual,
    save_vector,
    spmv,
    write_mtx,
)
from rbsolve.work import WorkCounter, counting

SPD2 = np.array([[2.0, -1.0], [-1.0, 2.0]])


def laplacian_3d(m):
    """7-point Laplacian on an m**3 interior grid, built from scipy kron products."""
    T = sp.diags([-1.0, 2.0, -1.0], [-1, 0, 1], shape=(m, m))
    I = sp.identity(m)
    return (sp.kron(sp.kron(T, I), I) + sp.kron(sp.kron(I, T), I) + sp.kron(sp.kron(I, I), T)).tocsr()


# -- CSRMatrix ----------------------------------------------------------------


def test_csr_invariants_rejected():
    with pytest.raises(ValueError):
        CSRMatrix([0, 2, 1], [0, 1], [1.0, 1.0], (2, 2))
    with pytest.raises(ValueError):
        CSRMatrix([0, 2], [1, 0], [1.0, 1.0], (1, 2))  # unsorted columns
    with pytest.raises(ValueError):
        CSRMatrix([0, 2], [0, 0], [1.0, 1.0], (1, 2))  # repeated column
    with pytest.raises(ValueError):
        CSRMatrix.from_dense([[1.0, 2.0], [2.0000001, 1.0]], symmetric=True)


def test_csr_is_read_only():
    A = CSRMatrix.from_dense(SPD2, symmetric=True)
    with pytest.raises(ValueError):
        A.values[0] = 5.0


def test_spmv_identity():
    np.testing.assert_array_equal(spmv(CSRMatrix.identity(3), [1.0, 2.0, 3.0]), [1.0, 2.0, 3.0])


def test_spmv_row_sums():
    np.testing.assert_array_equal(spmv(CSRMatrix.from_dense(SPD2), [1.0, 1.0]), [1.0, 1.0])


def test_spmv_laplacian_constant_vector():
    L = laplacian_3d(3)
    A = CSRMatrix.from_scipy(L, symmetric=True)
    y = spmv(A, np.ones(27))
    np.testing.assert_allclose(y, L.toarray() @ np.ones(27), rtol=0, atol=1e-15)
    # only the centre node of the 3x3x3 block has no boundary neighbour
    assert np.count_nonzero(y) == 26 and y[13] == 0.0


def test_spmv_dimension_mismatch():
    with pytest.raises(ValueError):
        spmv(CSRMatrix.identity(3), np.ones(4))


@given(st.integers(1, 200), st.integers(0, 2**31 - 1))
def test_spmv_matches_dense(n, seed):
    r = np.random.default_rng(seed)
    M = sp.random(n, n, density=min(1.0, 5.0 / n), random_state=r, format="csr")
    x = r.standard_normal(n)
    y = spmv(CSRMatrix.from_scipy(M), x)
    ref = M.toarray() @ x
    assert np.linalg.norm(y - ref) <= 1e-13 * max(np.linalg.norm(ref), 1e-300) + 1e-300


def test_spmv_bitwise_deterministic(rng):
    A = CSRMatrix.from_scipy(laplacian_3d(6), symmetric=True)
    x = rng.standard_normal(A.n_rows)
    assert spmv(A, x).tobytes() == spmv(A, x).tobytes()


def test_spd_quadratic_form_positive(case1_l3, rng):
    from rbsolve.affine import assemble_matrix

    for mu in case1_l3.domain.sample(5, 3):
        A = assemble_matrix(case1_l3.op, mu)
        for _ in range(3):
            x = rng.standard_normal(A.n_rows)
            assert dot(x, spmv(A, x)) > 0


def test_residual_counts_one_spmv():
    A = CSRMatrix.from_dense(SPD2)
    c = WorkCounter()
    with counting(c):
        r = residual(A, [1.0, 1.0], [1.0, 1.0])
    np.testing.assert_array_equal(r, [0.0, 0.0])
    assert c.spmv == 1


# -- vector kernels -----------------------------------------------------------


def test_vector_kernels():
    assert dot([1.0, 2.0], [3.0, 4.0]) == 11.0
    assert norm2([3.0, 4.0]) == 5.0
    np.testing.assert_array_equal(axpy(2.0, [1.0, 0.0], [0.0, 1.0]), [2.0, 1.0])
    with pytest.raises(ValueError):
        dot([1.0], [1.0, 2.0])


# -- modified Gram-Schmidt ----------------------------------------------------


def test_mgs_2d():
    W = np.array([[1.0], [0.0]])
    W2 = mgs_append(W, [1.0, 1.0])
    np.testing.assert_allclose(W2[:, 1], [0.0, 1.0], atol=1e-15)


def test_mgs_rejects_dependent_and_zero():
    W = np.array([[1.0], [0.0]])
    assert mgs_append(W, [2.0, 0.0], drop_tol=1e-10) is None
    assert mgs_append(np.zeros((2, 0)), [0.0, 0.0]) is None


def test_mgs_three_random_vectors(rng):
    W = np.zeros((10, 0))
    for _ in range(3):
        W = mgs_append(W, rng.standard_normal(10))
    assert np.abs(W.T @ W - np.eye(3)).max() <= 1e-12


@given(arrays(np.float64, (12, 6), elements=st.floats(-1e3, 1e3)))
def test_mgs_output_always_orthonormal(V):
    W = np.zeros((12, 0))
    for j in range(V.shape[1]):
        out = mgs_append(W, V[:, j])
        if out is not None:
            W = out
    if W.shape[1]:
        assert np.abs(W.T @ W - np.eye(W.shape[1])).max() <= 1e-10


def test_mgs_nearly_dependent_vectors_stay_orthonormal(rng):
    base = rng.standard_normal(50)
    W = np.zeros((50, 0))
    for k in range(8):
        out = mgs_append(W, base + 10.0 ** (-k - 1) * rng.standard_normal(50))
        if out is not None:
            W = out
    assert np.abs(W.T @ W - np.eye(W.shape[1])).max() <= 1e-10


# -- Cholesky -----------------------------------------------------------------


def test_cholesky_examples():
    np.testing.assert_array_equal(cholesky_factor([[4.0]]).lower, [[2.0]])
    np.testing.assert_allclose(cholesky_factor([[4.0, 2.0], [2.0, 5.0]]).lower, [[2.0, 0.0], [1.0, 2.0]])
    np.testing.assert_array_equal(cholesky_solve(cholesky_factor([[4.0]]), [8.0]), [2.0])
    np.testing.assert_allclose(cholesky_solve(cholesky_factor([[4.0, 2.0], [2.0, 5.0]]), [6.0, 7.0]), [1.0, 1.0])
    b = np.arange(5.0)
    np.testing.assert_array_equal(cholesky_solve(cholesky_factor(np.eye(5)), b), b)


def test_cholesky_indefinite_reports_pivot():
    with pytest.raises(NotPositiveDefiniteError) as exc:
        cholesky_factor([[1.0, 2.0], [2.0, 1.0]])
    assert exc.value.pivot == 1


def test_cholesky_rejects_nonsymmetric():
    with pytest.raises(ValueError):
        cholesky_factor([[1.0, 0.5], [0.0, 1.0]])


def test_cholesky_reproduces_matrix(rng):
    B = rng.standard_normal((20, 20))
    M = B @ B.T + 20 * np.eye(20)
    L = cholesky_factor(M).lower
    assert np.allclose(np.triu(L, 1), 0.0)
    assert np.all(np.diag(L) > 0)
    assert np.linalg.norm(L @ L.T - M) <= 1e-12 * np.linalg.norm(M)


@given(st.integers(1, 50), st.integers(0, 2**31 - 1))
def test_cholesky_solve_matches_lu(n, seed):
    r = np.random.default_rng(seed)
    B = r.standard_normal((n, n))
    M = B @ B.T + n * np.eye(n)
    b = r.standard_normal(n)
    x = cholesky_solve(cholesky_factor(M), b)
    ref = scipy.linalg.lu_solve(scipy.linalg.lu_factor(M), b)
    assert np.linalg.norm(x - ref) <= 1e-10 * np.linalg.norm(ref)


# -- file formats -------------------------------------------------------------


def test_matrix_market_round_trip(tmp_path, case2_l3):
    A = case2_l3.op.matrices[1]
    write_mtx(tmp_path / "a.mtx", A)
    text = (tmp_path / "a.mtx").read_text()
    assert "symmetric" in text.splitlines()[0]
    B = read_mtx(tmp_path / "a.mtx")
    assert B.symmetric
    np.testing.assert_array_equal(B.row_offsets, A.row_offsets)
    np.testing.assert_array_equal(B.col_indices, A.col_indices)
    assert B.values.tobytes() == A.values.tobytes()


@pytest.mark.parametrize("name", ["v.txt", "v.bin"])
def test_vector_round_trip(tmp_path, rng, name):
    v = rng.standard_normal(17)
    save_vector(tmp_path / name, v)
    assert load_vector(tmp_path / name).tobytes() == v.tobytes()


def test_binary_vector_is_little_endian_float64(tmp_path):
    save_vector(tmp_path / "v.bin", [1.0, -2.5])
    assert (tmp_path / "v.bin").read_bytes() == np.array([1.0, -2.5], dtype="<f8").tobytes()
