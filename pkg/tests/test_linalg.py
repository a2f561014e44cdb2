import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from bandlab.errors import ContractError, DimensionError, SingularMatrixError
from bandlab.linalg import (
    CONDITION_GUARD,
    block_tridiag_solve,
    op_norm,
    qr_decompose,
    solve_dense,
    sym_eigen,
)

finite = st.floats(-10.0, 10.0, allow_nan=False, allow_infinity=False)


def square(n):
    return arrays(np.float64, (n, n), elements=finite)


# ---------------------------------------------------------------- qr


@given(square(5))
def test_qr_reconstruction_and_orthogonality(m):
    q, r = qr_decompose(m)
    scale = max(1.0, np.linalg.norm(m))
    assert np.linalg.norm(q @ r - m) <= 1e-12 * scale
    assert np.linalg.norm(q.T @ q - np.eye(5)) <= 1e-12
    assert np.all(np.diag(r) >= 0.0)
    assert np.allclose(r, np.triu(r))


def test_qr_identity():
    q, r = qr_decompose(np.eye(4))
    assert np.array_equal(q, np.eye(4))
    assert np.array_equal(r, np.eye(4))


def test_qr_rejects_non_2d():
    with pytest.raises(DimensionError):
        qr_decompose(np.ones(3))


# ---------------------------------------------------------------- sym_eigen


def test_sym_eigen_2x2_analytic():
    a, b, c = 1.3, -0.7, 2.9
    values, vectors = sym_eigen(np.array([[a, b], [b, c]]))
    disc = np.sqrt((a - c) ** 2 + 4 * b * b)
    expected = np.array([(a + c - disc) / 2, (a + c + disc) / 2])
    assert np.allclose(values, expected, rtol=0, atol=1e-14)
    assert vectors.shape == (2, 2)


@given(square(6))
def test_sym_eigen_residual_order_and_trace(m):
    sym = (m + m.T) / 2
    values, vectors = sym_eigen(sym)
    scale = max(1.0, np.linalg.norm(sym))
    assert np.all(np.diff(values) >= -1e-14 * scale)
    residual = sym @ vectors - vectors * values
    assert np.linalg.norm(residual) <= 1e-10 * scale
    assert abs(np.trace(sym) - values.sum()) <= 1e-10 * scale


def test_sym_eigen_rejects_asymmetric():
    with pytest.raises(ContractError):
        sym_eigen(np.array([[0.0, 1.0], [0.0, 0.0]]))


# ---------------------------------------------------------------- solve_dense


def test_solve_dense_residual_and_condition():
    rng = np.random.default_rng(7)
    m = rng.normal(size=(12, 12))
    rhs = rng.normal(size=12)
    report = solve_dense(m, rhs)
    assert not report.censored
    assert report.condition_estimate >= 1.0
    residual = np.linalg.norm(m @ report.solution - rhs)
    assert residual <= 1e-8 * max(1.0, np.linalg.norm(rhs))


def test_solve_dense_censors_hilbert():
    n = 14
    hilbert = 1.0 / (np.arange(n)[:, None] + np.arange(n)[None, :] + 1.0)
    report = solve_dense(hilbert, np.ones(n))
    assert report.censored
    assert report.condition_estimate > CONDITION_GUARD


def test_solve_dense_exactly_singular():
    with pytest.raises(SingularMatrixError):
        solve_dense(np.array([[1.0, 2.0], [2.0, 4.0]]), np.ones(2))


def test_solve_dense_rejects_non_square():
    with pytest.raises(DimensionError):
        solve_dense(np.ones((3, 2)), np.ones(3))


def test_solve_dense_rejects_rhs_mismatch():
    with pytest.raises(DimensionError):
        solve_dense(np.eye(3), np.ones(4))


# ---------------------------------------------------------------- block_tridiag_solve


def assemble(diag, off, shift=0.0):
    n = len(diag)
    w = diag[0].shape[0]
    full = np.zeros((n * w, n * w))
    for i, d in enumerate(diag):
        full[i * w : (i + 1) * w, i * w : (i + 1) * w] = d
    for i, b in enumerate(off):
        full[i * w : (i + 1) * w, (i + 1) * w : (i + 2) * w] = b
        full[(i + 1) * w : (i + 2) * w, i * w : (i + 1) * w] = b.T
    return full - shift * np.eye(n * w)


@pytest.mark.parametrize("n,w", [(1, 3), (4, 1), (5, 3), (8, 2)])
def test_block_tridiag_matches_dense(n, w):
    rng = np.random.default_rng(100 * n + w)
    diag = [rng.normal(size=(w, w)) for _ in range(n)]
    diag = [(d + d.T) / 2 + 3.0 * np.eye(w) for d in diag]
    off = [rng.normal(size=(w, w)) / 2 for _ in range(n - 1)]
    rhs = rng.normal(size=(n * w, 2))
    shift = 0.3
    report = block_tridiag_solve(diag, off, rhs, shift=shift)
    oracle = np.linalg.solve(assemble(diag, off, shift), rhs)
    assert not report.censored
    rel = np.linalg.norm(report.solution - oracle) / np.linalg.norm(oracle)
    assert rel <= 1e-8


def test_block_tridiag_scalar_laplacian_analytic_inverse():
    # tridiag(-1, 2, -1) of size n has inverse min(i,j)(n+1-max(i,j))/(n+1)
    n = 9
    diag = [np.array([[2.0]])] * n
    off = [np.array([[-1.0]])] * (n - 1)
    rhs = np.eye(n)
    report = block_tridiag_solve(diag, off, rhs)
    i = np.arange(1, n + 1)
    expected = np.minimum(i[:, None], i[None, :]) * (
        n + 1 - np.maximum(i[:, None], i[None, :])
    ) / (n + 1.0)
    assert np.allclose(report.solution, expected, rtol=0, atol=1e-10)


def test_block_tridiag_vector_rhs_shape():
    diag = [np.eye(2) * 2, np.eye(2) * 3]
    off = [np.eye(2) * 0.5]
    report = block_tridiag_solve(diag, off, np.ones(4))
    assert report.solution.shape == (4,)


def test_block_tridiag_singular_pivot_names_block():
    diag = [np.zeros((2, 2)), np.eye(2)]
    off = [np.eye(2)]
    with pytest.raises(SingularMatrixError, match="block 1"):
        block_tridiag_solve(diag, off, np.ones(4))


def test_block_tridiag_rejects_block_count_mismatch():
    with pytest.raises(DimensionError):
        block_tridiag_solve([np.eye(2)] * 3, [np.eye(2)] * 3, np.ones(6))


@given(
    st.integers(1, 4),
    st.integers(1, 3),
    st.integers(0, 2**32 - 1),
)
def test_block_tridiag_property_random_chains(n, w, seed):
    rng = np.random.default_rng(seed)
    diag = [(lambda d: (d + d.T) / 2)(rng.normal(size=(w, w))) for _ in range(n)]
    off = [rng.normal(size=(w, w)) for _ in range(n - 1)]
    rhs = rng.normal(size=n * w)
    try:
        report = block_tridiag_solve(diag, off, rhs, shift=0.3)
    except SingularMatrixError:
        return
    if report.censored:
        return
    oracle = np.linalg.solve(assemble(diag, off, 0.3), rhs)
    assert np.linalg.norm(report.solution - oracle) <= 1e-8 * max(
        1.0, np.linalg.norm(oracle)
    )


# ---------------------------------------------------------------- op_norm


def test_op_norm_diagonal():
    assert op_norm(np.diag([3.0, -5.0])) == pytest.approx(5.0, rel=1e-9)


def test_op_norm_against_svd_oracle():
    rng = np.random.default_rng(11)
    for _ in range(10):
        m = rng.normal(size=(10, 10))
        assert op_norm(m) == pytest.approx(np.linalg.norm(m, 2), rel=1e-6)


def test_op_norm_zero_matrix():
    assert op_norm(np.zeros((4, 4))) == 0.0


@given(square(5))
def test_op_norm_at_most_frobenius(m):
    assert op_norm(m) <= np.linalg.norm(m) + 1e-12


@given(
    arrays(np.float64, (4,), elements=finite),
    arrays(np.float64, (6,), elements=finite),
)
def test_op_norm_rank_one_equals_frobenius(u, v):
    m = np.outer(u, v)
    fro = np.linalg.norm(m)
    assert op_norm(m) == pytest.approx(fro, rel=1e-6, abs=1e-12)
