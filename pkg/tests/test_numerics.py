import math

import numpy as np
import pytest
import scipy.sparse as sp

from framehom.numerics import (
    NumericsError,
    SparseSymmetric,
    assert_all_finite,
    check_symmetric,
    factorize,
    smallest_eigpairs,
    solve_linear,
)


def laplacian_1d(n: int) -> sp.csc_matrix:
    """Dirichlet second-difference matrix on n interior points, spacing 1/(n+1)."""
    h = 1.0 / (n + 1)
    main = np.full(n, 2.0 / h**2)
    off = np.full(n - 1, -1.0 / h**2)
    return sp.diags([off, main, off], [-1, 0, 1], format="csc")


def random_spd(n: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    d = rng.uniform(0.5, 10.0, size=n)
    return q @ np.diag(d) @ q.T


# -- canonical assembly -------------------------------------------------------


def test_assembly_order_independent_bitwise():
    rng = np.random.default_rng(3)
    n = 40
    rows = rng.integers(0, n, size=500)
    cols = rng.integers(0, n, size=500)
    vals = rng.standard_normal(500)
    # symmetrise the triplet list so both matrices are symmetric
    rows_s = np.concatenate([rows, cols])
    cols_s = np.concatenate([cols, rows])
    vals_s = np.concatenate([vals, vals])

    a = SparseSymmetric(n)
    a.add(rows_s, cols_s, vals_s)
    perm = rng.permutation(len(vals_s))
    b = SparseSymmetric(n)
    for i in perm:  # one entry at a time, scrambled order
        b.add(rows_s[i : i + 1], cols_s[i : i + 1], vals_s[i : i + 1])

    A, B = a.tocsc(), b.tocsc()
    assert (A != B).nnz == 0
    assert np.array_equal(A.data, B.data)  # bitwise
    check_symmetric(A)


def test_sign_flip_gives_exact_negation():
    # flipping the sign of every entry must negate the sums bitwise
    rng = np.random.default_rng(4)
    rows = rng.integers(0, 10, size=200)
    cols = rows.copy()
    vals = rng.standard_normal(200)
    a = SparseSymmetric(10)
    a.add(rows, cols, vals)
    b = SparseSymmetric(10)
    b.add(rows, cols, -vals)
    assert np.array_equal(a.tocsc().data, -b.tocsc().data)


def test_add_block():
    a = SparseSymmetric(5)
    blk = np.array([[2.0, -1.0], [-1.0, 2.0]])
    a.add_block(np.array([1, 3]), blk)
    dense = a.tocsc().toarray()
    assert dense[1, 1] == 2.0 and dense[1, 3] == -1.0 and dense[3, 3] == 2.0


def test_check_symmetric_raises():
    m = sp.csc_matrix(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(NumericsError):
        check_symmetric(m)


# -- linear solves ------------------------------------------------------------


def test_solve_linear_residual():
    a = sp.csc_matrix(random_spd(30, 11))
    rng = np.random.default_rng(12)
    b = rng.standard_normal(30)
    x = solve_linear(a, b)
    assert np.linalg.norm(a @ x - b) / np.linalg.norm(b) < 1e-10


def test_factorize_singular_raises():
    a = sp.csc_matrix(np.array([[1.0, 1.0], [1.0, 1.0]]))
    with pytest.raises(NumericsError):
        factorize(a)


def test_solve_multiple_rhs():
    a = sp.csc_matrix(random_spd(20, 13))
    rng = np.random.default_rng(14)
    B = rng.standard_normal((20, 3))
    f = factorize(a)
    X = f.solve(B)
    assert np.linalg.norm(a @ X - B) < 1e-8


# -- eigensolver --------------------------------------------------------------


def test_laplacian_eigenvalues_match_closed_form():
    # exact discrete eigenvalues: (4/h^2) sin^2(k pi h / 2), h = 1/(n+1)
    n = 201
    K = laplacian_1d(n)
    M = sp.identity(n, format="csc")
    res = smallest_eigpairs(K, M, 8)
    h = 1.0 / (n + 1)
    expect = np.array(
        [4.0 / h**2 * math.sin(k * math.pi * h / 2.0) ** 2 for k in range(1, 9)]
    )
    assert res.converged
    assert np.max(np.abs(res.values - expect) / expect) < 1e-10


def test_generalized_pencil_matches_dense():
    n = 120
    K = sp.csc_matrix(random_spd(n, 21))
    M = sp.csc_matrix(random_spd(n, 22) + 5.0 * np.eye(n))
    res = smallest_eigpairs(K, M, 6)
    import scipy.linalg

    dense = np.sort(scipy.linalg.eigh(K.toarray(), M.toarray(), eigvals_only=True))
    assert np.max(np.abs(res.values - dense[:6]) / dense[:6]) < 1e-8
    # M-orthonormality of returned vectors
    G = res.vectors.T @ (M @ res.vectors)
    assert np.max(np.abs(G - np.eye(6))) < 1e-7


def test_repeated_eigenvalue_both_copies_found():
    # block-diagonal pencil with an exactly repeated eigenvalue
    base = laplacian_1d(80)
    K = sp.block_diag([base, base], format="csc")
    M = sp.identity(160, format="csc")
    res = smallest_eigpairs(K, M, 4)
    h = 1.0 / 81
    lam1 = 4.0 / h**2 * math.sin(math.pi * h / 2.0) ** 2
    lam2 = 4.0 / h**2 * math.sin(2 * math.pi * h / 2.0) ** 2
    expect = np.array([lam1, lam1, lam2, lam2])
    assert np.max(np.abs(res.values - expect) / expect) < 1e-9
    G = res.vectors.T @ res.vectors
    assert np.max(np.abs(G - np.eye(4))) < 1e-7


def test_eigensolver_deterministic():
    n = 150
    K = sp.csc_matrix(random_spd(n, 31))
    M = sp.identity(n, format="csc")
    r1 = smallest_eigpairs(K, M, 5)
    r2 = smallest_eigpairs(K, M, 5)
    assert np.array_equal(r1.values, r2.values)
    assert np.array_equal(r1.vectors, r2.vectors)


def test_dense_path_small_problems():
    K = sp.csc_matrix(random_spd(12, 41))
    M = sp.identity(12, format="csc")
    res = smallest_eigpairs(K, M, 3)
    dense = np.sort(np.linalg.eigvalsh(K.toarray()))
    assert np.max(np.abs(res.values - dense[:3])) < 1e-9


def test_residuals_reported_small():
    K = laplacian_1d(300)
    M = sp.identity(300, format="csc")
    res = smallest_eigpairs(K, M, 6)
    assert np.all(res.residuals < 1e-8)


# -- guards -------------------------------------------------------------------


def test_assert_all_finite_passes_and_raises():
    assert_all_finite({"a": [1.0, 2.0], "b": np.ones(3)}, "ok")
    with pytest.raises(NumericsError, match="bad"):
        assert_all_finite({"x": float("nan")}, "bad")
    with pytest.raises(NumericsError):
        assert_all_finite(np.array([1.0, np.inf]), "inf")
