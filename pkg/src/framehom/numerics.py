"""Sparse symmetric assembly, factorisation and a generalized symmetric
eigensolver (ARPACK shift-invert with verified residuals).

Everything here is deterministic: the eigensolver start vector comes from a
fixed seeded generator, duplicate triplets are summed in a canonical order,
and the SuperLU ordering is pinned.  Running the same problem twice gives
bit-identical results.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

_LANCZOS_SEED = 0x5EED0001
_DENSE_CUTOFF = 64


class NumericsError(RuntimeError):
    """Numerical failure (singular factorisation, non-convergence, NaN)."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class SparseSymmetric:
    """Triplet accumulator producing a symmetric CSC matrix.

    Duplicates are summed after sorting by (row, col, |value|, value), so the
    result does not depend on the order in which elements were added and the
    assembled matrix equals its transpose exactly.
    """

    def __init__(self, n):
        self.n = int(n)
        self._rows = []
        self._cols = []
        self._vals = []

    def add(self, rows, cols, vals):
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        vals = np.asarray(vals, dtype=float).ravel()
        if not (len(rows) == len(cols) == len(vals)):
            raise ValueError("triplet arrays must have equal length")
        self._rows.append(rows)
        self._cols.append(cols)
        self._vals.append(vals)

    def add_block(self, ids, block):
        """Scatter a dense symmetric element block at global ids."""
        ids = np.asarray(ids, dtype=np.int64)
        block = np.asarray(block, dtype=float)
        r = np.repeat(ids, len(ids))
        c = np.tile(ids, len(ids))
        self.add(r, c, block.ravel())

    def tocsc(self):
        if not self._rows:
            return sp.csc_matrix((self.n, self.n))
        rows = np.concatenate(self._rows)
        cols = np.concatenate(self._cols)
        vals = np.concatenate(self._vals)
        order = np.lexsort((vals, np.abs(vals), cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
        key = rows * self.n + cols
        first = np.ones(len(key), dtype=bool)
        first[1:] = key[1:] != key[:-1]
        starts = np.flatnonzero(first)
        summed = np.add.reduceat(vals, starts)
        mat = sp.csc_matrix(
            (summed, (rows[starts], cols[starts])), shape=(self.n, self.n)
        )
        mat.sort_indices()
        return mat


def check_symmetric(a, tol=0.0):
    d = (a - a.T).tocoo()
    if len(d.data) and np.max(np.abs(d.data)) > tol:
        raise NumericsError(
            f"matrix is not symmetric (max asymmetry {np.max(np.abs(d.data)):.3e})"
        )


class Factor:
    """LU factorisation of a sparse matrix with one refinement step."""

    def __init__(self, matrix):
        self.matrix = matrix.tocsc()
        if not np.all(np.isfinite(self.matrix.data)):
            raise NumericsError("matrix contains non-finite entries")
        try:
            self._lu = spla.splu(self.matrix, permc_spec="COLAMD")
        except RuntimeError as exc:  # SuperLU reports the singular column
            raise NumericsError(f"factorisation failed: {exc}") from exc
        diag = self._lu.U.diagonal()
        scale = np.max(np.abs(diag)) if len(diag) else 0.0
        if scale == 0.0 or np.min(np.abs(diag)) < 1e-14 * scale:
            idx = int(np.argmin(np.abs(diag)))
            raise NumericsError(f"matrix is numerically singular (pivot {idx})")

    def solve(self, b, refine=True):
        b = np.asarray(b, dtype=float)
        x = self._lu.solve(b)
        if refine:
            r = b - self.matrix @ x
            x = x + self._lu.solve(r)
        if not np.all(np.isfinite(x)):
            raise NumericsError("linear solve produced non-finite values")
        return x


def factorize(a):
    return Factor(a)


def solve_linear(a, b, tol=1e-10):
    """Factorise and solve with a relative residual check."""
    f = factorize(a)
    x = f.solve(b)
    denom = float(np.linalg.norm(b))
    res = float(np.linalg.norm(b - f.matrix @ x))
    if denom > 0 and res > tol * denom:
        raise NumericsError(f"linear solve residual {res / denom:.3e} exceeds {tol:.1e}")
    return x


@dataclass
class EigenResult:
    values: np.ndarray       # ascending
    vectors: np.ndarray      # (n, m), M-orthonormal columns
    residuals: np.ndarray    # ||K x - w M x|| / ||K x||
    converged: bool


def _residuals(K, M, values, vectors):
    out = np.empty(len(values))
    for i, w in enumerate(values):
        kx = K @ vectors[:, i]
        r = kx - w * (M @ vectors[:, i])
        nk = np.linalg.norm(kx)
        out[i] = np.linalg.norm(r) / nk if nk > 0 else np.inf
    return out


def _fix_signs(vectors):
    """Flip each column so its largest-magnitude entry is positive."""
    for i in range(vectors.shape[1]):
        lead = vectors[np.argmax(np.abs(vectors[:, i])), i]
        if lead < 0:
            vectors[:, i] = -vectors[:, i]
    return vectors


def _dense_eigpairs(K, M, m):
    kd = K.toarray() if sp.issparse(K) else np.asarray(K, dtype=float)
    md = M.toarray() if sp.issparse(M) else np.asarray(M, dtype=float)
    vals, vecs = scipy.linalg.eigh(kd, md)
    return vals[:m], vecs[:, :m]


def smallest_eigpairs(K, M, m, tol=1e-8, maxiter=None):
    """Lowest m eigenpairs of K x = w M x, K symmetric positive definite,
    M symmetric positive definite.

    Small or nearly-full problems are solved densely.  Otherwise ARPACK's
    implicitly restarted Lanczos runs in shift-invert mode at shift 0 with
    a fixed start vector and a subspace wide enough to resolve clustered
    and multiple eigenvalues.  Vectors come back M-orthonormal with a
    deterministic sign, values ascending, and every returned pair is
    checked against the residual tolerance.
    """
    K = K.tocsc() if sp.issparse(K) else sp.csc_matrix(K)
    M = M.tocsc() if sp.issparse(M) else sp.csc_matrix(M)
    n = K.shape[0]
    if m < 1:
        raise ValueError("need m >= 1 eigenpairs")
    if m > n:
        raise NumericsError(f"requested {m} eigenpairs of an {n}-dim pencil")

    if n <= _DENSE_CUTOFF or m > max(1, n // 3):
        vals, vecs = _dense_eigpairs(K, M, m)
        vecs = _fix_signs(vecs)
        res = _residuals(K, M, vals, vecs)
        return EigenResult(vals, vecs, res, bool(np.all(res <= 10 * tol + 1e-12)))

    factor = factorize(K)
    opinv = spla.LinearOperator(
        (n, n), matvec=lambda b: factor.solve(b, refine=False), dtype=float
    )
    rng = np.random.default_rng(_LANCZOS_SEED)
    v0 = rng.standard_normal(n)
    ncv = int(min(n, max(2 * m + 1, 40)))
    try:
        vals, vecs = spla.eigsh(
            K, k=m, M=M, sigma=0.0, which="LM", mode="normal",
            v0=v0, ncv=ncv, maxiter=maxiter, tol=0, OPinv=opinv,
        )
    except spla.ArpackNoConvergence as exc:
        got = np.asarray(exc.eigenvalues, dtype=float)
        partial = None
        if got.size:
            order = np.argsort(got, kind="stable")
            pv = _fix_signs(np.asarray(exc.eigenvectors, dtype=float)[:, order])
            partial = EigenResult(
                got[order], pv, _residuals(K, M, got[order], pv), False
            )
        raise NumericsError(
            f"eigensolver converged {got.size}/{m} pairs", partial=partial
        ) from exc

    order = np.argsort(vals, kind="stable")
    values = np.asarray(vals, dtype=float)[order]
    vectors = _fix_signs(np.asarray(vecs, dtype=float)[:, order])
    res = _residuals(K, M, values, vectors)
    result = EigenResult(values, vectors, res, bool(np.all(res <= tol)))
    if not result.converged:
        worst = int(np.argmax(res))
        raise NumericsError(
            f"eigenpair residual {res[worst]:.3e} exceeds {tol:.1e} (mode {worst})",
            partial=result,
        )
    return result


def assert_all_finite(obj, context=""):
    """Raise NumericsError if any float in a nested structure is not finite."""
    if isinstance(obj, dict):
        for k, v in obj.items():
            assert_all_finite(v, f"{context}.{k}" if context else str(k))
    elif isinstance(obj, (list, tuple)):
        for i, v in enumerate(obj):
            assert_all_finite(v, f"{context}[{i}]")
    elif isinstance(obj, (float, int, np.floating, np.integer)):
        if not np.isfinite(obj):
            raise NumericsError(f"non-finite value at {context or 'value'}")
    elif isinstance(obj, np.ndarray):
        if obj.dtype.kind in "fc" and not np.all(np.isfinite(obj)):
            raise NumericsError(f"non-finite value at {context or 'array'}")
