"""Vector P1 finite elements on crossed-triangle meshes.

Displacements carry two components per mesh vertex, interleaved as
(u1_v, u2_v) -> dofs (2v, 2v+1).  Strains use the orthonormal Voigt
convention (e11, e22, sqrt(2) e12), so a 3x3 Voigt matrix applied between
two strain vectors reproduces the full tensor contraction.

All integrals are evaluated with the symmetric interior 3-point rule
(barycentric permutations of (2/3, 1/6, 1/6)), which is exact for
quadratics; piecewise coefficients enter as per-quadrature-point weights.
"""

import numpy as np
import scipy.sparse as sp

from .geometry import CrossedMesh
from .numerics import SparseSymmetric

_SQ2 = np.sqrt(2.0)


def p1_gradients(mesh: CrossedMesh) -> np.ndarray:
    """Gradients of the three barycentric basis functions, shape (T, 3, 2)."""
    x = mesh.tri_coords
    e0 = x[:, 2] - x[:, 1]
    e1 = x[:, 0] - x[:, 2]
    e2 = x[:, 1] - x[:, 0]
    # grad N_i = rot90(opposite edge) / (2 A); triangles are positively oriented
    twice_area = 2.0 * mesh.triangle_area
    grads = np.stack([e0, e1, e2], axis=1)
    grads = np.stack([-grads[:, :, 1], grads[:, :, 0]], axis=2) / twice_area
    return grads


def strain_matrices(mesh: CrossedMesh) -> np.ndarray:
    """Per-triangle strain-displacement matrices B, shape (T, 3, 6).

    Local dof order (u1_0, u2_0, u1_1, u2_1, u1_2, u2_2); rows are the
    orthonormal Voigt strain components of each nodal basis field.
    """
    g = p1_gradients(mesh)
    t = g.shape[0]
    b = np.zeros((t, 3, 6))
    b[:, 0, 0::2] = g[:, :, 0]
    b[:, 1, 1::2] = g[:, :, 1]
    b[:, 2, 0::2] = g[:, :, 1] / _SQ2
    b[:, 2, 1::2] = g[:, :, 0] / _SQ2
    return b


def _vector_dofs(mesh: CrossedMesh) -> np.ndarray:
    """(T, 6) global vector dof ids in the local order used by strain_matrices."""
    tri = mesh.triangles
    d = np.empty((tri.shape[0], 6), dtype=np.int64)
    d[:, 0::2] = 2 * tri
    d[:, 1::2] = 2 * tri + 1
    return d


def _scatter(n_dofs: int, dofs: np.ndarray, blocks: np.ndarray) -> sp.csc_matrix:
    k = dofs.shape[1]
    rows = np.repeat(dofs, k, axis=1).ravel()
    cols = np.tile(dofs, (1, k)).ravel()
    acc = SparseSymmetric(n_dofs)
    acc.add(rows, cols, blocks.ravel())
    return acc.tocsc()


def elastic_stiffness(mesh: CrossedMesh, cvoigt: np.ndarray) -> sp.csc_matrix:
    """Assemble int B^T C B over the mesh.

    cvoigt is (3, 3) for a uniform coefficient or (T, 3, 3) per triangle;
    any quadrature weighting must already be averaged into it (the strain
    is constant per triangle, so the triangle mean of the coefficient is
    exact).
    """
    b = strain_matrices(mesh)
    c = np.asarray(cvoigt, dtype=float)
    if c.ndim == 2:
        c = np.broadcast_to(c, (b.shape[0], 3, 3))
    blocks = mesh.triangle_area * np.einsum("tai,tab,tbj->tij", b, c, b)
    return _scatter(2 * mesh.n_vertices, _vector_dofs(mesh), blocks)


def _mass_blocks(mesh: CrossedMesh, weight) -> np.ndarray:
    """Scalar 3x3 mass blocks per triangle with per-point weights (T, 3)."""
    from .geometry import QUAD_BARY

    bary = np.asarray(QUAD_BARY)
    w = np.asarray(weight, dtype=float)
    if w.ndim == 0:
        w = np.full((mesh.n_triangles, 3), float(w))
    outer = np.einsum("qi,qj->qij", bary, bary)
    return mesh.triangle_area * np.einsum("tq,qij->tij", w / 3.0, outer)


def scalar_mass(mesh: CrossedMesh, weight=1.0) -> sp.csc_matrix:
    """Assemble int u v weight dx on scalar P1 dofs."""
    blocks = _mass_blocks(mesh, weight)
    return _scatter(mesh.n_vertices, mesh.triangles.astype(np.int64), blocks)


def vector_mass(mesh: CrossedMesh, weight=1.0) -> sp.csc_matrix:
    """Assemble int u . v weight dx on interleaved vector P1 dofs."""
    blocks = _mass_blocks(mesh, weight)
    vec = np.zeros((blocks.shape[0], 6, 6))
    vec[:, 0::2, 0::2] = blocks
    vec[:, 1::2, 1::2] = blocks
    return _scatter(2 * mesh.n_vertices, _vector_dofs(mesh), vec)


def p1_integrals(mesh: CrossedMesh, weight=1.0) -> np.ndarray:
    """Per-vertex integrals int N_v weight dx, shape (V,)."""
    from .geometry import QUAD_BARY

    bary = np.asarray(QUAD_BARY)
    w = np.asarray(weight, dtype=float)
    if w.ndim == 0:
        w = np.full((mesh.n_triangles, 3), float(w))
    contrib = mesh.triangle_area * np.einsum("tq,qi->ti", w / 3.0, bary)
    out = np.zeros(mesh.n_vertices)
    np.add.at(out, mesh.triangles.ravel(), contrib.ravel())
    return out


def interior_vector_dofs(mesh: CrossedMesh) -> np.ndarray:
    """Ascending vector dof ids away from the Dirichlet boundary."""
    free_v = np.flatnonzero(~mesh.boundary)
    return np.sort(np.concatenate([2 * free_v, 2 * free_v + 1]))


def restrict(matrix: sp.spmatrix, dofs: np.ndarray) -> sp.csc_matrix:
    """Symmetric restriction of a sparse matrix to the given dof subset."""
    return matrix.tocsc()[dofs][:, dofs].tocsc()
