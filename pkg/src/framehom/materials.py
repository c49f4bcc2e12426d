"""Isotropic plane elasticity tensors and the orthonormal Voigt map.

Voigt convention: a symmetric 2x2 matrix xi maps to the vector
(xi_11, xi_22, sqrt(2) xi_12), which is an isometry for the Frobenius inner
product.  A fourth-order tensor A acting on symmetric matrices is then the
3x3 matrix C with vec(A xi) = C vec(xi) and A xi : zeta = vec(zeta)' C vec(xi);
C is the exact Gram matrix of A, so its eigenvalues are the tensor's
eigenvalues on symmetric matrices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SQRT2 = math.sqrt(2.0)


class MaterialError(ValueError):
    """Invalid elastic moduli."""


@dataclass(frozen=True)
class ElasticTensor:
    """Isotropic tensor A xi = 2 mu xi + lam tr(xi) I.

    Positivity on symmetric matrices requires mu > 0 and lam + mu > 0
    (eigenvalues 2 mu on deviators and 2(lam + mu) on the identity).
    """

    lame: float
    shear: float

    def __post_init__(self):
        if not (math.isfinite(self.lame) and math.isfinite(self.shear)):
            raise MaterialError("elastic moduli must be finite")
        if self.shear <= 0.0:
            raise MaterialError(f"shear modulus must be positive, got {self.shear}")
        if self.lame + self.shear <= 0.0:
            raise MaterialError(
                f"need lame + shear > 0 for ellipticity, got {self.lame + self.shear}"
            )

    def apply(self, xi):
        xi = np.asarray(xi, dtype=float)
        return 2.0 * self.shear * xi + self.lame * np.trace(xi) * np.eye(2)

    def voigt(self):
        lam, mu = self.lame, self.shear
        return np.array(
            [
                [lam + 2.0 * mu, lam, 0.0],
                [lam, lam + 2.0 * mu, 0.0],
                [0.0, 0.0, 2.0 * mu],
            ]
        )


def to_voigt(xi):
    """Symmetric 2x2 matrix -> (3,) vector, isometric."""
    xi = np.asarray(xi, dtype=float)
    return np.array([xi[0, 0], xi[1, 1], SQRT2 * 0.5 * (xi[0, 1] + xi[1, 0])])


def from_voigt(v):
    v = np.asarray(v, dtype=float)
    s = v[2] / SQRT2
    return np.array([[v[0], s], [s, v[1]]])


def voigt_rotation(R):
    """3x3 matrix representing xi -> R xi R' in Voigt coordinates."""
    R = np.asarray(R, dtype=float)
    basis = [
        np.array([[1.0, 0.0], [0.0, 0.0]]),
        np.array([[0.0, 0.0], [0.0, 1.0]]),
        np.array([[0.0, 1.0], [1.0, 0.0]]) / SQRT2,
    ]
    cols = [to_voigt(R @ E @ R.T) for E in basis]
    return np.column_stack(cols)


def k1(tensor, tau):
    """Effective tangential rod stiffness (A^{-1} eta . eta)^{-1}, eta = tau x tau."""
    tau = np.asarray(tau, dtype=float)
    tau = tau / np.linalg.norm(tau)
    eta = to_voigt(np.outer(tau, tau))
    c = tensor.voigt()
    return 1.0 / float(eta @ np.linalg.solve(c, eta))


def k1_isotropic(lame, shear):
    """Closed form of k1 for isotropic tensors: 4 mu (lam + mu) / (lam + 2 mu)."""
    return 4.0 * shear * (lame + shear) / (lame + 2.0 * shear)
