"""Effective elastic tensor of the periodic rod framework.

The homogenised energy of a macroscopic strain xi is the minimum, over
periodic nodal displacements u of the network, of

    sum_links  K1 (l / L_tot) (tau . xi tau + tau . (u_b - u_a) / l)^2 ,

the classical periodic truss relaxation: only the tangential stretch of a
link stores energy, the field along each straight link is affine (exact
for constant xi), and the arclength measure is normalised by the total
framework length.  The result is reported as a symmetric 3x3 matrix in the
orthonormal Voigt basis (xi11, xi22, sqrt(2) xi12).
"""

from dataclasses import dataclass

import numpy as np

from .geometry import FrameworkError, FrameworkGraph
from .materials import ElasticTensor, from_voigt, k1

#: Voigt matrices below this smallest eigenvalue are treated as degenerate.
ELLIPTIC_TOL = 1e-10

_KERNEL_TOL = 1e-10


@dataclass(frozen=True)
class MacroTensor:
    """Homogenised tensor in orthonormal Voigt form."""

    voigt: np.ndarray

    @property
    def ellipticity(self) -> float:
        return ellipticity(self.voigt)

    @property
    def elliptic(self) -> bool:
        return self.ellipticity >= ELLIPTIC_TOL


def ellipticity(voigt) -> float:
    """Smallest eigenvalue of a symmetric 3x3 Voigt matrix."""
    m = np.asarray(getattr(voigt, "voigt", voigt), dtype=float)
    return float(np.linalg.eigvalsh(0.5 * (m + m.T))[0])


def _link_data(graph: FrameworkGraph, a1: ElasticTensor):
    taus = graph.taus
    weights = graph.lengths / graph.total_length
    k1s = np.array([k1(a1, t) for t in taus])
    return taus, graph.lengths, weights, k1s


def compute_ahom(graph: FrameworkGraph, a1: ElasticTensor) -> MacroTensor:
    """Minimise the relaxed network energy for the three Voigt basis strains.

    Gauge: the minimiser is taken orthogonal to the stiffness kernel, which
    contains the two global translations, so nodal displacements have zero
    mean.  A kernel larger than the translations means the truss has a
    mechanism and the cell problem is ill-posed.
    """
    taus, lengths, weights, k1s = _link_data(graph, a1)
    n = len(graph.nodes)
    basis = [from_voigt(v) for v in np.eye(3)]

    # per-link stretch of the affine part, per basis strain: tau . xi tau
    c = np.array([[float(t @ xi @ t) for xi in basis] for t in taus])

    # per-link corrector stretch operator: tau . (u_b - u_a) / l
    b = np.zeros((len(graph.links), 2 * n))
    for li, link in enumerate(graph.links):
        if link.a == link.b:
            continue
        b[li, 2 * link.b : 2 * link.b + 2] += taus[li] / lengths[li]
        b[li, 2 * link.a : 2 * link.a + 2] -= taus[li] / lengths[li]

    kw = k1s * weights
    g = b.T @ (kw[:, None] * b)
    eigvals = np.linalg.eigvalsh(g)
    scale = max(float(eigvals[-1]), 1.0)
    nullity = int(np.sum(eigvals <= _KERNEL_TOL * scale))
    if nullity > 2:
        raise FrameworkError(
            f"truss cell problem is singular beyond the translations "
            f"(kernel dimension {nullity}); the framework has a mechanism"
        )

    rhs = -b.T @ (kw[:, None] * c)
    correctors, *_ = np.linalg.lstsq(g, rhs, rcond=None)

    # total stretch per link and basis strain, at the minimisers
    s = c + b @ correctors
    voigt = s.T @ (kw[:, None] * s)
    return MacroTensor(voigt=0.5 * (voigt + voigt.T))
