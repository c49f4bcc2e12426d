"""Fine-scale reference problem on the composite.

The scaled measure mu = 1/2 dx + 1/2 lambda^h has Lebesgue density
w(x) = 1/2 + chi(x/eps) / (2 |Q1h|) once the rod part is spread over the
fattened framework, so every weighted form is an ordinary FEM integral
with per-quadrature-point weights.  The stiff phase keeps the full
coefficient A1 w, the soft inclusions carry eps^2 A0 w.

Computations live on the scaled cell: the rod half-width used for
classification is h = theta * eps, so the physical half-thickness is
a = theta * eps^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from . import fem
from .geometry import (
    CrossedMesh,
    FrameworkGraph,
    RodRegion,
    crossed_mesh,
    interpolate_p1,
)
from .limit_spectrum import BandStructure, HomogenisedSolution
from .materials import ElasticTensor
from .numerics import NumericsError, smallest_eigpairs, solve_linear

BOUNDARY_MODES = ("plain", "stiff")

_SOURCE_TOL = 1e-10
_EIG_TOL = 1e-8


def cell_count(eps) -> int:
    """Number of cells per side; 1/eps must be an integer."""
    eps = float(eps)
    if not (0.0 < eps <= 1.0):
        raise ValueError(f"eps must lie in (0, 1], got {eps}")
    k = round(1.0 / eps)
    if abs(k * eps - 1.0) > 1e-9:
        raise ValueError(f"1/eps must be an integer, got eps = {eps}")
    return k


def auto_n_fine(eps, theta) -> int:
    """Elements per cell side for the default meshes.

    Starts from the even bound max(4 ceil(1/theta), ceil(1/(theta eps)))
    (two element layers across the full rod width) and prefers the first
    even n with theta * eps * n integral, so rod faces fall on mesh
    lines; if none exists within twice the bound the bound is kept.
    """
    eps = float(eps)
    theta = float(theta)
    cell_count(eps)
    if not (0.0 < theta):
        raise ValueError(f"theta must be positive, got {theta}")
    bound = max(4 * math.ceil(1.0 / theta), math.ceil(1.0 / (theta * eps)))
    bound += bound % 2
    n = bound
    while n <= 2 * bound:
        span = theta * eps * n
        if abs(span - round(span)) <= 1e-9 and round(span) >= 1:
            return n
        n += 2
    return bound


@dataclass
class EpsProblem:
    """Weighted fine-scale problem on Omega = (0, 1)^2.

    ``stiff_quad`` tags the measure phase at each quadrature point;
    ``coeff_stiff`` tags the coefficient phase, which in stiff boundary
    mode also covers every cell touching the boundary (the measure
    weight there is unchanged).
    """

    graph: FrameworkGraph
    eps: float
    theta: float
    h: float
    k: int
    n_fine: int
    boundary_mode: str
    a0: ElasticTensor
    a1: ElasticTensor
    mesh: CrossedMesh
    stiff_quad: np.ndarray
    coeff_stiff: np.ndarray
    weights: np.ndarray
    stiff_area: float
    k_stiff: sp.csc_matrix
    k_soft: sp.csc_matrix
    mass: sp.csc_matrix

    @property
    def soft_factor(self) -> float:
        return self.eps * self.eps

    @property
    def stiffness(self) -> sp.csc_matrix:
        return (self.k_stiff + self.soft_factor * self.k_soft).tocsc()

    @cached_property
    def free(self) -> np.ndarray:
        return fem.interior_vector_dofs(self.mesh)

    @property
    def mass_total(self) -> float:
        """Quadrature total of w over Omega (the measure of the body)."""
        return float(self.mesh.triangle_area * np.sum(self.weights) / 3.0)


def build(graph: FrameworkGraph, eps, theta, a0: ElasticTensor,
          a1: ElasticTensor, n_fine: int | None = None,
          boundary_mode: str = "plain") -> EpsProblem:
    """Assemble the weighted stiffness split and mass for one epsilon.

    n_fine counts elements per cell side (global mesh side k * n_fine);
    None picks auto_n_fine.  The full rod width 2 theta eps n_fine must
    span at least two element layers.
    """
    eps = float(eps)
    theta = float(theta)
    k = cell_count(eps)
    if boundary_mode not in BOUNDARY_MODES:
        raise ValueError(f"boundary_mode must be one of {BOUNDARY_MODES}")
    h = theta * eps
    rods = RodRegion(graph, h)

    if n_fine is None:
        n_fine = auto_n_fine(eps, theta)
    n_fine = int(n_fine)
    if n_fine < 2 or n_fine % 2:
        raise ValueError(f"n_fine must be even and >= 2, got {n_fine}")
    layers = 2.0 * theta * eps * n_fine
    if layers < 2.0 - 1e-9:
        raise ValueError(
            f"rod underresolution: full width spans {layers:.3g} element "
            f"layers, need >= 2 (raise n_fine)"
        )

    mesh = crossed_mesh(k * n_fine, periodic=False)
    points = mesh.quadrature_points()
    flat = points.reshape(-1, 2)
    stiff_quad = rods.classify(flat / eps).reshape(points.shape[:2])
    area = rods.stiff_area
    weights = 0.5 + stiff_quad / (2.0 * area)

    coeff_stiff = stiff_quad
    if boundary_mode == "stiff":
        centroid = mesh.tri_coords.mean(axis=1)
        cell = np.clip((centroid * k).astype(np.int64), 0, k - 1)
        ring = np.any((cell == 0) | (cell == k - 1), axis=1)
        coeff_stiff = stiff_quad | ring[:, None]

    # strain is constant per triangle, so the quadrature mean of the
    # weighted phase indicator is the exact triangle coefficient
    mean_stiff = np.mean(weights * coeff_stiff, axis=1)
    mean_soft = np.mean(weights * ~coeff_stiff, axis=1)
    k_stiff = fem.elastic_stiffness(
        mesh, mean_stiff[:, None, None] * a1.voigt()[None]
    )
    k_soft = fem.elastic_stiffness(
        mesh, mean_soft[:, None, None] * a0.voigt()[None]
    )
    mass = fem.vector_mass(mesh, weights)

    return EpsProblem(
        graph=graph, eps=eps, theta=theta, h=h, k=k, n_fine=n_fine,
        boundary_mode=boundary_mode, a0=a0, a1=a1, mesh=mesh,
        stiff_quad=stiff_quad, coeff_stiff=coeff_stiff, weights=weights,
        stiff_area=area, k_stiff=k_stiff, k_soft=k_soft, mass=mass,
    )


@dataclass(frozen=True)
class DirectSolution:
    """Source solve result; energy_soft already carries the eps^2 factor."""

    u: np.ndarray
    energy_stiff: float
    energy_soft: float
    norm_sq_w: float
    work: float
    residual: float

    @property
    def energy(self) -> float:
        return self.energy_stiff + self.energy_soft


@dataclass(frozen=True)
class DirectSpectrum:
    omegas: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray


def source_vector(mesh: CrossedMesh, f) -> np.ndarray:
    """Interleaved nodal source from a callable on points or node values."""
    if callable(f):
        vals = np.asarray(f(mesh.vertices), dtype=float)
    else:
        vals = np.asarray(f, dtype=float)
    vals = vals.reshape(mesh.n_vertices, 2) if vals.size == 2 * mesh.n_vertices \
        else vals
    if vals.shape != (mesh.n_vertices, 2):
        raise ValueError(
            f"source must supply {mesh.n_vertices} x 2 values, got {vals.shape}"
        )
    return vals.ravel()


def solve_source(p: EpsProblem, f) -> DirectSolution:
    """Solve (K_eps + M_eps) u = M_eps f with homogeneous Dirichlet data."""
    fvec = source_vector(p.mesh, f)
    free = p.free
    stiffness = p.stiffness
    system = fem.restrict(stiffness + p.mass, free)
    rhs = (p.mass @ fvec)[free]
    u_free = solve_linear(system, rhs, tol=_SOURCE_TOL)
    u = np.zeros(2 * p.mesh.n_vertices)
    u[free] = u_free

    denom = max(float(np.linalg.norm(rhs)), 1e-300)
    residual = float(np.linalg.norm(rhs - system @ u_free)) / denom
    e_stiff = float(u @ (p.k_stiff @ u))
    e_soft = p.soft_factor * float(u @ (p.k_soft @ u))
    return DirectSolution(
        u=u,
        energy_stiff=e_stiff,
        energy_soft=e_soft,
        norm_sq_w=float(u @ (p.mass @ u)),
        work=float(fvec @ (p.mass @ u)),
        residual=residual,
    )


def solve_spectrum(p: EpsProblem, m: int) -> DirectSpectrum:
    """Lowest m eigenvalues of K_eps u = omega M_eps u (no identity shift)."""
    if m < 1:
        raise ValueError("need at least one eigenvalue")
    free = p.free
    k_red = fem.restrict(p.stiffness, free)
    m_red = fem.restrict(p.mass, free)
    result = smallest_eigpairs(k_red, m_red, m, tol=_EIG_TOL)
    vectors = np.zeros((2 * p.mesh.n_vertices, m))
    vectors[free] = result.vectors
    return DirectSpectrum(
        omegas=result.values, vectors=vectors, residuals=result.residuals
    )


def sample_reconstruction(hom: HomogenisedSolution, p: EpsProblem) -> np.ndarray:
    """Nodal sample of u0(x) + sum_n c_n(x) phi_n(x/eps) on the fine mesh.

    phi_n is read through the periodic interpolant of its cell mesh.
    """
    coeffs, fields, cell = hom.reconstruction_ingredients()
    if hom.mesh is None:
        raise NumericsError("homogenised solution carries no macro mesh")
    verts = p.mesh.vertices
    rec = interpolate_p1(hom.mesh, hom.u0.reshape(-1, 2), verts)
    if coeffs.shape[0]:
        y = verts / p.eps
        for n in range(coeffs.shape[0]):
            c_n = interpolate_p1(hom.mesh, coeffs[n], verts)
            phi_n = interpolate_p1(cell.mesh, fields[n], y, wrap=True)
            rec = rec + c_n[:, None] * phi_n
    return rec


def two_scale_distance(u_eps, hom: HomogenisedSolution, p: EpsProblem) -> float:
    """w-weighted L2 distance between u_eps and the two-scale reconstruction.

    With no micro modes this is the plain weighted distance to u0.
    """
    rec = sample_reconstruction(hom, p)
    diff = (np.asarray(u_eps, dtype=float).reshape(-1, 2) - rec).ravel()
    return float(math.sqrt(max(diff @ (p.mass @ diff), 0.0)))


def hausdorff_residual(omegas, limit: BandStructure) -> tuple[float, float]:
    """One-sided Hausdorff residuals between a computed eigenvalue list and
    the limit spectrum's point representation (band skeleton, poles and
    silent eigenvalues).

    Forward: largest distance from a computed eigenvalue to the limit
    set.  Backward: largest distance from a limit point not above
    max(omegas) to the computed list.
    """
    om = np.sort(np.asarray(omegas, dtype=float).ravel())
    pts = limit.spectrum_points()
    if not len(om) or not len(pts):
        raise ValueError("need nonempty spectra on both sides")
    dist = np.abs(om[:, None] - pts[None, :])
    r_fwd = float(np.max(np.min(dist, axis=1)))
    below = pts <= om[-1]
    r_bwd = float(np.max(np.min(dist[:, below], axis=0))) if np.any(below) \
        else 0.0
    return r_fwd, r_bwd
