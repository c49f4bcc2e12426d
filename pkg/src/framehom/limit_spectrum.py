"""Limit spectrum of the homogenised operator: the frequency-dependent
density beta(s), its zeros and poles, the macroscopic Dirichlet spectrum,
the band-gap structure, and the eigenbasis reduction of the coupled
homogenised source problem.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import fem
from .cell_homog import ELLIPTIC_TOL, MacroTensor
from .micro_spectral import MicroSpectrum, full_fields
from .numerics import NumericsError, smallest_eigpairs, solve_linear

CLUSTER_RTOL = 1e-6
_POLE_GUARD = 1e-9
_ROOT_TOL = 1e-10
_MAX_BISECT = 200

NOT_ELLIPTIC_MESSAGE = "A^hom not elliptic; supply --macro-spectrum or use grid-diag"


class NotElliptic(ValueError):
    """Macro tensor with (numerically) zero ellipticity constant."""

    def __init__(self, value):
        super().__init__(NOT_ELLIPTIC_MESSAGE)
        self.ellipticity = float(value)


def cluster_indices(omegas, rtol=CLUSTER_RTOL):
    """Group an ascending eigenvalue list into near-degenerate clusters."""
    omegas = np.asarray(omegas, dtype=float)
    if len(omegas) == 0:
        return []
    bounds = [0]
    for i in range(1, len(omegas)):
        if omegas[i] - omegas[i - 1] > rtol * max(omegas[i], 1e-300):
            bounds.append(i)
    bounds.append(len(omegas))
    return [(bounds[i], bounds[i + 1]) for i in range(len(bounds) - 1)]


class BetaFunction:
    """Truncated eigen-sum for the effective density matrix

        beta(s) = s (I + s sum_n <phi_n> x <phi_n> / (omega_n - s)).

    Zero-average modes contribute removable singularities and are skipped in
    the sum.  Distinct eigenvalues are clustered at a relative tolerance;
    clusters with at least one nonzero-average mode are the poles (delta),
    the all-silent ones the alpha points.  An explicit truncation n_modes is
    rounded to a complete cluster: it grows to the cluster end when further
    modes were computed, and otherwise the whole trailing cluster is dropped,
    since it may continue past the computation and would then carry a partial
    residue.  n_modes=None takes the spectrum as given.
    """

    def __init__(self, spectrum: MicroSpectrum, n_modes: int | None = None,
                 symmetric: bool = False, cluster_rtol: float = CLUSTER_RTOL):
        omegas = np.asarray(spectrum.omegas, dtype=float)
        averages = np.asarray(spectrum.averages, dtype=float)
        live_all = ~np.asarray(spectrum.zero_average, dtype=bool)
        m = len(omegas)
        keep = m if n_modes is None else int(n_modes)
        if keep < 0 or keep > m:
            raise ValueError(f"n_modes must be in [0, {m}], got {n_modes}")

        end = keep
        if n_modes is not None:
            for lo, hi in cluster_indices(omegas, cluster_rtol):
                if lo < keep <= hi:
                    end = hi if hi < m else lo  # may continue past m: drop
                    break

        self.symmetric = bool(symmetric)
        self.cluster_rtol = float(cluster_rtol)
        self.omegas = omegas[:end].copy()
        self.averages = averages[:end].copy()
        self.live = live_all[:end].copy()
        # tail of computed-but-dropped averages, for the truncation estimate
        self.tail_average_sq = float(np.sum(averages[end:m] ** 2))

        # one representative eigenvalue and summed residue per cluster, so
        # roundoff-split multiple eigenvalues keep an isotropic projection
        deltas: list[float] = []
        alphas: list[float] = []
        residues: list[np.ndarray] = []
        for lo, hi in cluster_indices(self.omegas, cluster_rtol):
            rep = float(np.mean(self.omegas[lo:hi]))
            members = self.averages[lo:hi][self.live[lo:hi]]
            if len(members):
                deltas.append(rep)
                residues.append(np.einsum("ni,nj->ij", members, members))
            else:
                alphas.append(rep)
        self.poles = np.array(deltas)
        self.silent = np.array(alphas)
        self._residues = np.array(residues).reshape(len(deltas), 2, 2)
        if np.any(np.diff(self.poles) <= 0) or np.any(np.diff(self.silent) <= 0):
            raise NumericsError("pole/silent lists are not strictly ascending")

        self._cache: dict[float, np.ndarray] = {}

    @property
    def live_average_sq(self) -> float:
        """sum |<phi_n>|^2 over kept nonzero-average modes (Bessel: < 2)."""
        return float(np.einsum("nii->", self._residues))

    def beta(self, s) -> np.ndarray:
        s = float(s)
        cached = self._cache.get(s)
        if cached is not None:
            return cached.copy()
        for d in self.poles:
            if abs(s - d) <= _POLE_GUARD * max(1.0, abs(d)):
                raise NumericsError(f"s={s!r} is within 1e-9 of the pole {d!r}")
        mat = np.eye(2)
        if len(self.poles):
            weights = s / (self.poles - s)
            mat = mat + np.einsum("n,nij->ij", weights, self._residues)
        mat = s * mat
        self._cache[s] = mat
        return mat.copy()

    def scalar_b(self, s, rtol: float = 1e-6) -> float:
        if not self.symmetric:
            raise NumericsError(
                "scalar reduction requires a quarter-turn symmetric framework"
            )
        mat = self.beta(s)
        b = 0.5 * (mat[0, 0] + mat[1, 1])
        defect = max(
            abs(mat[0, 1]), abs(mat[1, 0]),
            abs(mat[0, 0] - b), abs(mat[1, 1] - b),
        )
        scale = max(abs(b), abs(float(s)))
        if defect > rtol * scale:
            raise NumericsError(
                f"beta({s!r}) is anisotropic (defect {defect:.3e}, scale {scale:.3e})"
            )
        return float(b)

    def truncation_bound(self, s) -> float:
        """Estimate of the dropped tail s^2 sum_{n>N}|<phi_n>|^2/(omega_N - s)
        from the computed-but-dropped averages."""
        if self.tail_average_sq == 0.0 or len(self.omegas) == 0:
            return 0.0
        denom = abs(float(self.omegas[-1]) - float(s))
        return float(s) ** 2 * self.tail_average_sq / max(denom, 1e-300)


def _bisect(func, lo, hi, flo):
    """Root of a monotone function with func(lo)*func(hi) < 0."""
    for _ in range(_MAX_BISECT):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        v = func(mid)
        if (v < 0.0) == (flo < 0.0):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def find_gammas(bf: BetaFunction) -> np.ndarray:
    """Ascending zeros of b: gamma_1 = 0 plus one zero after every pole.

    b tends to -inf just past each pole and to +inf before the next one
    (or grows like (1 - sum c_n) s on the last branch), so each bracket
    holds exactly one sign change of the monotone branch.
    """
    deltas = bf.poles
    gammas = [0.0]
    for i, d in enumerate(deltas):
        lo = d + 2.0 * _POLE_GUARD * max(1.0, d)
        if i + 1 < len(deltas):
            hi = deltas[i + 1] - 2.0 * _POLE_GUARD * max(1.0, deltas[i + 1])
        else:
            hi = 1.5 * d
            for _ in range(200):
                if bf.scalar_b(hi) > 0.0:
                    break
                hi *= 1.5
        flo = bf.scalar_b(lo)
        fhi = bf.scalar_b(hi)
        if not (flo < 0.0 < fhi):
            raise NumericsError(
                f"no sign change of b on ({d!r}, {hi!r}); truncation too small"
            )
        root = _bisect(bf.scalar_b, lo, hi, flo)
        if abs(bf.scalar_b(root)) > _ROOT_TOL * max(1.0, root):
            raise NumericsError(f"bisection stalled at s={root!r}")
        gammas.append(root)
    gammas = np.array(gammas)
    if len(deltas) and not np.all((gammas[:-1] < deltas) & (deltas < gammas[1:])):
        raise NumericsError("zeros and poles do not interlace")
    return gammas


def macro_spectrum(ahom: MacroTensor, mesh, k: int, tol: float = 1e-8) -> np.ndarray:
    """Lowest k Dirichlet eigenvalues of u -> -div(A_hom e(u)) on the unit
    square, by vector P1 elements on a crossed mesh."""
    if ahom.ellipticity < ELLIPTIC_TOL:
        raise NotElliptic(ahom.ellipticity)
    if k < 0:
        raise ValueError("eigenvalue count must be nonnegative")
    if k == 0:
        return np.zeros(0)
    if mesh.periodic:
        raise ValueError("macro problem needs a non-periodic mesh")
    stiffness = fem.elastic_stiffness(mesh, ahom.voigt)
    mass = fem.vector_mass(mesh)
    idx = fem.interior_vector_dofs(mesh)
    res = smallest_eigpairs(
        fem.restrict(stiffness, idx), fem.restrict(mass, idx), k, tol=tol
    )
    return res.values


@dataclass(frozen=True)
class BandStructure:
    """Discrete skeleton of the limit spectrum on the s-axis.

    Each branch (gamma_n, delta_n] carries the solutions of b(s) = Lambda_k
    for the macro sample; the band interval spans from the lowest skeleton
    point to the accumulation pole delta_n.  Gaps are the exact intervals
    (delta_n, gamma_{n+1}); silent alpha points are kept separate and may
    fall inside gaps.
    """

    gammas: np.ndarray
    deltas: np.ndarray
    alphas: np.ndarray
    lambdas: np.ndarray
    bands: tuple
    gaps: tuple
    skeleton: tuple

    def spectrum_points(self) -> np.ndarray:
        parts = [np.asarray(s, dtype=float) for s in self.skeleton]
        parts.append(self.deltas)
        parts.append(self.alphas)
        merged = np.concatenate(parts) if parts else np.zeros(0)
        return np.unique(merged)


def assemble_bands(bf: BetaFunction, gammas, lambdas) -> BandStructure:
    """Solve b(s) = Lambda_k on every branch and attach poles, gaps and
    silent points.

    Monotonicity of b on each branch needs the Bessel bound
    sum |<phi_n>|^2 < 2: with c_n = |<phi_n>|^2 / 2 the derivative is
    b'(s) = (1 - sum c) + sum c w^2/(w-s)^2, strictly positive when
    sum c < 1, and the same margin makes b eventually positive past the
    last pole.  Asserted up front.
    """
    gammas = np.asarray(gammas, dtype=float)
    lambdas = np.sort(np.asarray(lambdas, dtype=float))
    deltas = bf.poles
    if len(gammas) != len(deltas) + 1:
        raise ValueError("need one zero before and after every pole")
    if bf.live_average_sq >= 2.0:
        raise NumericsError(
            "average Bessel sum >= 2; branches would not be monotone"
        )
    if len(lambdas) and lambdas[0] <= 0.0:
        raise ValueError("macro eigenvalues must be positive")

    skeleton = []
    bands = []
    for i, d in enumerate(deltas):
        lo_edge = gammas[i]
        hi_edge = d - 2.0 * _POLE_GUARD * max(1.0, d)
        fhi = bf.scalar_b(hi_edge)
        points = []
        for lam in lambdas:
            if fhi <= lam:
                raise NumericsError(
                    f"b stays below Lambda={lam!r} on branch {i + 1}; "
                    "pole guard too wide or truncation too small"
                )
            root = _bisect(lambda s, t=lam: bf.scalar_b(s) - t,
                           lo_edge, hi_edge, -lam)
            points.append(root)
        skeleton.append(np.array(points))
        if points:
            bands.append((points[0], float(d)))
    gaps = tuple(
        (float(deltas[i]), float(gammas[i + 1])) for i in range(len(deltas))
    )
    return BandStructure(
        gammas=gammas,
        deltas=deltas.copy(),
        alphas=bf.silent.copy(),
        lambdas=lambdas,
        bands=tuple(bands),
        gaps=gaps,
        skeleton=tuple(skeleton),
    )


@dataclass(frozen=True)
class HomogenisedSolution:
    """Eigenbasis-reduced solution of the coupled homogenised problem.

    u0 is the macro displacement (interleaved nodal layout), coeffs the
    nodal micro-mode coefficient fields c_n(x); the two-scale reconstruction
    is u0(x) + sum_n c_n(x) phi_n(y).  energy is the macro plus micro
    elastic energy; work_balance the equal-by-identity quantity
    (f, u)_mu - |u|_mu^2.
    """

    u0: np.ndarray
    coeffs: np.ndarray
    omegas: np.ndarray
    averages: np.ndarray
    s_matrix: np.ndarray
    energy: float
    work_balance: float
    residual_macro: float
    residual_micro: float
    micro_fields: np.ndarray | None = None
    cell: object = None
    mesh: object = None

    def reconstruction_ingredients(self):
        if self.coeffs.shape[0] and (self.micro_fields is None or self.cell is None):
            raise NumericsError("missing micro reconstruction fields")
        return self.coeffs, self.micro_fields, self.cell


def solve_homogenised(ahom: MacroTensor, mesh, f, spectrum: MicroSpectrum,
                      n_modes: int, disc=None) -> HomogenisedSolution:
    """Solve the coupled homogenised source problem truncated to n_modes.

    The micro coefficients satisfy c_n = <phi_n>.(f - u0)/(1 + omega_n)
    nodally, which reduces the macro block to
    (K + M x (I - S)) u0 = M x (I - S) f with S = sum a_n a_n^T/(1+omega_n).
    """
    if ahom.ellipticity < ELLIPTIC_TOL:
        raise NotElliptic(ahom.ellipticity)
    if mesh.periodic:
        raise ValueError("macro problem needs a non-periodic mesh")
    nv = mesh.n_vertices
    f = np.asarray(f, dtype=float).ravel()
    if f.shape != (2 * nv,):
        raise ValueError(f"source must have {2 * nv} entries, got {f.shape}")
    n_modes = int(n_modes)
    if n_modes < 0 or n_modes > len(spectrum.omegas):
        raise ValueError(f"n_modes must be in [0, {len(spectrum.omegas)}]")

    omegas = np.asarray(spectrum.omegas, dtype=float)[:n_modes]
    avgs = np.asarray(spectrum.averages, dtype=float)[:n_modes]
    s_matrix = np.einsum("n,ni,nj->ij", 1.0 / (1.0 + omegas), avgs, avgs) \
        if n_modes else np.zeros((2, 2))
    s_eigs = np.linalg.eigvalsh(s_matrix)
    if s_eigs[0] < -1e-12 or s_eigs[-1] >= 1.0:
        raise NumericsError(f"S spectrum {s_eigs} outside [0, 1)")

    stiffness = fem.elastic_stiffness(mesh, ahom.voigt)
    mass_s = fem.scalar_mass(mesh)
    mass_v = fem.vector_mass(mesh)
    mass_kron = sp.kron(mass_s, np.eye(2) - s_matrix, format="csc")
    idx = fem.interior_vector_dofs(mesh)
    system = fem.restrict(stiffness + mass_kron, idx)
    rhs_full = mass_kron @ f
    u_int = solve_linear(system, rhs_full[idx], tol=1e-10)
    u0 = np.zeros(2 * nv)
    u0[idx] = u_int

    diff = (f - u0).reshape(nv, 2)
    coeffs = (diff @ avgs.T / (1.0 + omegas)).T if n_modes else np.zeros((0, nv))

    full_res = (stiffness + mass_kron) @ u0 - rhs_full
    scale = np.linalg.norm(rhs_full[idx])
    residual_macro = float(np.linalg.norm(full_res[idx]) / max(scale, 1e-300))

    residual_micro = 0.0
    fv = f.reshape(nv, 2)
    for n in range(n_modes):
        lhs = mass_s @ ((1.0 + omegas[n]) * coeffs[n] - diff @ avgs[n])
        ref = np.linalg.norm(mass_s @ (fv @ avgs[n]))
        ref = max(ref, np.linalg.norm(mass_s @ coeffs[n]), 1e-300)
        residual_micro = max(residual_micro, float(np.linalg.norm(lhs) / ref))

    energy = float(u0 @ (stiffness @ u0))
    for n in range(n_modes):
        energy += float(omegas[n] * (coeffs[n] @ (mass_s @ coeffs[n])))

    # (f, u)_mu - |u|_mu^2 with u = u0 + sum c_n phi_n and M-orthonormal modes
    work = float(f @ (mass_v @ u0))
    norm_sq = float(u0 @ (mass_v @ u0))
    for n in range(n_modes):
        work += float((fv @ avgs[n]) @ (mass_s @ coeffs[n]))
        norm_sq += 2.0 * float((u0.reshape(nv, 2) @ avgs[n]) @ (mass_s @ coeffs[n]))
        norm_sq += float(coeffs[n] @ (mass_s @ coeffs[n]))

    micro_fields = None
    cell = None
    if disc is not None and n_modes:
        micro_fields = full_fields(disc, spectrum.vectors[:, :n_modes])
        cell = disc.cell

    return HomogenisedSolution(
        u0=u0,
        coeffs=coeffs,
        omegas=omegas,
        averages=avgs,
        s_matrix=s_matrix,
        energy=energy,
        work_balance=work - norm_sq,
        residual_macro=residual_macro,
        residual_micro=residual_micro,
        micro_fields=micro_fields,
        cell=cell,
        mesh=mesh,
    )
