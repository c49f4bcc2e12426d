"""Cell eigenproblem on the unit cell: rod bending coupled to the soft
inclusion, with the composite-measure mass.

The unknown is a cell-periodic field that is an unconstrained 2D
displacement away from the rods, purely transverse on every link
(U . tau = 0), zero at the graph nodes, and whose link-end slopes share one
rotation scalar per node.  Stiffness couples Euler-Bernoulli bending of the
transverse deflection (coefficient theta^2/6 times the link modulus K1,
with arclength normalised by the total framework length) to the soft
elastic energy over the cell area; the mass is half area measure plus half
normalised arclength.

Discretisation: vector P1 elements on the periodic crossed mesh for the
area terms, Hermite cubic elements along each traced link for the
deflection.  The deflection degree of freedom at an on-link mesh vertex is
shared with the P1 trace normal component, so the trace condition holds
exactly at vertices; between vertices the P1 trace is linear while the
beam deflection is cubic, a consistency error of mesh order.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import fem
from .geometry import CellMesh, FrameworkError
from .materials import ElasticTensor, k1
from .numerics import EigenResult, SparseSymmetric, smallest_eigpairs

KIND_OFF = 0
KIND_ONLINK = 1
KIND_NODE = 2


@dataclass(frozen=True)
class BeamChain:
    """Hermite dof table along one traced link.

    w_dofs holds the deflection dof per path vertex (-1 at graph nodes,
    where the deflection is pinned); psi_dofs holds the slope dof, which at
    a graph node is the node's shared rotation dof.
    """

    link: int
    length: float
    tau: np.ndarray
    nu: np.ndarray
    w_dofs: np.ndarray
    psi_dofs: np.ndarray

    @property
    def n_elements(self):
        return len(self.w_dofs) - 1


@dataclass(frozen=True)
class MicroDiscretisation:
    cell: CellMesh
    n_free: int
    kinds: np.ndarray
    pair_dofs: np.ndarray
    rot_dofs: np.ndarray
    node_vertices: np.ndarray
    embedding: sp.csr_matrix
    beams: tuple


@dataclass(frozen=True)
class MicroSystem:
    """Assembled pencil with its building blocks kept separate."""

    stiffness: sp.csc_matrix
    mass: sp.csc_matrix
    bending: sp.csc_matrix
    area_stiffness: sp.csc_matrix
    area_mass: sp.csc_matrix
    line_mass: sp.csc_matrix


@dataclass(frozen=True)
class MicroSpectrum:
    omegas: np.ndarray
    vectors: np.ndarray
    averages: np.ndarray
    zero_average: np.ndarray
    residuals: np.ndarray


def hermite_beam_matrices(length: float):
    """Cubic beam element: bending stiffness (unit EI), consistent mass,
    and the shape-function integrals over the element."""
    l = float(length)
    k = np.array(
        [
            [12.0, 6.0 * l, -12.0, 6.0 * l],
            [6.0 * l, 4.0 * l * l, -6.0 * l, 2.0 * l * l],
            [-12.0, -6.0 * l, 12.0, -6.0 * l],
            [6.0 * l, 2.0 * l * l, -6.0 * l, 4.0 * l * l],
        ]
    ) / l**3
    m = (
        np.array(
            [
                [156.0, 22.0 * l, 54.0, -13.0 * l],
                [22.0 * l, 4.0 * l * l, 13.0 * l, -3.0 * l * l],
                [54.0, 13.0 * l, 156.0, -22.0 * l],
                [-13.0 * l, -3.0 * l * l, -22.0 * l, 4.0 * l * l],
            ]
        )
        * l
        / 420.0
    )
    g = np.array([l / 2.0, l * l / 12.0, l / 2.0, -l * l / 12.0])
    return k, m, g


def build_discretisation(cell: CellMesh) -> MicroDiscretisation:
    mesh = cell.mesh
    graph = cell.graph
    nv = mesh.n_vertices
    n_nodes = len(graph.nodes)

    node_vertices = np.full(n_nodes, -1, dtype=np.int64)
    for p in cell.paths:
        for node, vid in ((p.end_nodes[0], p.vertex_ids[0]),
                          (p.end_nodes[1], p.vertex_ids[-1])):
            if node_vertices[node] == -1:
                node_vertices[node] = vid
            elif node_vertices[node] != vid:
                raise FrameworkError(
                    f"node {node} maps to two mesh vertices; mesh/graph mismatch"
                )

    kinds = np.full(nv, KIND_OFF, dtype=np.int8)
    onlink_nu = np.zeros((nv, 2))
    kinds[node_vertices] = KIND_NODE
    for p in cell.paths:
        interior = p.vertex_ids[1:-1]
        kinds[interior] = KIND_ONLINK
        onlink_nu[interior] = p.nu

    pair_dofs = np.full((nv, 2), -1, dtype=np.int64)
    counter = 0
    for v in range(nv):
        if kinds[v] == KIND_NODE:
            continue
        pair_dofs[v] = (counter, counter + 1)
        counter += 2
    rot_dofs = np.arange(counter, counter + n_nodes, dtype=np.int64)
    n_free = counter + n_nodes

    rows, cols, vals = [], [], []
    for v in range(nv):
        if kinds[v] == KIND_OFF:
            rows += [2 * v, 2 * v + 1]
            cols += [int(pair_dofs[v, 0]), int(pair_dofs[v, 1])]
            vals += [1.0, 1.0]
        elif kinds[v] == KIND_ONLINK:
            rows += [2 * v, 2 * v + 1]
            cols += [int(pair_dofs[v, 0]), int(pair_dofs[v, 0])]
            vals += [float(onlink_nu[v, 0]), float(onlink_nu[v, 1])]
    embedding = sp.csr_matrix(
        (vals, (rows, cols)), shape=(2 * nv, n_free)
    )

    beams = []
    for p in cell.paths:
        vids = p.vertex_ids
        w = np.empty(len(vids), dtype=np.int64)
        psi = np.empty(len(vids), dtype=np.int64)
        for i, vid in enumerate(vids):
            if kinds[vid] == KIND_NODE:
                w[i] = -1
                node = int(np.flatnonzero(node_vertices == vid)[0])
                psi[i] = rot_dofs[node]
            else:
                w[i] = pair_dofs[vid, 0]
                psi[i] = pair_dofs[vid, 1]
        beams.append(
            BeamChain(
                link=p.link,
                length=p.edge_length,
                tau=p.tau,
                nu=p.nu,
                w_dofs=w,
                psi_dofs=psi,
            )
        )

    return MicroDiscretisation(
        cell=cell,
        n_free=n_free,
        kinds=kinds,
        pair_dofs=pair_dofs,
        rot_dofs=rot_dofs,
        node_vertices=node_vertices,
        embedding=embedding,
        beams=tuple(beams),
    )


def _add_masked(acc: SparseSymmetric, dofs: np.ndarray, block: np.ndarray):
    keep = dofs >= 0
    if np.all(keep):
        acc.add_block(dofs, block)
        return
    ids = dofs[keep]
    acc.add_block(ids, block[np.ix_(keep, keep)])


def _beam_accumulate(disc, per_link_coef, which):
    acc = SparseSymmetric(disc.n_free)
    for chain in disc.beams:
        k4, m4, _ = hermite_beam_matrices(chain.length)
        block = per_link_coef[chain.link] * (k4 if which == "k" else m4)
        for i in range(chain.n_elements):
            dofs = np.array(
                [
                    chain.w_dofs[i],
                    chain.psi_dofs[i],
                    chain.w_dofs[i + 1],
                    chain.psi_dofs[i + 1],
                ],
                dtype=np.int64,
            )
            _add_masked(acc, dofs, block)
    return acc.tocsc()


def _reduce(full: sp.spmatrix, e: sp.csr_matrix) -> sp.csc_matrix:
    r = (e.T @ (full @ e)).tocsc()
    return (0.5 * (r + r.T)).tocsc()


def assemble_micro(
    disc: MicroDiscretisation,
    a0: ElasticTensor,
    a1: ElasticTensor,
    theta: float,
) -> MicroSystem:
    if theta <= 0:
        raise FrameworkError("theta must be positive")
    graph = disc.cell.graph
    ltot = graph.total_length

    bend_coef = np.array(
        [
            theta**2 / 6.0 * k1(a1, graph.taus[li]) / ltot
            for li in range(len(graph.links))
        ]
    )
    line_coef = np.full(len(graph.links), 1.0 / (2.0 * ltot))

    bending = _beam_accumulate(disc, bend_coef, "k")
    line_mass = _beam_accumulate(disc, line_coef, "m")

    mesh = disc.cell.mesh
    area_stiffness = _reduce(
        fem.elastic_stiffness(mesh, 0.5 * a0.voigt()), disc.embedding
    )
    area_mass = _reduce(fem.vector_mass(mesh, 0.5), disc.embedding)

    return MicroSystem(
        stiffness=(bending + area_stiffness).tocsc(),
        mass=(line_mass + area_mass).tocsc(),
        bending=bending,
        area_stiffness=area_stiffness,
        area_mass=area_mass,
        line_mass=line_mass,
    )


def averaging_operator(disc: MicroDiscretisation) -> np.ndarray:
    """Rows are the two components of the composite-measure average as
    linear functionals of the free coefficients."""
    mesh = disc.cell.mesh
    ltot = disc.cell.graph.total_length
    lump = fem.p1_integrals(mesh, 0.5)
    g_full = np.zeros((2, 2 * mesh.n_vertices))
    g_full[0, 0::2] = lump
    g_full[1, 1::2] = lump
    op = np.asarray(g_full @ disc.embedding)

    for chain in disc.beams:
        _, _, g4 = hermite_beam_matrices(chain.length)
        g4 = g4 / (2.0 * ltot)
        for i in range(chain.n_elements):
            dofs = (
                chain.w_dofs[i],
                chain.psi_dofs[i],
                chain.w_dofs[i + 1],
                chain.psi_dofs[i + 1],
            )
            for local, dof in enumerate(dofs):
                if dof >= 0:
                    op[:, dof] += chain.nu * g4[local]
    return op


def composite_p1_mass(disc: MicroDiscretisation) -> sp.csc_matrix:
    """Mass of the composite measure on the unreduced P1 vector space (both
    trace components piecewise linear along the links); the constant field
    has unit mass."""
    mesh = disc.cell.mesh
    ltot = disc.cell.graph.total_length
    acc = SparseSymmetric(2 * mesh.n_vertices)
    seg = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0
    for p in disc.cell.paths:
        block = p.edge_length * seg / (2.0 * ltot)
        vids = p.vertex_ids
        for i in range(len(vids) - 1):
            for comp in (0, 1):
                dofs = np.array(
                    [2 * vids[i] + comp, 2 * vids[i + 1] + comp], dtype=np.int64
                )
                acc.add_block(dofs, block)
    return (fem.vector_mass(mesh, 0.5) + acc.tocsc()).tocsc()


def full_fields(disc: MicroDiscretisation, vectors: np.ndarray) -> np.ndarray:
    """P1 nodal fields of eigenvectors, shape (m, V, 2)."""
    full = (disc.embedding @ vectors.reshape(disc.n_free, -1)).T
    return full.reshape(-1, disc.cell.mesh.n_vertices, 2)


def solve_micro(
    disc: MicroDiscretisation,
    system: MicroSystem,
    m: int,
    tol: float = 1e-8,
    tol_avg: float = 1e-6,
) -> MicroSpectrum:
    if m < 1:
        raise FrameworkError("mode count must be at least 1")
    res: EigenResult = smallest_eigpairs(system.stiffness, system.mass, m, tol=tol)
    op = averaging_operator(disc)
    averages = (op @ res.vectors).T
    norms = np.linalg.norm(averages, axis=1)
    return MicroSpectrum(
        omegas=res.values,
        vectors=res.vectors,
        averages=averages,
        zero_average=norms <= tol_avg,
        residuals=res.residuals,
    )
