"""Periodic rod frameworks on the unit cell, their fattened rod regions,
and the crossed-triangle meshes that the discretisations share.

Conventions
-----------
The cell is Q = [0, 1)^2 with periodic identification.  A framework is a
finite graph: nodes inside the cell, straight links between nodes where a
link may close up through the periodic boundary (integer shift on its far
end).  Each link carries a unit tangent tau and unit normal nu with
det[tau nu] = +1.  The rod region of half-width h is the set of points at
periodic distance < h from the link set, so the total rod width is 2h.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from shapely.geometry import LineString, box
from shapely.ops import unary_union

GEOM_TOL = 1e-12
# distinct geometric entities must be separated by at least this much
SEPARATION_TOL = 1e-9
_BUFFER_QUAD_SEGS = 128

PRESET_NAMES = ("grid", "grid-diag")


class FrameworkError(ValueError):
    """Invalid framework description or incompatible mesh request."""


def wrap_unit(y):
    """Map points into [0, 1)^2."""
    y = np.asarray(y, dtype=float)
    return y - np.floor(y)


def periodic_delta(a, b):
    """Shortest periodic difference a - b, componentwise in [-1/2, 1/2)."""
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    return d - np.round(d)


def _point_segment_distance(p, s, e):
    """Distance from points p (..., 2) to the segment [s, e]."""
    p = np.asarray(p, dtype=float)
    v = e - s
    vv = float(v @ v)
    if vv <= GEOM_TOL**2:
        return np.linalg.norm(p - s, axis=-1)
    t = np.clip(((p - s) @ v) / vv, 0.0, 1.0)
    proj = s + t[..., None] * v
    return np.linalg.norm(p - proj, axis=-1)


def _segment_segment_distance(p1, p2, q1, q2):
    """Distance between two segments in the plane."""
    d1 = p2 - p1
    d2 = q2 - q1
    cross = d1[0] * d2[1] - d1[1] * d2[0]
    if abs(cross) > GEOM_TOL:
        # check for a proper crossing
        r = q1 - p1
        t = (r[0] * d2[1] - r[1] * d2[0]) / cross
        u = (r[0] * d1[1] - r[1] * d1[0]) / cross
        if -GEOM_TOL <= t <= 1 + GEOM_TOL and -GEOM_TOL <= u <= 1 + GEOM_TOL:
            return 0.0
    cands = [
        _point_segment_distance(p1, q1, q2),
        _point_segment_distance(p2, q1, q2),
        _point_segment_distance(q1, p1, p2),
        _point_segment_distance(q2, p1, p2),
    ]
    return float(min(cands))


@dataclass(frozen=True)
class Link:
    """Straight link from node ``a`` to node ``b`` shifted by ``shift`` cells."""

    a: int
    b: int
    shift: tuple[int, int]


class FrameworkGraph:
    """Periodic framework of straight links on the unit cell.

    Parameters
    ----------
    nodes : (N, 2) array
        Node positions in [0, 1)^2.
    links : sequence of Link
        Straight segments from nodes[a] to nodes[b] + shift.
    """

    def __init__(self, nodes, links):
        self.nodes = np.asarray(nodes, dtype=float)
        self.links = [Link(l.a, l.b, (int(l.shift[0]), int(l.shift[1]))) for l in links]
        self._validate()

    # -- derived geometry -------------------------------------------------

    @cached_property
    def seg_start(self):
        return self.nodes[[l.a for l in self.links]]

    @cached_property
    def seg_end(self):
        return self.nodes[[l.b for l in self.links]] + np.array(
            [l.shift for l in self.links], dtype=float
        )

    @cached_property
    def lengths(self):
        return np.linalg.norm(self.seg_end - self.seg_start, axis=1)

    @cached_property
    def taus(self):
        return (self.seg_end - self.seg_start) / self.lengths[:, None]

    @cached_property
    def nus(self):
        # rotate tau by +90 degrees: det[tau nu] = +1
        t = self.taus
        return np.column_stack([-t[:, 1], t[:, 0]])

    @property
    def total_length(self):
        return float(self.lengths.sum())

    def segments(self):
        """(L, 2, 2) array of (start, end) pairs."""
        return np.stack([self.seg_start, self.seg_end], axis=1)

    # -- validation --------------------------------------------------------

    def _segment_copies(self, margin=2):
        """All periodic copies (start, end, link index, shift) near the cell."""
        out = []
        for i, (s, e) in enumerate(zip(self.seg_start, self.seg_end)):
            for zx in range(-margin, margin + 1):
                for zy in range(-margin, margin + 1):
                    z = np.array([zx, zy], dtype=float)
                    out.append((s + z, e + z, i, (zx, zy)))
        return out

    def _validate(self):
        nodes = self.nodes
        if nodes.ndim != 2 or nodes.shape[1] != 2 or nodes.shape[0] == 0:
            raise FrameworkError("framework needs at least one node with 2 coordinates")
        if not np.all(np.isfinite(nodes)):
            raise FrameworkError("node coordinates must be finite")
        if np.any(nodes < -GEOM_TOL) or np.any(nodes >= 1.0 - GEOM_TOL):
            raise FrameworkError("node out of cell: coordinates must lie in [0, 1)^2")
        for i in range(len(nodes)):
            for j in range(i + 1, len(nodes)):
                if np.linalg.norm(periodic_delta(nodes[i], nodes[j])) < SEPARATION_TOL:
                    raise FrameworkError(f"nodes {i} and {j} coincide")
        if not self.links:
            raise FrameworkError("framework needs at least one link")
        n = len(nodes)
        used = set()
        for k, l in enumerate(self.links):
            if not (0 <= l.a < n and 0 <= l.b < n):
                raise FrameworkError(f"link {k} references an unknown node id")
            used.add(l.a)
            used.add(l.b)
        if used != set(range(n)):
            raise FrameworkError("isolated node: every node must touch a link")
        if np.any(self.lengths < SEPARATION_TOL):
            raise FrameworkError("zero-length link")
        self._check_boundary_links()
        self._check_node_link_contacts()
        self._check_link_intersections()

    def _check_boundary_links(self):
        for k, (s, e, t) in enumerate(zip(self.seg_start, self.seg_end, self.taus)):
            for axis in (0, 1):
                if abs(t[1 - axis]) < GEOM_TOL:  # parallel to the other axis
                    coord = s[1 - axis]
                    if abs(coord - round(coord)) < SEPARATION_TOL:
                        raise FrameworkError(
                            f"link {k} lies on the cell boundary; shift the framework"
                        )

    def _check_node_link_contacts(self):
        # a node may only touch a link copy at one of its endpoints
        for p_idx, p in enumerate(self.nodes):
            for s, e, li, _shift in self._segment_copies():
                d = float(_point_segment_distance(p, s, e))
                if d < SEPARATION_TOL:
                    at_end = (
                        np.linalg.norm(p - s) < SEPARATION_TOL
                        or np.linalg.norm(p - e) < SEPARATION_TOL
                    )
                    if not at_end:
                        raise FrameworkError(
                            f"node {p_idx} lies in the interior of link {li}; split the link"
                        )

    def _is_node_point(self, p):
        d = periodic_delta(self.nodes, wrap_unit(p))
        return bool(np.any(np.linalg.norm(d, axis=1) < SEPARATION_TOL))

    def _check_link_intersections(self):
        copies = self._segment_copies()
        base = [(s, e, i) for (s, e, i, shift) in copies if shift == (0, 0)]
        for s1, e1, i in base:
            for s2, e2, j, shift in copies:
                if j < i or (j == i and shift == (0, 0)):
                    continue
                if _segment_segment_distance(s1, e1, s2, e2) > SEPARATION_TOL:
                    continue
                d1 = e1 - s1
                d2 = e2 - s2
                cross = d1[0] * d2[1] - d1[1] * d2[0]
                if abs(cross) < GEOM_TOL * max(1.0, np.abs(d1).max() * np.abs(d2).max()):
                    # collinear or parallel touching: measure the overlap
                    t = d1 / np.linalg.norm(d1)
                    a0, a1 = sorted([0.0, float(d1 @ t)])
                    b0, b1 = sorted([float((s2 - s1) @ t), float((e2 - s1) @ t)])
                    overlap = min(a1, b1) - max(a0, b0)
                    if overlap > SEPARATION_TOL:
                        raise FrameworkError(
                            f"links {i} and {j} overlap along a segment"
                        )
                    # single-point collinear contact must be a node
                    contact = s1 + t * max(a0, b0)
                    if not self._is_node_point(contact):
                        raise FrameworkError(
                            f"links {i} and {j} touch away from any node"
                        )
                else:
                    r = s2 - s1
                    tpar = (r[0] * d2[1] - r[1] * d2[0]) / cross
                    pt = s1 + tpar * d1
                    if not self._is_node_point(pt):
                        raise FrameworkError(
                            f"links {i} and {j} intersect away from any node "
                            f"(at {pt[0]:.6f}, {pt[1]:.6f})"
                        )

    # -- symmetry ----------------------------------------------------------

    def _canonical_link_set(self, segs):
        """Canonical unordered endpoint pairs, midpoint wrapped into the cell."""
        out = []
        for s, e in segs:
            mid = 0.5 * (s + e)
            t = np.floor(mid)
            a, b = s - t, e - t
            if (a[0], a[1]) > (b[0], b[1]):
                a, b = b, a
            out.append(np.concatenate([a, b]))
        return np.array(out)

    @cached_property
    def quarter_turn_symmetric(self):
        """True if a rotation by pi/2 about the cell centre maps the framework
        onto itself modulo integer shifts."""

        def rot(p):
            return np.column_stack([1.0 - p[..., 1], p[..., 0]])

        orig = self._canonical_link_set(zip(self.seg_start, self.seg_end))
        rotd = self._canonical_link_set(
            zip(rot(self.seg_start), rot(self.seg_end))
        )
        if len(orig) != len(rotd):
            return False
        unmatched = list(range(len(orig)))
        for r in rotd:
            hit = None
            for k in unmatched:
                d = r - orig[k]
                # both endpoints may sit one common integer shift apart
                dd = d.copy()
                dd[0::2] -= round(float(d[0]))
                dd[1::2] -= round(float(d[1]))
                if np.max(np.abs(dd)) < 1e-9:
                    hit = k
                    break
            if hit is None:
                return False
            unmatched.remove(hit)
        return True


# -- presets and file format -----------------------------------------------


def preset(name):
    """Built-in frameworks: ``grid`` and ``grid-diag``."""
    if name == "grid":
        nodes = [[0.5, 0.5]]
        links = [Link(0, 0, (1, 0)), Link(0, 0, (0, 1))]
    elif name == "grid-diag":
        nodes = [[0.5, 0.5], [0.0, 0.0]]
        links = [
            Link(0, 0, (1, 0)),
            Link(0, 0, (0, 1)),
            Link(1, 0, (0, 0)),   # (0,0) -> (1/2,1/2)
            Link(0, 1, (1, 1)),   # (1/2,1/2) -> (1,1)
            Link(0, 1, (1, 0)),   # (1/2,1/2) -> (1,0)
            Link(0, 1, (0, 1)),   # (1/2,1/2) -> (0,1)
        ]
    else:
        raise FrameworkError(f"unknown preset {name!r}; choices: {PRESET_NAMES}")
    return FrameworkGraph(np.array(nodes, dtype=float), links)


def parse_framework(text):
    """Parse the plain-text framework format.

    First non-comment line must be ``framework v1``; then ``node <id> <y1> <y2>``
    and ``link <id_a> <id_b> <s1> <s2>`` records.  ``#`` starts a comment.
    """
    lines = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            lines.append(line)
    if not lines or lines[0].split() != ["framework", "v1"]:
        raise FrameworkError("framework file must start with 'framework v1'")
    nodes = {}
    links = []
    for line in lines[1:]:
        parts = line.split()
        try:
            if parts[0] == "node" and len(parts) == 4:
                nid = int(parts[1])
                if nid in nodes:
                    raise FrameworkError(f"duplicate node id {nid}")
                nodes[nid] = (float(parts[2]), float(parts[3]))
            elif parts[0] == "link" and len(parts) == 5:
                links.append(
                    (int(parts[1]), int(parts[2]), int(parts[3]), int(parts[4]))
                )
            else:
                raise FrameworkError(f"unrecognised record: {line!r}")
        except (ValueError, IndexError) as exc:
            raise FrameworkError(f"cannot parse line {line!r}: {exc}") from exc
    if sorted(nodes) != list(range(len(nodes))):
        raise FrameworkError("node ids must be 0..N-1")
    coords = np.array([nodes[i] for i in range(len(nodes))], dtype=float)
    return FrameworkGraph(coords, [Link(a, b, (sx, sy)) for a, b, sx, sy in links])


def format_framework(graph):
    out = ["framework v1"]
    for i, p in enumerate(graph.nodes):
        out.append(f"node {i} {float(p[0])!r} {float(p[1])!r}")
    for l in graph.links:
        out.append(f"link {l.a} {l.b} {l.shift[0]} {l.shift[1]}")
    return "\n".join(out) + "\n"


def load_framework(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_framework(fh.read())


# -- rod region --------------------------------------------------------------


def node_link_clearance(graph):
    """Minimal distance from a node to a link copy not ending at that node."""
    best = math.inf
    copies = graph._segment_copies()
    for p in graph.nodes:
        for s, e, _li, _shift in copies:
            if (
                np.linalg.norm(p - s) < SEPARATION_TOL
                or np.linalg.norm(p - e) < SEPARATION_TOL
            ):
                continue
            best = min(best, float(_point_segment_distance(p, s, e)))
    return best


@dataclass(frozen=True)
class RodRegion:
    """Fattened framework: points at periodic distance < half_width from the
    link set.  Total rod width is 2 * half_width."""

    graph: FrameworkGraph
    half_width: float

    def __post_init__(self):
        h = self.half_width
        if not (h > 0.0 and math.isfinite(h)):
            raise FrameworkError("rod half-width must be positive")
        bound = 0.5 * node_link_clearance(self.graph)
        if not h < bound:
            raise FrameworkError(
                f"rod half-width {h} too large: rods of distinct links merge "
                f"(bound {bound:.6g})"
            )

    @cached_property
    def _near_segments(self):
        """Periodic link copies that can come within 1/2 of the unit cell."""
        segs = []
        for s, e, _li, _shift in self.graph._segment_copies():
            lo = np.minimum(s, e)
            hi = np.maximum(s, e)
            if np.all(hi > -0.55) and np.all(lo < 1.55):
                segs.append((s, e))
        return segs

    def distance(self, points):
        """Periodic distance from points (m, 2) to the link set."""
        p = wrap_unit(np.atleast_2d(np.asarray(points, dtype=float)))
        best = np.full(len(p), np.inf)
        for s, e in self._near_segments:
            np.minimum(best, _point_segment_distance(p, s, e), out=best)
        return best

    def classify(self, points):
        """True where a point lies in the stiff rod region."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = self.distance(pts) < self.half_width
        if np.asarray(points).ndim == 1:
            return bool(out[0])
        return out

    @cached_property
    def stiff_area(self):
        """Lebesgue area of the rod region inside one cell.

        Exact (up to cap polygonisation, < 1e-6) via polygon union of the
        buffered link copies clipped to the cell.
        """
        h = self.half_width
        geoms = []
        for s, e in self._near_segments:
            geoms.append(
                LineString([tuple(s), tuple(e)]).buffer(h, quad_segs=_BUFFER_QUAD_SEGS)
            )
        union = unary_union(geoms)
        return float(union.intersection(box(0.0, 0.0, 1.0, 1.0)).area)


# -- crossed-triangle meshes --------------------------------------------------

# interior 3-point quadrature rule on the reference triangle (degree 2,
# no point on an edge, so indicator classification is unambiguous)
QUAD_BARY = np.array(
    [
        [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0],
        [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
        [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
    ]
)


@dataclass
class CrossedMesh:
    """Uniform n x n grid of subsquares, each cut into 4 triangles by its
    diagonals.  ``periodic`` identifies opposite sides of the unit square."""

    n: int
    periodic: bool
    vertices: np.ndarray      # (Nv, 2) representative coordinates
    triangles: np.ndarray     # (Nt, 3) vertex ids, subsquare-major, 4 per square
    tri_coords: np.ndarray    # (Nt, 3, 2) unwrapped corner coordinates
    boundary: np.ndarray | None  # (Nv,) bool, square meshes only

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_triangles(self):
        return self.triangles.shape[0]

    @property
    def triangle_area(self):
        return 0.25 / (self.n * self.n)

    def grid_vertex_id(self, i, j):
        n = self.n
        if self.periodic:
            return (np.asarray(i) % n) * n + (np.asarray(j) % n)
        return np.asarray(i) * (n + 1) + np.asarray(j)

    def centre_vertex_id(self, sx, sy):
        n = self.n
        base = n * n if self.periodic else (n + 1) * (n + 1)
        return base + np.asarray(sx) * n + np.asarray(sy)

    def quadrature_points(self):
        """(Nt, 3, 2) physical coordinates of the interior 3-point rule."""
        return np.einsum("qa,tac->tqc", QUAD_BARY, self.tri_coords)


def crossed_mesh(n, periodic):
    if n < 2 or n != int(n):
        raise FrameworkError("mesh subdivision n must be an integer >= 2")
    n = int(n)
    h = 1.0 / n
    if periodic:
        gi, gj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        grid_coords = np.column_stack([gi.ravel() * h, gj.ravel() * h])
    else:
        gi, gj = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="ij")
        grid_coords = np.column_stack([gi.ravel() * h, gj.ravel() * h])
    si, sj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    centre_coords = np.column_stack([(si.ravel() + 0.5) * h, (sj.ravel() + 0.5) * h])
    vertices = np.vstack([grid_coords, centre_coords])

    mesh = CrossedMesh(
        n=n,
        periodic=periodic,
        vertices=vertices,
        triangles=np.empty((4 * n * n, 3), dtype=np.int64),
        tri_coords=np.empty((4 * n * n, 3, 2)),
        boundary=None,
    )

    sx = si.ravel()
    sy = sj.ravel()
    v00 = mesh.grid_vertex_id(sx, sy)
    v10 = mesh.grid_vertex_id(sx + 1, sy)
    v11 = mesh.grid_vertex_id(sx + 1, sy + 1)
    v01 = mesh.grid_vertex_id(sx, sy + 1)
    cc = mesh.centre_vertex_id(sx, sy)

    tris = np.empty((n * n, 4, 3), dtype=np.int64)
    tris[:, 0] = np.column_stack([v00, v10, cc])  # south
    tris[:, 1] = np.column_stack([v10, v11, cc])  # east
    tris[:, 2] = np.column_stack([v11, v01, cc])  # north
    tris[:, 3] = np.column_stack([v01, v00, cc])  # west
    mesh.triangles = tris.reshape(-1, 3)

    p00 = np.column_stack([sx * h, sy * h])
    p10 = np.column_stack([(sx + 1) * h, sy * h])
    p11 = np.column_stack([(sx + 1) * h, (sy + 1) * h])
    p01 = np.column_stack([sx * h, (sy + 1) * h])
    pc = np.column_stack([(sx + 0.5) * h, (sy + 0.5) * h])
    coords = np.empty((n * n, 4, 3, 2))
    coords[:, 0] = np.stack([p00, p10, pc], axis=1)
    coords[:, 1] = np.stack([p10, p11, pc], axis=1)
    coords[:, 2] = np.stack([p11, p01, pc], axis=1)
    coords[:, 3] = np.stack([p01, p00, pc], axis=1)
    mesh.tri_coords = coords.reshape(-1, 3, 2)

    if not periodic:
        bnd = np.zeros(mesh.n_vertices, dtype=bool)
        gi2, gj2 = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="ij")
        edge = (gi2 == 0) | (gi2 == n) | (gj2 == 0) | (gj2 == n)
        bnd[: (n + 1) * (n + 1)] = edge.ravel()
        mesh.boundary = bnd
    return mesh


def locate_crossed(n, points):
    """Locate points of the unit square in a crossed mesh.

    Returns (tri_index, bary) with bary (m, 3) barycentric weights in the
    corner order used by ``crossed_mesh``.  Points are clipped to [0, 1].
    """
    p = np.clip(np.atleast_2d(np.asarray(points, dtype=float)), 0.0, 1.0)
    x = p[:, 0] * n
    y = p[:, 1] * n
    sx = np.minimum(x.astype(np.int64), n - 1)
    sy = np.minimum(y.astype(np.int64), n - 1)
    u = x - sx
    v = y - sy

    south = v <= np.minimum(u, 1.0 - u)
    east = (~south) & (u >= np.maximum(v, 1.0 - v))
    north = (~south) & (~east) & (v >= np.maximum(u, 1.0 - u))
    t = np.where(south, 0, np.where(east, 1, np.where(north, 2, 3)))

    w = np.empty((len(p), 3))
    w[south] = np.column_stack(
        [1.0 - u[south] - v[south], u[south] - v[south], 2.0 * v[south]]
    )
    w[east] = np.column_stack(
        [u[east] - v[east], v[east] - (1.0 - u[east]), 2.0 * (1.0 - u[east])]
    )
    w[north] = np.column_stack(
        [u[north] + v[north] - 1.0, v[north] - u[north], 2.0 * (1.0 - v[north])]
    )
    west = ~(south | east | north)
    w[west] = np.column_stack(
        [v[west] - u[west], 1.0 - v[west] - u[west], 2.0 * u[west]]
    )
    w = np.clip(w, 0.0, None)
    w /= w.sum(axis=1)[:, None]
    tri = (sx * n + sy) * 4 + t
    return tri, w


def interpolate_p1(mesh, nodal, points, wrap=False):
    """Evaluate a P1 field given by nodal values (Nv,) or (Nv, k) at points."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if wrap:
        pts = wrap_unit(pts)
    tri, w = locate_crossed(mesh.n, pts)
    ids = mesh.triangles[tri]  # (m, 3)
    vals = np.asarray(nodal)
    if vals.ndim == 1:
        return np.einsum("mq,mq->m", w, vals[ids])
    return np.einsum("mq,mqk->mk", w, vals[ids])


# -- framework-aligned cell mesh ---------------------------------------------


@dataclass
class LinkPath:
    """Chain of mesh vertices along one link.

    Traversal is canonical: tau is flipped to be lexicographically positive,
    so a link stored as (a, b, s) and its reversal (b, a, -s) produce the
    identical path.  end_nodes gives the graph node ids at the first and last
    vertex after canonicalisation.
    """

    link: int
    vertex_ids: np.ndarray    # (m+1,) reduced periodic vertex ids
    edge_length: float        # uniform element length along this link
    tau: np.ndarray
    nu: np.ndarray
    end_nodes: tuple

    @property
    def n_edges(self):
        return len(self.vertex_ids) - 1


@dataclass
class CellMesh:
    """Periodic crossed mesh of the unit cell with the framework traced
    along mesh edges."""

    graph: FrameworkGraph
    mesh: CrossedMesh
    paths: list[LinkPath]

    @property
    def n(self):
        return self.mesh.n


def _scaled_vertex_id(mesh, pt):
    """Reduced vertex id of an integer point on the 2n lattice (parity decides
    grid vs centre vertex)."""
    n = mesh.n
    x = int(pt[0]) % (2 * n)
    y = int(pt[1]) % (2 * n)
    if x % 2 == 0 and y % 2 == 0:
        return int(mesh.grid_vertex_id(x // 2, y // 2))
    if x % 2 == 1 and y % 2 == 1:
        return int(mesh.centre_vertex_id((x - 1) // 2, (y - 1) // 2))
    raise FrameworkError("point is an edge midpoint, not a mesh vertex")


def _trace_link(graph, mesh, li):
    n = mesh.n
    s2 = 2 * n
    a = graph.seg_start[li] * s2
    b = graph.seg_end[li] * s2
    ai = np.round(a)
    bi = np.round(b)
    if np.max(np.abs(a - ai)) > 1e-9 * s2 or np.max(np.abs(b - bi)) > 1e-9 * s2:
        raise FrameworkError(
            f"link {li}: endpoints do not lie on the n-grid or subsquare centres "
            f"(n = {n})"
        )
    ai = ai.astype(np.int64)
    bi = bi.astype(np.int64)
    d = bi - ai
    if (ai[0] % 2) != (ai[1] % 2) or (bi[0] % 2) != (bi[1] % 2):
        raise FrameworkError(f"link {li}: endpoint is an edge midpoint of the mesh")
    if d[0] == 0 or d[1] == 0:
        # axis-parallel: runs along grid edges, both endpoints on grid lines
        if ai[0] % 2 or ai[1] % 2:
            raise FrameworkError(
                f"link {li}: axis link must lie on a grid line (offset multiple of 1/n)"
            )
        step = np.sign(d) * 2
        m = int(max(abs(d)) // 2)
    elif abs(d[0]) == abs(d[1]):
        step = np.sign(d)
        m = int(abs(d[0]))
    else:
        raise FrameworkError(
            f"link {li}: direction must be 0, 90 or +-45 degrees for mesh alignment"
        )
    pts = ai[None, :] + np.arange(m + 1)[:, None] * step[None, :]
    ids = np.array([_scaled_vertex_id(mesh, p) for p in pts], dtype=np.int64)
    edge_len = (1.0 / n) if (d[0] == 0 or d[1] == 0) else math.sqrt(2.0) / (2 * n)
    tau = graph.taus[li].copy()
    nu = graph.nus[li].copy()
    ends = (graph.links[li].a, graph.links[li].b)
    if tau[0] < -1e-12 or (abs(tau[0]) <= 1e-12 and tau[1] < 0.0):
        ids = ids[::-1].copy()
        tau = -tau
        nu = -nu
        ends = (ends[1], ends[0])
    return LinkPath(
        link=li,
        vertex_ids=ids,
        edge_length=edge_len,
        tau=tau,
        nu=nu,
        end_nodes=ends,
    )


def build_cell_mesh(graph, n):
    """Periodic crossed mesh with every link traced along mesh edges.

    n must be even so that half-integer framework coordinates land on the
    grid.
    """
    if n % 2 != 0:
        raise FrameworkError("cell mesh subdivision n must be even")
    mesh = crossed_mesh(n, periodic=True)
    paths = [_trace_link(graph, mesh, li) for li in range(len(graph.links))]
    seen = {}
    for p in paths:
        interior = p.vertex_ids[1:-1]
        if len(set(interior.tolist())) != len(interior):
            raise FrameworkError(
                f"link {p.link} revisits a mesh vertex; it overlaps itself"
            )
        for v in interior:
            if v in seen:
                raise FrameworkError(
                    f"links {seen[v]} and {p.link} share interior mesh vertex {v}"
                )
            seen[v] = p.link
    return CellMesh(graph=graph, mesh=mesh, paths=paths)
