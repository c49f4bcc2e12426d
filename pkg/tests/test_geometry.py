import math

import numpy as np
import pytest

from framehom.geometry import (
    CellMesh,
    FrameworkError,
    FrameworkGraph,
    Link,
    RodRegion,
    build_cell_mesh,
    crossed_mesh,
    format_framework,
    interpolate_p1,
    locate_crossed,
    parse_framework,
    preset,
)

SQ2 = math.sqrt(2.0)


# -- frameworks ---------------------------------------------------------------


def test_preset_grid_total_length():
    g = preset("grid")
    assert abs(g.total_length - 2.0) < 1e-12
    assert g.quarter_turn_symmetric


def test_preset_grid_diag_total_length():
    g = preset("grid-diag")
    assert abs(g.total_length - (2.0 + 2.0 * SQ2)) < 1e-12
    assert g.quarter_turn_symmetric


def test_single_diagonal_not_quarter_turn_symmetric():
    # grid plus only one of the two diagonals
    g = FrameworkGraph(
        np.array([[0.5, 0.5], [0.0, 0.0]]),
        [
            Link(0, 0, (1, 0)),
            Link(0, 0, (0, 1)),
            Link(1, 0, (0, 0)),
            Link(0, 1, (1, 1)),
        ],
    )
    assert not g.quarter_turn_symmetric


def test_file_roundtrip():
    g = preset("grid-diag")
    text = format_framework(g)
    g2 = parse_framework(text)
    assert np.allclose(g.nodes, g2.nodes)
    assert [(l.a, l.b, l.shift) for l in g.links] == [
        (l.a, l.b, l.shift) for l in g2.links
    ]


def test_parse_rejects_bad_header_and_records():
    with pytest.raises(FrameworkError):
        parse_framework("node 0 0.5 0.5\n")
    with pytest.raises(FrameworkError):
        parse_framework("framework v1\nnode 0 0.5\n")
    with pytest.raises(FrameworkError):
        parse_framework("framework v1\nnode 0 0.5 0.5\nlink 0 1 0 0\n")


def test_comments_and_blank_lines_ignored():
    text = "# a comment\nframework v1\n\nnode 0 0.5 0.5  # the node\nlink 0 0 1 0\nlink 0 0 0 1\n"
    g = parse_framework(text)
    assert len(g.links) == 2


def test_node_out_of_cell_rejected():
    with pytest.raises(FrameworkError, match="out of cell"):
        FrameworkGraph(np.array([[1.25, 0.5]]), [Link(0, 0, (1, 0))])


def test_zero_length_link_rejected():
    with pytest.raises(FrameworkError, match="zero-length"):
        FrameworkGraph(np.array([[0.5, 0.5]]), [Link(0, 0, (0, 0))])


def test_boundary_link_rejected():
    with pytest.raises(FrameworkError, match="boundary"):
        FrameworkGraph(np.array([[0.5, 0.0]]), [Link(0, 0, (1, 0))])


def test_overlapping_links_rejected():
    nodes = np.array([[0.25, 0.5], [0.75, 0.5]])
    with pytest.raises(FrameworkError, match="overlap"):
        FrameworkGraph(
            nodes, [Link(0, 1, (0, 0)), Link(0, 1, (0, 0)), Link(1, 0, (1, 0))]
        )


def test_off_node_crossing_rejected():
    # two full diagonals crossing at the centre without a node there
    nodes = np.array([[0.0, 0.0], [0.0, 0.999999]])  # dummy second node unused
    with pytest.raises(FrameworkError):
        FrameworkGraph(
            np.array([[0.0, 0.0]]),
            [Link(0, 0, (1, 1)), Link(0, 0, (1, -1))],
        )


def test_node_inside_link_interior_rejected():
    nodes = np.array([[0.25, 0.5], [0.5, 0.5]])
    with pytest.raises(FrameworkError, match="interior"):
        FrameworkGraph(nodes, [Link(0, 0, (1, 0)), Link(1, 1, (0, 1))])


# -- rod regions --------------------------------------------------------------


def test_classify_is_periodic():
    region = RodRegion(preset("grid-diag"), 0.08)
    rng = np.random.default_rng(7)
    pts = rng.uniform(0, 1, size=(256, 2))
    base = region.classify(pts)
    for shift in ([1, 0], [0, -2], [3, 5]):
        assert np.array_equal(base, region.classify(pts + np.array(shift)))


def test_classify_grid_matches_strip_formula():
    h = 0.07
    region = RodRegion(preset("grid"), h)
    rng = np.random.default_rng(8)
    pts = rng.uniform(0, 1, size=(4096, 2))
    expect = (np.abs(pts[:, 1] - 0.5) < h) | (np.abs(pts[:, 0] - 0.5) < h)
    assert np.array_equal(region.classify(pts), expect)


def test_stiff_area_grid_closed_form():
    h = 0.05
    region = RodRegion(preset("grid"), h)
    expect = 2 * (2 * h) - (2 * h) ** 2
    assert abs(region.stiff_area - expect) < 1e-9
    assert abs(expect - 0.19) < 1e-15


def test_stiff_area_matches_point_classification():
    # deterministic midpoint sampling, > 1e6 points
    region = RodRegion(preset("grid-diag"), 0.05)
    m = 1200
    xs = (np.arange(m) + 0.5) / m
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    frac = float(np.mean(region.classify(pts)))
    assert abs(frac - region.stiff_area) <= 1e-3


def test_stiff_area_thin_rod_limit_and_monotone():
    g = preset("grid-diag")
    r1 = RodRegion(g, 1e-3)
    ratio = r1.stiff_area / (2 * 1e-3 * g.total_length)
    assert abs(ratio - 1.0) < 0.05
    areas = [RodRegion(g, h).stiff_area for h in (0.01, 0.03, 0.05, 0.08)]
    assert all(a < b for a, b in zip(areas, areas[1:]))


def test_rod_half_width_bound_enforced():
    with pytest.raises(FrameworkError, match="half-width"):
        RodRegion(preset("grid-diag"), 0.3)
    RodRegion(preset("grid-diag"), 0.2)  # below the corner-to-axis bound


# -- meshes -------------------------------------------------------------------


def test_crossed_mesh_counts_and_areas():
    mesh = crossed_mesh(4, periodic=True)
    assert mesh.n_vertices == 2 * 16
    assert mesh.n_triangles == 64
    assert abs(mesh.n_triangles * mesh.triangle_area - 1.0) < 1e-14
    sq = crossed_mesh(4, periodic=False)
    assert sq.n_vertices == 25 + 16
    assert sq.boundary.sum() == 16


def test_triangles_positively_oriented():
    for periodic in (True, False):
        mesh = crossed_mesh(3, periodic=periodic)
        a = mesh.tri_coords
        e1 = a[:, 1] - a[:, 0]
        e2 = a[:, 2] - a[:, 0]
        cross = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        assert np.all(cross > 0)


def test_cell_mesh_path_shapes_grid_diag():
    cm = build_cell_mesh(preset("grid-diag"), 4)
    # axis links: 4 edges of length 1/4; half-diagonals: 4 edges of sqrt2/8
    counts = sorted(p.n_edges for p in cm.paths)
    assert counts == [4, 4, 4, 4, 4, 4]
    lens = sorted(set(round(p.edge_length, 12) for p in cm.paths))
    assert lens == [round(SQ2 / 8, 12), round(0.25, 12)]
    # axis links are loops: first and last vertex coincide
    for p in cm.paths[:2]:
        assert p.vertex_ids[0] == p.vertex_ids[-1]
    # total traced length matches the framework
    total = sum(p.n_edges * p.edge_length for p in cm.paths)
    assert abs(total - cm.graph.total_length) < 1e-12


def test_cell_mesh_requires_even_n():
    with pytest.raises(FrameworkError, match="even"):
        build_cell_mesh(preset("grid"), 5)


def test_misaligned_links_rejected():
    # slope 1/2 link cannot follow mesh edges
    g = FrameworkGraph(
        np.array([[0.25, 0.25], [0.75, 0.5]]),
        [Link(0, 1, (0, 0)), Link(1, 0, (1, 0)), Link(0, 0, (0, 1))],
    )
    with pytest.raises(FrameworkError, match="45"):
        build_cell_mesh(g, 4)
    # axis link off the grid lines
    g2 = FrameworkGraph(
        np.array([[0.5, 0.125]]), [Link(0, 0, (1, 0)), Link(0, 0, (0, 1))]
    )
    with pytest.raises(FrameworkError):
        build_cell_mesh(g2, 4)


def test_locate_and_interpolate_linear_exact():
    mesh = crossed_mesh(6, periodic=False)
    nodal = 2.0 * mesh.vertices[:, 0] - 0.7 * mesh.vertices[:, 1] + 0.3
    rng = np.random.default_rng(5)
    pts = rng.uniform(0, 1, size=(300, 2))
    vals = interpolate_p1(mesh, nodal, pts)
    expect = 2.0 * pts[:, 0] - 0.7 * pts[:, 1] + 0.3
    assert np.max(np.abs(vals - expect)) < 1e-12


def test_locate_barycentric_reconstructs_points():
    n = 5
    mesh = crossed_mesh(n, periodic=False)
    rng = np.random.default_rng(9)
    pts = rng.uniform(0, 1, size=(200, 2))
    tri, w = locate_crossed(n, pts)
    rec = np.einsum("mq,mqc->mc", w, mesh.tri_coords[tri])
    assert np.max(np.abs(rec - pts)) < 1e-12


def test_quadrature_points_inside_triangles():
    mesh = crossed_mesh(3, periodic=True)
    q = mesh.quadrature_points()
    tri, w = locate_crossed(3, q.reshape(-1, 2) % 1.0)
    assert np.all(w > 0.05)  # strictly interior
