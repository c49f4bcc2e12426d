import math

import numpy as np
import pytest

from framehom.cell_homog import MacroTensor, compute_ahom, ellipticity
from framehom.geometry import FrameworkError, FrameworkGraph, Link, preset
from framehom.materials import ElasticTensor, from_voigt, k1, k1_isotropic, voigt_rotation

SQ2 = math.sqrt(2.0)
MAT = ElasticTensor(lame=1.0, shear=1.0)


def brute_force_ahom(graph, a1, points_per_link=100):
    """Minimise the network energy over piecewise-linear tangential fields.

    Unknowns: one 2D displacement per node plus tangential values at
    points_per_link - 1 interior points per link; least squares on the
    per-segment stretch residuals.
    """
    taus = graph.taus
    lengths = graph.lengths
    n_nodes = len(graph.nodes)
    m = points_per_link
    n_dofs = 2 * n_nodes + (m - 1) * len(graph.links)

    basis = [from_voigt(v) for v in np.eye(3)]
    rows = []
    consts = []
    for li, link in enumerate(graph.links):
        tau = taus[li]
        ell = lengths[li]
        ds = ell / m
        scale = math.sqrt(k1(a1, tau) * ds / graph.total_length)
        first = 2 * n_nodes + (m - 1) * li
        for j in range(m):
            row = np.zeros(n_dofs)
            for sign, idx in ((-1.0, j - 1), (1.0, j)):
                if idx == -1:
                    row[2 * link.a : 2 * link.a + 2] += sign * tau / ds
                elif idx == m - 1:
                    row[2 * link.b : 2 * link.b + 2] += sign * tau / ds
                else:
                    row[first + idx] += sign / ds
            rows.append(scale * row)
            consts.append([scale * float(tau @ xi @ tau) for xi in basis])
    a = np.array(rows)
    d = np.array(consts)
    sol, *_ = np.linalg.lstsq(a, -d, rcond=None)
    res = a @ sol + d
    return res.T @ res


def test_grid_closed_form():
    k = k1_isotropic(1.0, 1.0)
    ahom = compute_ahom(preset("grid"), MAT)
    expect = np.diag([k / 2.0, k / 2.0, 0.0])
    assert np.max(np.abs(ahom.voigt - expect)) < 1e-10


def test_grid_brute_force_oracle():
    ahom = compute_ahom(preset("grid"), MAT)
    bf = brute_force_ahom(preset("grid"), MAT)
    assert np.max(np.abs(ahom.voigt - bf)) < 1e-6


def test_grid_diag_closed_form():
    # corrector vanishes by symmetry: value at the affine field, per link family
    k = k1_isotropic(1.0, 1.0)
    ltot = 2.0 + 2.0 * SQ2
    expect = (k / ltot) * np.array(
        [
            [1.0 + SQ2 / 2.0, SQ2 / 2.0, 0.0],
            [SQ2 / 2.0, 1.0 + SQ2 / 2.0, 0.0],
            [0.0, 0.0, SQ2],
        ]
    )
    ahom = compute_ahom(preset("grid-diag"), MAT)
    assert np.max(np.abs(ahom.voigt - expect)) < 1e-12


def test_grid_diag_brute_force_oracle():
    ahom = compute_ahom(preset("grid-diag"), MAT)
    bf = brute_force_ahom(preset("grid-diag"), MAT)
    assert np.max(np.abs(ahom.voigt - bf)) < 1e-6


def asymmetric_graph():
    # grid-diag with one half-diagonal removed: no mechanism (the remaining
    # diagonals still span both directions) but the corrector is nonzero
    return FrameworkGraph(
        np.array([[0.5, 0.5], [0.0, 0.0]]),
        [
            Link(0, 0, (1, 0)),
            Link(0, 0, (0, 1)),
            Link(1, 0, (0, 0)),
            Link(0, 1, (1, 1)),
            Link(0, 1, (1, 0)),
        ],
    )


def test_asymmetric_brute_force_oracle():
    g = asymmetric_graph()
    ahom = compute_ahom(g, MAT)
    bf = brute_force_ahom(g, MAT)
    assert np.max(np.abs(ahom.voigt - bf)) < 1e-6
    # the corrector actually lowers the energy below the affine value
    taus, lengths = g.taus, g.lengths
    kw = np.array([k1(MAT, t) for t in taus]) * lengths / g.total_length
    xi = from_voigt(np.array([1.0, 0.0, 0.0]))
    affine = float(np.sum(kw * np.array([float(t @ xi @ t) for t in taus]) ** 2))
    assert ahom.voigt[0, 0] < affine - 1e-6


def test_upper_bound_at_affine_field():
    for g in (preset("grid"), preset("grid-diag"), asymmetric_graph()):
        taus, lengths = g.taus, g.lengths
        kw = np.array([k1(MAT, t) for t in taus]) * lengths / g.total_length
        ahom = compute_ahom(g, MAT).voigt
        rng = np.random.default_rng(2)
        for _ in range(8):
            v = rng.standard_normal(3)
            xi = from_voigt(v)
            affine = float(
                np.sum(kw * np.array([float(t @ xi @ t) for t in taus]) ** 2)
            )
            assert float(v @ ahom @ v) <= affine + 1e-12


def test_symmetry_properties_grid_diag():
    ahom = compute_ahom(preset("grid-diag"), MAT).voigt
    assert abs(ahom[0, 0] - ahom[1, 1]) < 1e-10
    assert abs(ahom[0, 2]) < 1e-10 and abs(ahom[1, 2]) < 1e-10
    k = k1_isotropic(1.0, 1.0)
    assert ahom[2, 2] > 1e-3 * k
    # pi/2 rotation invariance in Voigt coordinates
    r = np.array([[0.0, -1.0], [1.0, 0.0]])
    q = voigt_rotation(r)
    assert np.max(np.abs(q @ ahom @ q.T - ahom)) < 1e-10


def test_relabelling_and_reversal_invariance():
    g = asymmetric_graph()
    base = compute_ahom(g, MAT).voigt
    # reverse a link
    links = list(g.links)
    l = links[2]
    links[2] = Link(l.b, l.a, (-l.shift[0], -l.shift[1]))
    g2 = FrameworkGraph(g.nodes.copy(), links)
    assert np.max(np.abs(compute_ahom(g2, MAT).voigt - base)) < 1e-12
    # swap node labels
    perm_nodes = g.nodes[::-1].copy()
    relabel = {0: 1, 1: 0}
    links3 = [Link(relabel[l.a], relabel[l.b], l.shift) for l in g.links]
    g3 = FrameworkGraph(perm_nodes, links3)
    assert np.max(np.abs(compute_ahom(g3, MAT).voigt - base)) < 1e-12


def test_material_scaling_homogeneity():
    g = preset("grid-diag")
    base = compute_ahom(g, MAT).voigt
    scaled = compute_ahom(g, ElasticTensor(lame=3.0, shear=3.0)).voigt
    assert np.max(np.abs(scaled - 3.0 * base)) < 1e-12 * np.max(np.abs(scaled))


def test_zero_strain_energy():
    ahom = compute_ahom(preset("grid-diag"), MAT).voigt
    assert float(np.zeros(3) @ ahom @ np.zeros(3)) == 0.0


def test_ellipticity_values():
    assert abs(ellipticity(np.eye(3)) - 1.0) < 1e-15
    grid = compute_ahom(preset("grid"), MAT)
    assert abs(grid.ellipticity) < 1e-12
    assert not grid.elliptic
    gd = compute_ahom(preset("grid-diag"), MAT)
    k = k1_isotropic(1.0, 1.0)
    assert abs(gd.ellipticity - k / (2.0 + 2.0 * SQ2)) < 1e-12
    assert gd.elliptic


def test_mechanism_raises():
    # two nodes on one horizontal line, each with its own vertical loop:
    # their relative vertical displacement is a zero-energy mechanism
    g = FrameworkGraph(
        np.array([[0.25, 0.5], [0.75, 0.5]]),
        [
            Link(0, 1, (0, 0)),
            Link(1, 0, (1, 0)),
            Link(0, 0, (0, 1)),
            Link(1, 1, (0, 1)),
        ],
    )
    with pytest.raises(FrameworkError, match="mechanism"):
        compute_ahom(g, MAT)


def test_macro_tensor_wrapper():
    m = MacroTensor(voigt=np.eye(3))
    assert m.elliptic and abs(m.ellipticity - 1.0) < 1e-15
