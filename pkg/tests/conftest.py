"""Session fixtures shared by the spectral and acceptance suites.

The grid-diag micro spectra at n = 32 are the most expensive shared
inputs; each is computed once with a buffer of trailing modes so
truncations up to 20 always end on a complete eigenvalue cluster.
theta = 0.5 serves the cell-side suites, theta = 0.4 the fine-scale
convergence experiments.
"""

import numpy as np
import pytest

from framehom.cell_homog import compute_ahom
from framehom.geometry import build_cell_mesh, crossed_mesh, preset
from framehom.limit_spectrum import (
    BetaFunction,
    assemble_bands,
    find_gammas,
    macro_spectrum,
    solve_homogenised,
)
from framehom.materials import ElasticTensor
from framehom.micro_spectral import assemble_micro, build_discretisation, solve_micro

A0_DEFAULT = ElasticTensor(0.0, 0.1)
A1_DEFAULT = ElasticTensor(1.0, 1.0)
THETA_DEFAULT = 0.5
THETA_DIRECT = 0.4


def default_source(points):
    """f = (sin pi x1 sin pi x2, 0) at the given points."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    return np.stack(
        [
            np.sin(np.pi * points[:, 0]) * np.sin(np.pi * points[:, 1]),
            np.zeros(len(points)),
        ],
        axis=1,
    )


@pytest.fixture(scope="session")
def grid_diag_graph():
    return preset("grid-diag")


@pytest.fixture(scope="session")
def grid_graph():
    return preset("grid")


@pytest.fixture(scope="session")
def disc32(grid_diag_graph):
    cell = build_cell_mesh(grid_diag_graph, 32)
    return build_discretisation(cell)


@pytest.fixture(scope="session")
def micro32(disc32):
    system = assemble_micro(disc32, A0_DEFAULT, A1_DEFAULT, THETA_DEFAULT)
    spectrum = solve_micro(disc32, system, 26)
    return disc32, system, spectrum


@pytest.fixture(scope="session")
def micro32_04(disc32):
    system = assemble_micro(disc32, A0_DEFAULT, A1_DEFAULT, THETA_DIRECT)
    spectrum = solve_micro(disc32, system, 26)
    return disc32, system, spectrum


@pytest.fixture(scope="session")
def ahom_grid_diag(grid_diag_graph):
    return compute_ahom(grid_diag_graph, A1_DEFAULT)


@pytest.fixture(scope="session")
def macro_mesh32():
    return crossed_mesh(32, periodic=False)


@pytest.fixture(scope="session")
def hom04(ahom_grid_diag, macro_mesh32, micro32_04):
    disc, _, spectrum = micro32_04
    f = default_source(macro_mesh32.vertices).ravel()
    return solve_homogenised(
        ahom_grid_diag, macro_mesh32, f, spectrum, 12, disc=disc
    )


@pytest.fixture(scope="session")
def bands04(ahom_grid_diag, macro_mesh32, micro32_04):
    _, _, spectrum = micro32_04
    bf = BetaFunction(spectrum, n_modes=20, symmetric=True)
    gammas = find_gammas(bf)
    lambdas = macro_spectrum(ahom_grid_diag, macro_mesh32, 12)
    return assemble_bands(bf, gammas, lambdas)


@pytest.fixture(scope="session")
def bands05(ahom_grid_diag, macro_mesh32, micro32):
    """Band structure of the default configuration (theta = 0.5)."""
    _, _, spectrum = micro32
    bf = BetaFunction(spectrum, n_modes=20, symmetric=True)
    gammas = find_gammas(bf)
    lambdas = macro_spectrum(ahom_grid_diag, macro_mesh32, 12)
    return bf, assemble_bands(bf, gammas, lambdas)


CLI_SMALL_CONFIG = """\
framework=grid-diag
n=16
modes=8
macro_k=4
macro_n=8
eps=1/2
ladder=1/2
nfine=12
direct_modes=4
"""

CLI_COMMANDS = ("ahom", "micro", "bands", "solve", "direct", "converge",
                "report")

CLI_ARTIFACTS = ("ahom.json", "micro.json", "bands.json", "bands.svg",
                 "solve.json", "direct.json", "converge.csv", "report.json")


@pytest.fixture(scope="session")
def cli_small_run(tmp_path_factory):
    """Every command run twice on one small config; returns the out dir
    and the first-run bytes of every artifact."""
    from framehom.cli import main

    out = tmp_path_factory.mktemp("cli")
    cfg = out / "run.cfg"
    cfg.write_text(CLI_SMALL_CONFIG)
    args = ["--config", str(cfg), "--out", str(out)]
    for command in CLI_COMMANDS:
        assert main([command, *args]) == 0
    first = {name: (out / name).read_bytes() for name in CLI_ARTIFACTS}
    for command in CLI_COMMANDS:
        assert main([command, *args]) == 0
    return out, first
