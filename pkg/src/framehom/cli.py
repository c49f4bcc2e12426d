"""The ``homog`` command.

Configuration is a flat key=value file with CLI flags overriding; every
artifact (JSON, CSV, SVG) is emitted deterministically so reruns on the
same config are byte-identical.  Exit codes: 0 success, 2 config error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .cell_homog import compute_ahom
from .direct_solver import (
    auto_n_fine,
    build,
    hausdorff_residual,
    solve_source,
    solve_spectrum,
    two_scale_distance,
)
from .geometry import (
    FrameworkError,
    PRESET_NAMES,
    build_cell_mesh,
    crossed_mesh,
    load_framework,
    preset,
)
from .limit_spectrum import (
    BetaFunction,
    NotElliptic,
    assemble_bands,
    find_gammas,
    macro_spectrum,
    solve_homogenised,
)
from .materials import ElasticTensor, MaterialError
from .micro_spectral import assemble_micro, build_discretisation, solve_micro
from .numerics import NumericsError

COMMANDS = ("ahom", "micro", "bands", "solve", "direct", "converge", "report")

# cell-side commands default to theta = 0.5, the fine-scale experiments
# to the desk-scale 0.4
THETA_CELL_DEFAULT = 0.5
THETA_DIRECT_DEFAULT = 0.4

# trailing eigenvalue buffer so truncations end on complete clusters
MODE_BUFFER = 6


class ConfigError(ValueError):
    pass


@dataclasses.dataclass
class RunConfig:
    framework: str = "grid-diag"
    theta_cell: float | None = None
    theta_direct: float | None = None
    lame0: float = 0.0
    shear0: float = 0.1
    lame1: float = 1.0
    shear1: float = 1.0
    n: int = 32
    modes: int = 20
    macro_k: int = 12
    macro_n: int = 32
    eps: str = "1/8"
    ladder: str = "1/2,1/4,1/8"
    nfine: str = "auto"
    direct_modes: int = 6
    boundary: str = "stiff"
    macro_spectrum: str = ""
    out: str = "."


_INT_FIELDS = {"n", "modes", "macro_k", "macro_n", "direct_modes"}
_FLOAT_FIELDS = {"theta_cell", "theta_direct", "lame0", "shear0", "lame1",
                 "shear1"}
_CONFIG_FIELDS = {f.name for f in dataclasses.fields(RunConfig)}


def parse_fraction(text) -> float:
    """Float value of '1/8'-style fractions or plain decimals."""
    s = str(text).strip()
    try:
        if "/" in s:
            num, den = s.split("/")
            return float(num) / float(den)
        return float(s)
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"cannot parse fraction {text!r}") from exc


def _set_field(cfg: RunConfig, key: str, value: str):
    if key == "theta":
        _set_field(cfg, "theta_cell", value)
        _set_field(cfg, "theta_direct", value)
        return
    if key not in _CONFIG_FIELDS:
        raise ConfigError(f"unknown config field {key!r}")
    try:
        if key in _INT_FIELDS:
            setattr(cfg, key, int(value))
        elif key in _FLOAT_FIELDS:
            setattr(cfg, key, float(value))
        else:
            setattr(cfg, key, str(value))
    except ValueError as exc:
        raise ConfigError(f"invalid value {value!r} for field {key!r}") from exc


def load_config(path: str | None, overrides: dict) -> RunConfig:
    cfg = RunConfig()
    if path:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {path}")
        for lineno, raw in enumerate(p.read_text().splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            key, _, value = line.partition("=")
            _set_field(cfg, key.strip(), value.strip())
    for key, value in overrides.items():
        if value is not None:
            _set_field(cfg, key, value)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig):
    for key in ("theta_cell", "theta_direct"):
        value = getattr(cfg, key)
        if value is not None and not (0.0 < value):
            raise ConfigError(f"field {key!r} must be positive")
    for key in ("n", "modes", "macro_k", "macro_n", "direct_modes"):
        if getattr(cfg, key) < 1:
            raise ConfigError(f"field {key!r} must be at least 1")
    if cfg.n % 2:
        raise ConfigError("field 'n' must be even")
    if cfg.boundary not in ("plain", "stiff"):
        raise ConfigError("field 'boundary' must be 'plain' or 'stiff'")
    if cfg.nfine != "auto":
        try:
            int(cfg.nfine)
        except ValueError:
            raise ConfigError("field 'nfine' must be 'auto' or an integer")


def theta_cell(cfg: RunConfig) -> float:
    return THETA_CELL_DEFAULT if cfg.theta_cell is None else cfg.theta_cell


def theta_direct(cfg: RunConfig) -> float:
    return THETA_DIRECT_DEFAULT if cfg.theta_direct is None else cfg.theta_direct


def config_echo(cfg: RunConfig) -> dict:
    """Resolved config; feeding it back reproduces the run exactly."""
    echo = dataclasses.asdict(cfg)
    echo["theta_cell"] = theta_cell(cfg)
    echo["theta_direct"] = theta_direct(cfg)
    return echo


# ----------------------------------------------------------------- pieces

def _graph(cfg: RunConfig):
    if cfg.framework in PRESET_NAMES:
        return preset(cfg.framework)
    path = Path(cfg.framework)
    if not path.is_file():
        raise ConfigError(
            f"framework {cfg.framework!r} is neither a preset "
            f"{PRESET_NAMES} nor a file"
        )
    return load_framework(path)


def _materials(cfg: RunConfig):
    return (ElasticTensor(cfg.lame0, cfg.shear0),
            ElasticTensor(cfg.lame1, cfg.shear1))


def _ladder(cfg: RunConfig) -> list[str]:
    rungs = [part.strip() for part in cfg.ladder.split(",") if part.strip()]
    if not rungs:
        raise ConfigError("field 'ladder' is empty")
    return rungs


def _n_fine(cfg: RunConfig, eps: float, theta: float) -> int:
    if cfg.nfine == "auto":
        return auto_n_fine(eps, theta)
    return int(cfg.nfine)


def _micro(cfg: RunConfig, theta: float):
    graph = _graph(cfg)
    a0, a1 = _materials(cfg)
    cell = build_cell_mesh(graph, cfg.n)
    disc = build_discretisation(cell)
    system = assemble_micro(disc, a0, a1, theta)
    spectrum = solve_micro(disc, system, cfg.modes + MODE_BUFFER)
    return graph, disc, spectrum


def _macro_lambdas(cfg: RunConfig, ahom) -> np.ndarray:
    if cfg.macro_spectrum:
        path = Path(cfg.macro_spectrum)
        if not path.is_file():
            raise ConfigError(f"macro spectrum file not found: {cfg.macro_spectrum}")
        values = [parse_fraction(line) for line in path.read_text().split()]
        if not values:
            raise ConfigError(f"macro spectrum file {cfg.macro_spectrum} is empty")
        return np.sort(np.asarray(values, dtype=float))
    mesh = crossed_mesh(cfg.macro_n, periodic=False)
    return macro_spectrum(ahom, mesh, cfg.macro_k)


def _limit(cfg: RunConfig, theta: float):
    """(JSON payload, BandStructure) for the limit spectrum."""
    _, _, spectrum = _micro(cfg, theta)
    bf = BetaFunction(spectrum, n_modes=cfg.modes, symmetric=True)
    gammas = find_gammas(bf)
    _, a1 = _materials(cfg)
    ahom = compute_ahom(_graph(cfg), a1)
    lambdas = _macro_lambdas(cfg, ahom)
    bands = assemble_bands(bf, gammas, lambdas)
    payload = {
        "gamma": gammas,
        "delta": bands.deltas,
        "alpha": bands.alphas,
        "bands": bands.bands,
        "gaps": bands.gaps,
        "Lambda": lambdas,
    }
    return payload, bands


def default_source(points: np.ndarray) -> np.ndarray:
    points = np.atleast_2d(np.asarray(points, dtype=float))
    return np.stack(
        [
            np.sin(np.pi * points[:, 0]) * np.sin(np.pi * points[:, 1]),
            np.zeros(len(points)),
        ],
        axis=1,
    )


def _homogenised(cfg: RunConfig, theta: float):
    _, disc, spectrum = _micro(cfg, theta)
    _, a1 = _materials(cfg)
    ahom = compute_ahom(_graph(cfg), a1)
    mesh = crossed_mesh(cfg.macro_n, periodic=False)
    f = default_source(mesh.vertices).ravel()
    n_modes = min(cfg.modes, len(spectrum.omegas))
    return solve_homogenised(ahom, mesh, f, spectrum, n_modes, disc=disc)


def _convergence_rows(cfg: RunConfig) -> list[dict]:
    theta = theta_direct(cfg)
    graph = _graph(cfg)
    a0, a1 = _materials(cfg)
    hom = _homogenised(cfg, theta)
    _, bands = _limit(cfg, theta)
    rows = []
    for rung in _ladder(cfg):
        eps = parse_fraction(rung)
        problem = build(graph, eps, theta, a0, a1,
                        n_fine=_n_fine(cfg, eps, theta),
                        boundary_mode=cfg.boundary)
        solution = solve_source(problem, default_source)
        spectrum = solve_spectrum(problem, cfg.direct_modes)
        r_fwd, r_bwd = hausdorff_residual(spectrum.omegas, bands)
        rows.append({
            "eps": rung,
            "D": two_scale_distance(solution.u, hom, problem),
            "dE": abs(solution.energy - hom.energy),
            "r_fwd": r_fwd,
            "r_bwd": r_bwd,
        })
    return rows


# ----------------------------------------------------------------- output

def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    return obj


def assert_finite_tree(obj, where="artifact"):
    if isinstance(obj, dict):
        for key, value in obj.items():
            assert_finite_tree(value, f"{where}.{key}")
    elif isinstance(obj, (list, tuple)):
        for i, value in enumerate(obj):
            assert_finite_tree(value, f"{where}[{i}]")
    elif isinstance(obj, float):
        if not math.isfinite(obj):
            raise NumericsError(f"non-finite value {obj} at {where}")


def write_json(path: Path, payload) -> None:
    payload = to_jsonable(payload)
    assert_finite_tree(payload, path.name)
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def write_csv(path: Path, rows: list[dict]) -> None:
    assert_finite_tree([[r["D"], r["dE"], r["r_fwd"], r["r_bwd"]]
                        for r in rows], path.name)
    lines = ["eps,D,dE,r_fwd,r_bwd"]
    for r in rows:
        lines.append(",".join([
            str(r["eps"]),
            repr(float(r["D"])),
            repr(float(r["dE"])),
            repr(float(r["r_fwd"])),
            repr(float(r["r_bwd"])),
        ]))
    path.write_text("\n".join(lines) + "\n")


def band_svg(limit: dict) -> str:
    """Pure-text band diagram: shaded bands, hatched gaps, alpha and
    delta tick marks on a horizontal s-axis."""
    points = [0.0]
    for lo, hi in list(limit["bands"]) + list(limit["gaps"]):
        points += [float(lo), float(hi)]
    points += [float(v) for v in limit["alpha"]]
    points += [float(v) for v in limit["delta"]]
    smax = max(points) * 1.05 or 1.0
    width, height, margin = 800.0, 170.0, 45.0
    span = width - 2 * margin

    def sx(s):
        return margin + span * float(s) / smax

    def fmt(x):
        return f"{x:.3f}"

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" '
        f'height="{height:.0f}" viewBox="0 0 {width:.0f} {height:.0f}">',
        "<defs><pattern id=\"hatch\" width=\"6\" height=\"6\" "
        "patternUnits=\"userSpaceOnUse\" patternTransform=\"rotate(45)\">"
        "<line x1=\"0\" y1=\"0\" x2=\"0\" y2=\"6\" stroke=\"#b35f5f\" "
        "stroke-width=\"1.5\"/></pattern></defs>",
        f'<rect x="0" y="0" width="{width:.0f}" height="{height:.0f}" '
        f'fill="white"/>',
        f'<line x1="{fmt(margin)}" y1="120" x2="{fmt(width - margin)}" '
        f'y2="120" stroke="black" stroke-width="1"/>',
    ]
    for lo, hi in limit["gaps"]:
        x0, x1 = sx(lo), sx(hi)
        parts.append(
            f'<rect x="{fmt(x0)}" y="60" width="{fmt(max(x1 - x0, 0.5))}" '
            f'height="40" fill="url(#hatch)" stroke="#b35f5f" '
            f'stroke-width="0.5"/>'
        )
    for lo, hi in limit["bands"]:
        x0, x1 = sx(lo), sx(hi)
        parts.append(
            f'<rect x="{fmt(x0)}" y="60" width="{fmt(max(x1 - x0, 0.5))}" '
            f'height="40" fill="#7aa6d8" stroke="#2d5a8e" '
            f'stroke-width="0.5"/>'
        )
    for value in limit["delta"]:
        x = sx(value)
        parts.append(
            f'<line x1="{fmt(x)}" y1="52" x2="{fmt(x)}" y2="108" '
            f'stroke="#2d5a8e" stroke-width="1.5"/>'
        )
    for value in limit["alpha"]:
        x = sx(value)
        parts.append(
            f'<line x1="{fmt(x)}" y1="108" x2="{fmt(x)}" y2="132" '
            f'stroke="#444444" stroke-width="1" stroke-dasharray="2,2"/>'
        )
    for tick in np.linspace(0.0, smax, 6):
        x = sx(tick)
        parts.append(
            f'<line x1="{fmt(x)}" y1="118" x2="{fmt(x)}" y2="122" '
            f'stroke="black" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{fmt(x)}" y="140" font-size="11" '
            f'text-anchor="middle" font-family="monospace">{tick:.1f}</text>'
        )
    parts.append(
        '<text x="400" y="30" font-size="13" text-anchor="middle" '
        'font-family="monospace">limit spectrum: bands (solid), gaps '
        '(hatched), delta poles, alpha ticks</text>'
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


# ---------------------------------------------------------------- commands

def cmd_ahom(cfg: RunConfig, out: Path) -> None:
    _, a1 = _materials(cfg)
    ahom = compute_ahom(_graph(cfg), a1)
    write_json(out / "ahom.json", {
        "voigt": ahom.voigt,
        "ellipticity": ahom.ellipticity,
    })


def cmd_micro(cfg: RunConfig, out: Path) -> None:
    _, _, spectrum = _micro(cfg, theta_cell(cfg))
    modes = min(cfg.modes, len(spectrum.omegas))
    write_json(out / "micro.json", [
        {
            "omega": spectrum.omegas[i],
            "avg": list(spectrum.averages[i]),
            "zero_average": bool(spectrum.zero_average[i]),
        }
        for i in range(modes)
    ])


def cmd_bands(cfg: RunConfig, out: Path) -> None:
    limit, _ = _limit(cfg, theta_cell(cfg))
    write_json(out / "bands.json", limit)
    (out / "bands.svg").write_text(band_svg(to_jsonable(limit)))


def cmd_solve(cfg: RunConfig, out: Path) -> None:
    hom = _homogenised(cfg, theta_cell(cfg))
    write_json(out / "solve.json", {
        "n_modes": len(hom.omegas),
        "energy": hom.energy,
        "work_balance": hom.work_balance,
        "residual_macro": hom.residual_macro,
        "residual_micro": hom.residual_micro,
        "s_matrix": hom.s_matrix,
        "u0_max": float(np.max(np.abs(hom.u0))),
        "coeff_max": [float(np.max(np.abs(c))) for c in hom.coeffs],
    })


def cmd_direct(cfg: RunConfig, out: Path) -> None:
    theta = theta_direct(cfg)
    eps = parse_fraction(cfg.eps)
    a0, a1 = _materials(cfg)
    problem = build(_graph(cfg), eps, theta, a0, a1,
                    n_fine=_n_fine(cfg, eps, theta),
                    boundary_mode=cfg.boundary)
    spectrum = solve_spectrum(problem, cfg.direct_modes)
    write_json(out / "direct.json", {
        "omegas": spectrum.omegas,
        "residuals": spectrum.residuals,
    })


def cmd_converge(cfg: RunConfig, out: Path) -> None:
    write_csv(out / "converge.csv", _convergence_rows(cfg))


def cmd_report(cfg: RunConfig, out: Path) -> None:
    _, a1 = _materials(cfg)
    ahom = compute_ahom(_graph(cfg), a1)
    _, _, spectrum = _micro(cfg, theta_cell(cfg))
    modes = min(cfg.modes, len(spectrum.omegas))
    report = {
        "config": config_echo(cfg),
        "versions": {
            "framehom": __version__,
            "numpy": np.__version__,
            "scipy": __import__("scipy").__version__,
            "python": ".".join(str(v) for v in sys.version_info[:3]),
        },
        "ahom": {"voigt": ahom.voigt, "ellipticity": ahom.ellipticity},
        "micro": [
            {
                "omega": spectrum.omegas[i],
                "avg": list(spectrum.averages[i]),
                "zero_average": bool(spectrum.zero_average[i]),
            }
            for i in range(modes)
        ],
        "limit": _limit(cfg, theta_cell(cfg))[0],
        "convergence": _convergence_rows(cfg),
    }
    write_json(out / "report.json", report)


_COMMANDS = {
    "ahom": cmd_ahom,
    "micro": cmd_micro,
    "bands": cmd_bands,
    "solve": cmd_solve,
    "direct": cmd_direct,
    "converge": cmd_converge,
    "report": cmd_report,
}


# ------------------------------------------------------------------ entry

_COMMAND_HELP = {
    "ahom": "homogenised tensor and its ellipticity",
    "micro": "cell eigenvalues and their composite averages",
    "bands": "limit band and gap structure with an SVG diagram",
    "solve": "coupled homogenised problem for the default source",
    "direct": "fine-scale eigenvalues at one eps",
    "converge": "two-scale distances and spectral residuals over the ladder",
    "report": "all artifacts combined into one JSON document",
}

_FLAGS = (
    ("--config", "config", "key=value file read before flag overrides"),
    ("--out", "out", "artifact directory"),
    ("--framework", "framework", "preset (grid, grid-diag) or framework file"),
    ("--theta", "theta", "rod half-width coefficient, sets cell and direct"),
    ("--lame0", "lame0", "soft Lame modulus before eps^2 scaling"),
    ("--shear0", "shear0", "soft shear modulus before eps^2 scaling"),
    ("--lame1", "lame1", "framework Lame modulus"),
    ("--shear1", "shear1", "framework shear modulus"),
    ("--n", "n", "cell mesh subdivisions per period, even"),
    ("--modes", "modes", "micro eigenvalue count"),
    ("--macro-k", "macro_k", "macroscopic eigenvalue count"),
    ("--macro-n", "macro_n", "macroscopic mesh subdivisions"),
    ("--macro-spectrum", "macro_spectrum",
     "file of Lambda values replacing the computed macro spectrum"),
    ("--eps", "eps", "period of the direct problem, fraction or decimal"),
    ("--ladder", "ladder", "comma separated eps list for converge"),
    ("--nfine", "nfine", "fine mesh subdivisions per cell, or auto"),
    ("--direct-modes", "direct_modes", "fine-scale eigenvalue count"),
    ("--boundary", "boundary", "outer ring treatment: plain or stiff"),
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="homog",
        description="two-scale homogenisation of thin rod frameworks with "
                    "eps^2-soft inclusions",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=_COMMAND_HELP[name])
        for flag, dest, text in _FLAGS:
            p.add_argument(flag, dest=dest, default=None, help=text)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    overrides = {
        key: value
        for key, value in vars(args).items()
        if key not in ("command", "config") and value is not None
    }
    try:
        cfg = load_config(args.config, overrides)
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        _COMMANDS[args.command](cfg, out)
    except (ConfigError, NotElliptic, FrameworkError, MaterialError) as exc:
        print(f"homog {args.command}: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"homog {args.command}: {exc}", file=sys.stderr)
        return 2
    except NumericsError as exc:
        print(f"homog {args.command}: numerical failure: {exc}",
              file=sys.stderr)
        return 3
    return 0


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_main()
