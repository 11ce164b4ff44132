"""Configuration loading for the command-line harness.

Configs are nested key-value text files (INI sections) with all function
inputs given as expression strings over (x1, x2, v, y4).  Loading is
strict: unknown values, malformed grids, and unparsable expressions raise
ConfigError with the offending section and key named.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .expressions import Expression, ExpressionError, parse_expression
from .grids import AXIS_LABELS, ChartSplit, FracOrder, Grid1D, GridError

__all__ = ["ConfigError", "RunConfig", "load_config"]


class ConfigError(ValueError):
    """Unusable configuration file."""


def _parse_grid(text: str, where: str) -> Grid1D:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 3:
        raise ConfigError(f"{where}: expected 'lower, upper, n_nodes', got {text!r}")
    try:
        return Grid1D(float(parts[0]), float(parts[1]), int(parts[2]))
    except (ValueError, GridError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _parse_expr(text: str, where: str) -> Expression:
    try:
        return parse_expression(text)
    except ExpressionError as exc:
        raise ConfigError(f"{where}: parse error: {exc}") from exc


def _get_float(sec, key: str, default: float, where: str) -> float:
    raw = sec.get(key)
    if raw is None:
        return default
    try:
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"{where}.{key}: not a number: {raw!r}") from exc


def _get_int(sec, key: str, default: int, where: str) -> int:
    raw = sec.get(key)
    if raw is None:
        return default
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigError(f"{where}.{key}: not an integer: {raw!r}") from exc


def _get_sign(sec, key: str, where: str) -> int:
    raw = (sec.get(key, "+1") or "+1").strip()
    if raw in ("+1", "1", "+"):
        return 1
    if raw in ("-1", "-"):
        return -1
    raise ConfigError(f"{where}.{key}: expected +1 or -1, got {raw!r}")


@dataclass
class FracopsConfig:
    expr: Expression
    grid: Grid1D
    alpha: float


@dataclass
class GeometryConfig:
    g1: Expression
    g2: Expression
    h3: Expression
    h4: Expression
    n_coeffs: dict[tuple[int, int], Expression]  # (a, i) -> N^(2+a)_i


@dataclass
class GenerateConfig:
    phi: Expression
    upsilon2: Expression
    upsilon4: Expression
    h4_0: Expression
    n1: tuple[Expression, Expression]
    n2: tuple[Expression, Expression]
    sign_h3: int
    sign_h4: int
    psi: Optional[Expression] = None
    omega: Optional[Expression] = None


@dataclass
class SolverConfig:
    psi_rhs_factor: float = 2.0
    psi_boundary: float = 0.0
    relax_damping: float = 0.8
    relax_tol: float = 1e-10
    relax_max_iter: int = 60_000


@dataclass
class SolitonConfig:
    curve: str = "circle"
    n_nodes: int = 256
    radius: float = 1.0
    axis_a: float = 1.5
    axis_b: float = 1.0
    eps: float = 0.1
    ripple: int = 3
    flow: str = "plus1"
    tau_end: float = 0.1
    dt: float = 1e-5
    method: str = "spectral"
    alpha: float = 1.0
    stability_c: float = 1.0
    sample_every: int = 1000
    y_direction: str = "tangent"
    csv_path: Optional[str] = None


@dataclass
class Tolerances:
    lc_tol: float = 1e-8
    det_floor: float = 1e-12
    fundamental_tol: float = 1e-3
    eigen_tol: float = 1e-2
    compat_tol: float = 1e-8
    drift_tol: float = 1e-6
    return_tol: float = 1e-8
    ml_order: Optional[float] = None


@dataclass
class RunConfig:
    path: Path
    chart: ChartSplit
    tolerances: Tolerances
    solver: SolverConfig
    fracops: Optional[FracopsConfig] = None
    geometry: Optional[GeometryConfig] = None
    generate: Optional[GenerateConfig] = None
    soliton: Optional[SolitonConfig] = None
    out_dir: Path = field(default_factory=lambda: Path("out"))

    @property
    def ml_order(self) -> float:
        if self.tolerances.ml_order is not None:
            return self.tolerances.ml_order
        return self.chart.orders[2].alpha


def _load_chart(parser: configparser.ConfigParser) -> ChartSplit:
    if not parser.has_section("chart"):
        # default desk-scale chart; commands that need one may run unconfigured
        axes = (Grid1D(0, 1, 5), Grid1D(0, 1, 5), Grid1D(0, 1, 9), Grid1D(0, 1, 3))
        orders = tuple(FracOrder(1.0) for _ in range(4))
        return ChartSplit(axes, orders)
    sec = parser["chart"]
    axes = []
    orders = []
    for label in AXIS_LABELS:
        raw = sec.get(label)
        if raw is None:
            raise ConfigError(f"chart.{label}: missing axis specification")
        axes.append(_parse_grid(raw, f"chart.{label}"))
        alpha = _get_float(sec, f"alpha_{label}", 1.0, "chart")
        try:
            orders.append(FracOrder(alpha))
        except GridError as exc:
            raise ConfigError(f"chart.alpha_{label}: {exc}") from exc
    return ChartSplit(tuple(axes), tuple(orders))


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    chart = _load_chart(parser)

    tol = Tolerances()
    if parser.has_section("tolerances"):
        sec = parser["tolerances"]
        tol.lc_tol = _get_float(sec, "lc_tol", tol.lc_tol, "tolerances")
        tol.det_floor = _get_float(sec, "det_floor", tol.det_floor, "tolerances")
        tol.fundamental_tol = _get_float(sec, "fundamental_tol", tol.fundamental_tol, "tolerances")
        tol.eigen_tol = _get_float(sec, "eigen_tol", tol.eigen_tol, "tolerances")
        tol.compat_tol = _get_float(sec, "compat_tol", tol.compat_tol, "tolerances")
        tol.drift_tol = _get_float(sec, "drift_tol", tol.drift_tol, "tolerances")
        tol.return_tol = _get_float(sec, "return_tol", tol.return_tol, "tolerances")
        if sec.get("ml_order") is not None:
            tol.ml_order = _get_float(sec, "ml_order", 0.0, "tolerances")
        for name in ("lc_tol", "det_floor", "fundamental_tol", "eigen_tol",
                     "compat_tol", "drift_tol", "return_tol"):
            if getattr(tol, name) <= 0:
                raise ConfigError(f"tolerances.{name}: must be positive")

    solver = SolverConfig()
    if parser.has_section("solver"):
        sec = parser["solver"]
        solver.psi_rhs_factor = _get_float(sec, "psi_rhs_factor", solver.psi_rhs_factor, "solver")
        solver.psi_boundary = _get_float(sec, "psi_boundary", solver.psi_boundary, "solver")
        solver.relax_damping = _get_float(sec, "relax_damping", solver.relax_damping, "solver")
        solver.relax_tol = _get_float(sec, "relax_tol", solver.relax_tol, "solver")
        solver.relax_max_iter = _get_int(sec, "relax_max_iter", solver.relax_max_iter, "solver")

    cfg = RunConfig(path=path, chart=chart, tolerances=tol, solver=solver)

    if parser.has_section("fracops"):
        sec = parser["fracops"]
        raw = sec.get("f")
        if raw is None:
            raise ConfigError("fracops.f: missing target expression")
        grid = _parse_grid(sec.get("grid", "0.0, 1.0, 257"), "fracops.grid")
        alpha = _get_float(sec, "alpha", 0.5, "fracops")
        try:
            FracOrder(alpha)
        except GridError as exc:
            raise ConfigError(f"fracops.alpha: {exc}") from exc
        expr = _parse_expr(raw, "fracops.f")
        unknown = expr.variables() - {"x"}
        if unknown:
            raise ConfigError(f"fracops.f: unknown variables {sorted(unknown)}")
        cfg.fracops = FracopsConfig(expr, grid, alpha)

    if parser.has_section("geometry"):
        sec = parser["geometry"]
        def expr_of(key: str, default: str) -> Expression:
            return _parse_expr(sec.get(key, default), f"geometry.{key}")
        n_coeffs = {}
        for a, vert in ((0, "3"), (1, "4")):
            for i in (0, 1):
                n_coeffs[(a, i)] = expr_of(f"n{vert}_{i + 1}", "0")
        cfg.geometry = GeometryConfig(
            g1=expr_of("g1", "1"),
            g2=expr_of("g2", "1"),
            h3=expr_of("h3", "1"),
            h4=expr_of("h4", "1"),
            n_coeffs=n_coeffs,
        )

    if parser.has_section("generate"):
        sec = parser["generate"]
        raw_phi = sec.get("phi")
        if raw_phi is None:
            raise ConfigError("generate.phi: missing generating function")
        phi = _parse_expr(raw_phi, "generate.phi")
        if phi.is_constant():
            raise ConfigError("generate.phi: phi must be nonconstant")
        psi_raw = sec.get("psi")
        omega_raw = sec.get("omega")
        cfg.generate = GenerateConfig(
            phi=phi,
            upsilon2=_parse_expr(sec.get("upsilon2", "1"), "generate.upsilon2"),
            upsilon4=_parse_expr(sec.get("upsilon4", "0"), "generate.upsilon4"),
            h4_0=_parse_expr(sec.get("h4_0", "1"), "generate.h4_0"),
            n1=(
                _parse_expr(sec.get("n1_1", "0"), "generate.n1_1"),
                _parse_expr(sec.get("n1_2", "0"), "generate.n1_2"),
            ),
            n2=(
                _parse_expr(sec.get("n2_1", "0"), "generate.n2_1"),
                _parse_expr(sec.get("n2_2", "0"), "generate.n2_2"),
            ),
            sign_h3=_get_sign(sec, "sign_h3", "generate"),
            sign_h4=_get_sign(sec, "sign_h4", "generate"),
            psi=_parse_expr(psi_raw, "generate.psi") if psi_raw else None,
            omega=_parse_expr(omega_raw, "generate.omega") if omega_raw else None,
        )

    if parser.has_section("soliton"):
        sec = parser["soliton"]
        sc = SolitonConfig()
        sc.curve = sec.get("curve", sc.curve).strip()
        sc.n_nodes = _get_int(sec, "n_nodes", sc.n_nodes, "soliton")
        sc.radius = _get_float(sec, "radius", sc.radius, "soliton")
        sc.axis_a = _get_float(sec, "a", sc.axis_a, "soliton")
        sc.axis_b = _get_float(sec, "b", sc.axis_b, "soliton")
        sc.eps = _get_float(sec, "eps", sc.eps, "soliton")
        sc.ripple = _get_int(sec, "m", sc.ripple, "soliton")
        sc.flow = sec.get("flow", sc.flow).strip()
        sc.tau_end = _get_float(sec, "tau_end", sc.tau_end, "soliton")
        sc.dt = _get_float(sec, "dt", sc.dt, "soliton")
        sc.method = sec.get("method", sc.method).strip()
        sc.alpha = _get_float(sec, "alpha", sc.alpha, "soliton")
        sc.stability_c = _get_float(sec, "stability_c", sc.stability_c, "soliton")
        sc.sample_every = _get_int(sec, "sample_every", sc.sample_every, "soliton")
        sc.y_direction = sec.get("y_direction", sc.y_direction).strip()
        sc.csv_path = sec.get("csv")
        if sc.flow not in ("zero", "plus1", "minus1"):
            raise ConfigError(f"soliton.flow: unknown flow {sc.flow!r}")
        if sc.curve not in ("circle", "ellipse", "perturbed", "csv"):
            raise ConfigError(f"soliton.curve: unknown curve {sc.curve!r}")
        if sc.curve == "csv" and not sc.csv_path:
            raise ConfigError("soliton.csv: path required for curve = csv")
        cfg.soliton = sc

    if parser.has_section("output"):
        cfg.out_dir = Path(parser["output"].get("dir", "out"))

    return cfg
