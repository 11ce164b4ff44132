"""Configuration-driven command-line front end.

    fracgeo <fracops|geometry|generate|soliton> --config <path> [--refine] [--out <dir>]

Exit codes: 0 when every requested check passes its tolerance, 1 when a
check fails or a pipeline stage errors out, 2 for configuration or
expression parse errors.  Outputs are deterministic for a fixed config.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from . import flows
from .config import ConfigError, RunConfig, load_config
from .expressions import Expression, ExpressionError
from .fracops import caputo_left, caputo_right, check_fundamental, rl_integral
from .geometry import (
    DMetric,
    GeometryError,
    NConnectionField,
    build_frames,
    canonical_dconnection,
    check_lc_constraints,
    full_stack,
    metric_compatibility_residual,
    torsion,
)
from .grids import ChartSplit, FracOrder, Grid1D, GridError, GridFunction
from .mlf import ml_eigen_check
from .reports import RunReport, write_csv
from .solutions import (
    GeneratingData,
    SolutionError,
    SourceSpec,
    apply_omega,
    check_lc_solution,
    generate_solution,
    verify_field_equations,
)

_STAGE = "setup"


def _eval_chart_expr(expr: Expression, chart: ChartSplit, ml_order: float,
                     shape: tuple[int, ...], n_axes: int) -> np.ndarray:
    """Evaluate an expression over the first ``n_axes`` chart coordinates."""
    coords = chart.coords()
    env = {}
    for k, name in enumerate(("x1", "x2", "v", "y4")[:n_axes]):
        env[name] = coords[k].reshape(coords[k].shape[:n_axes])
    vals = expr(env, ml_order=ml_order)
    return np.broadcast_to(np.asarray(vals, dtype=float), shape).copy()


def cmd_fracops(cfg: RunConfig, out: Path, refine: bool, report: RunReport) -> None:
    if cfg.fracops is None:
        raise ConfigError("missing [fracops] section")
    fc = cfg.fracops
    order = FracOrder(fc.alpha)

    def residuals(grid: Grid1D) -> tuple[float, float, GridFunction, dict]:
        x = grid.nodes()
        f = GridFunction(grid, np.broadcast_to(np.asarray(fc.expr({"x": x}, ml_order=cfg.ml_order), dtype=float), x.shape).copy())
        ra, rb = check_fundamental(f, order)
        cols = {
            "caputo_left": caputo_left(f, order).values,
            "caputo_right": caputo_right(f, order).values,
            "rl_integral": rl_integral(f, order).values,
        }
        return ra, rb, f, cols

    ra, rb, f, cols = residuals(fc.grid)
    tol = cfg.tolerances.fundamental_tol
    report.add("fundamental_identity_a", ra, tol)
    report.add("fundamental_identity_b", rb, tol)

    eigen_grid = Grid1D(0.0, fc.grid.span, fc.grid.n_nodes)
    eig = ml_eigen_check(fc.alpha, eigen_grid)
    report.add("ml_eigenfunction_residual", eig, cfg.tolerances.eigen_tol)

    if refine:
        ra2, rb2, _, _ = residuals(fc.grid.refined())
        eig2 = ml_eigen_check(fc.alpha, eigen_grid.refined())
        report.info["refined"] = {
            "fundamental_identity_a": ra2,
            "fundamental_identity_b": rb2,
            "ml_eigenfunction_residual": eig2,
            "order_a": float(np.log2(ra / ra2)) if ra2 > 0 else None,
            "order_b": float(np.log2(rb / rb2)) if rb2 > 0 else None,
            "order_eigen": float(np.log2(eig / eig2)) if eig2 > 0 else None,
        }

    x = fc.grid.nodes()
    rows = [
        (i, x[i], f.values[i], cols["caputo_left"][i], cols["caputo_right"][i], cols["rl_integral"][i])
        for i in range(fc.grid.n_nodes)
    ]
    write_csv(out / "fracops.csv", ["index", "x", "f", "caputo_left", "caputo_right", "rl_integral"], rows)
    report.info["alpha"] = fc.alpha
    report.info["grid"] = [fc.grid.lower, fc.grid.upper, fc.grid.n_nodes]


def _tensor_rows(chart: ChartSplit, label: str, arr: np.ndarray, comps: list[tuple[str, tuple]]):
    shape = chart.shape
    for name, idx in comps:
        vals = arr[idx]
        for flat in range(int(np.prod(shape))):
            mi = np.unravel_index(flat, shape)
            yield (mi[0], mi[1], mi[2], mi[3], f"{label}{name}", float(vals[mi]))


def cmd_geometry(cfg: RunConfig, out: Path, refine: bool, report: RunReport) -> None:
    if cfg.geometry is None:
        raise ConfigError("missing [geometry] section")
    gc = cfg.geometry

    def run(chart: ChartSplit) -> tuple[float, float, float, object]:
        shape = chart.shape
        g = DMetric.diagonal(
            chart,
            _eval_chart_expr(gc.g1, chart, cfg.ml_order, shape, 4),
            _eval_chart_expr(gc.g2, chart, cfg.ml_order, shape, 4),
            _eval_chart_expr(gc.h3, chart, cfg.ml_order, shape, 4),
            _eval_chart_expr(gc.h4, chart, cfg.ml_order, shape, 4),
            cfg.tolerances.det_floor,
        )
        coeffs = np.zeros((2, 2) + shape)
        for (a, i), expr in gc.n_coeffs.items():
            coeffs[a, i] = _eval_chart_expr(expr, chart, cfg.ml_order, shape, 4)
        n_field = NConnectionField(chart, coeffs)
        conn = canonical_dconnection(g, n_field)
        compat = metric_compatibility_residual(conn, g, n_field)
        tor = torsion(conn, n_field)
        purity = max(
            float(np.max(np.abs(tor[:2, :2, :2]))),
            float(np.max(np.abs(tor[2:, 2:, 2:]))),
        )
        duality = build_frames(n_field).duality_defect()
        stack = full_stack(g, n_field)
        lc = check_lc_constraints(conn, n_field, cfg.tolerances.lc_tol)
        report.info.setdefault("lc_constraints", {})[str(chart.shape)] = lc.residuals
        return compat, purity, duality, stack

    compat, purity, duality, stack = run(cfg.chart)
    tol = cfg.tolerances.compat_tol
    report.add("metric_compatibility", compat, tol)
    report.add("torsion_purity", purity, tol)
    report.add("frame_duality", duality, tol)

    if refine:
        fine = ChartSplit(
            tuple(ax.refined() if k < 3 else ax for k, ax in enumerate(cfg.chart.axes)),
            cfg.chart.orders,
        )
        compat2, purity2, _, _ = run(fine)
        report.info["refined"] = {"metric_compatibility": compat2, "torsion_purity": purity2}

    mixed_comps = [(f"^{a + 1}_{b + 1}", (a, b)) for a in range(4) for b in range(4)]
    lower_comps = [(f"_{a + 1}{b + 1}", (a, b)) for a in range(4) for b in range(4)]
    rows = list(_tensor_rows(cfg.chart, "G", stack.einstein_mixed, mixed_comps))
    rows += list(_tensor_rows(cfg.chart, "Ric", stack.ricci, lower_comps))
    write_csv(out / "tensors.csv", ["i1", "i2", "i3", "i4", "component", "value"], rows)
    scalar_rows = []
    shape = cfg.chart.shape
    for flat in range(int(np.prod(shape))):
        mi = np.unravel_index(flat, shape)
        scalar_rows.append((mi[0], mi[1], mi[2], mi[3], "sR", float(stack.scalar[mi])))
    write_csv(out / "scalar.csv", ["i1", "i2", "i3", "i4", "component", "value"], scalar_rows)


def _build_generate_inputs(cfg: RunConfig, chart: ChartSplit):
    gc = cfg.generate
    hv = chart.hv_shape
    hsh = chart.h_shape
    ml = cfg.ml_order
    u2 = _eval_chart_expr(gc.upsilon2, chart, ml, hv, 3)
    u4 = _eval_chart_expr(gc.upsilon4, chart, ml, hsh, 2)
    src = SourceSpec(chart, u2, u4)
    gen = GeneratingData(
        chart,
        phi=_eval_chart_expr(gc.phi, chart, ml, hv, 3),
        psi=_eval_chart_expr(gc.psi, chart, ml, hsh, 2) if gc.psi is not None else None,
        h4_0=_eval_chart_expr(gc.h4_0, chart, ml, hsh, 2),
        n1=np.stack([_eval_chart_expr(e, chart, ml, hsh, 2) for e in gc.n1]),
        n2=np.stack([_eval_chart_expr(e, chart, ml, hsh, 2) for e in gc.n2]),
        sign_h3=gc.sign_h3,
        sign_h4=gc.sign_h4,
    )
    return gen, src


def _run_generate_once(cfg: RunConfig, chart: ChartSplit):
    global _STAGE
    gen, src = _build_generate_inputs(cfg, chart)
    _STAGE = "generate-solution"
    sol = generate_solution(
        gen,
        src,
        chart,
        psi_options={
            "boundary": cfg.solver.psi_boundary,
            "rhs_factor": cfg.solver.psi_rhs_factor,
            "damping": cfg.solver.relax_damping,
            "tol": cfg.solver.relax_tol,
            "max_iter": cfg.solver.relax_max_iter,
        },
    )
    if cfg.generate.omega is not None:
        _STAGE = "apply-omega"
        omega = _eval_chart_expr(cfg.generate.omega, chart, cfg.ml_order, chart.shape, 4)
        sol = apply_omega(sol, omega)
    _STAGE = "lc-constraints"
    lc = check_lc_solution(sol, cfg.tolerances.lc_tol)
    _STAGE = "field-equations"
    fe = verify_field_equations(sol, src, cfg.tolerances.det_floor)
    return sol, lc, fe


def cmd_generate(cfg: RunConfig, out: Path, refine: bool, report: RunReport) -> None:
    if cfg.generate is None:
        raise ConfigError("missing [generate] section")
    sol, lc, fe = _run_generate_once(cfg, cfg.chart)
    for name, value in lc.residuals.items():
        report.add(f"lc_{name}", value, cfg.tolerances.lc_tol)
    report.add("field_equation_residual", fe.total, None)
    report.info["field_equation_components"] = fe.components
    report.info["psi"] = {k: v for k, v in sol.meta.items() if k.startswith("psi")}
    if sol.omega_residual is not None:
        report.add("omega_anholonomy_residual", sol.omega_residual, None)

    if refine:
        residuals = [fe.total]
        chart = cfg.chart
        for _ in range(1):
            chart = ChartSplit(
                tuple(ax.refined() if k < 3 else ax for k, ax in enumerate(chart.axes)),
                chart.orders,
            )
            _, _, fe_fine = _run_generate_once(cfg, chart)
            residuals.append(fe_fine.total)
        report.info["refinement"] = {
            "residuals": residuals,
            "order": float(np.log2(residuals[0] / residuals[1])) if residuals[1] > 0 else None,
            "monotone": bool(residuals[0] > residuals[1]),
        }

    chart = cfg.chart
    x1 = chart.axes[0].nodes()
    x2 = chart.axes[1].nodes()
    vv = chart.axes[2].nodes()
    rows = []
    for i in range(chart.axes[0].n_nodes):
        for j in range(chart.axes[1].n_nodes):
            for k in range(chart.axes[2].n_nodes):
                rows.append(
                    (
                        i, j, k, x1[i], x2[j], vv[k],
                        sol.g1[i, j], sol.g2[i, j],
                        sol.h3[i, j, k], sol.h4[i, j, k],
                        sol.w[0, i, j, k], sol.w[1, i, j, k],
                        sol.n[0, i, j, k], sol.n[1, i, j, k],
                    )
                )
    write_csv(
        out / "coefficients.csv",
        ["i1", "i2", "i3", "x1", "x2", "v", "g1", "g2", "h3", "h4", "w1", "w2", "n1", "n2"],
        rows,
    )


def cmd_soliton(cfg: RunConfig, out: Path, refine: bool, report: RunReport) -> None:
    if cfg.soliton is None:
        raise ConfigError("missing [soliton] section")
    sc = cfg.soliton
    if sc.curve == "circle":
        curve = flows.circle(sc.radius, sc.n_nodes)
    elif sc.curve == "ellipse":
        curve = flows.ellipse(sc.axis_a, sc.axis_b, sc.n_nodes)
    elif sc.curve == "perturbed":
        curve = flows.perturbed_circle(sc.n_nodes, sc.eps, sc.ripple)
    else:
        curve = _load_curve_csv(Path(sc.csv_path))

    traj_rows = []
    inv_rows = []

    def record(c: flows.FlowCurve, step: int) -> None:
        mn, mx, drift = flows.nonstretch_invariant(c)
        inv_rows.append((step, c.tau, mn, mx, drift))
        for node in range(c.n_nodes):
            row = [step, c.tau, node, c.l[node]]
            row += [c.h[node, k] for k in range(c.h.shape[1])]
            row += [c.v[node, k] for k in range(c.v.shape[1])]
            traj_rows.append(tuple(row))

    record(curve, 0)
    if sc.flow == "zero":
        end = flows.flow0_integrate(curve, sc.tau_end, sc.method,
                                    dt=sc.dt if sc.method == "upwind" else None)
        record(end, 1)
        _, _, drift = flows.nonstretch_invariant(end)
        report.add("nonstretch_drift", drift, cfg.tolerances.drift_tol)
        period = curve.period
        cycles = sc.tau_end / period
        if abs(cycles - round(cycles)) < 1e-12 and round(cycles) >= 1:
            ret = float(np.max(np.abs(end.h - curve.h)))
            if curve.v.shape[1]:
                ret = max(ret, float(np.max(np.abs(end.v - curve.v))))
            report.add("full_period_return", ret, cfg.tolerances.return_tol)
    elif sc.flow == "plus1":
        steps_total = int(round(sc.tau_end / sc.dt))
        chunk = max(1, min(sc.sample_every, steps_total))
        done = 0
        state = curve
        while done < steps_total:
            todo = min(chunk, steps_total - done)
            state = flows.flow_plus1_integrate(
                state, todo * sc.dt, sc.dt, sc.alpha, sc.stability_c
            )
            done += todo
            record(state, done)
        _, _, drift = flows.nonstretch_invariant(state)
        report.add("nonstretch_drift", drift, cfg.tolerances.drift_tol)
        print(f"final non-stretching drift: {drift:.6e}")
    else:
        if sc.y_direction != "tangent":
            raise ConfigError(f"soliton.y_direction: unsupported {sc.y_direction!r}")
        th, _ = flows._unit_tangent(curve.h, curve.hg, curve.dl) if curve.h.shape[1] else (np.zeros_like(curve.h), None)
        tv = np.zeros_like(curve.v)
        rh, rv = flows.flow_minus1_residual(curve, th, tv)
        report.add("kernel_residual_h", rh, None)
        report.add("kernel_residual_v", rv, None)

    write_csv(
        out / "trajectory.csv",
        ["step", "tau", "node", "l"]
        + [f"h{k + 1}" for k in range(curve.h.shape[1])]
        + [f"v{k + 1}" for k in range(curve.v.shape[1])],
        traj_rows,
    )
    write_csv(out / "invariants.csv", ["step", "tau", "min_speed", "max_speed", "drift"], inv_rows)


def _load_curve_csv(path: Path) -> flows.FlowCurve:
    if not path.exists():
        raise ConfigError(f"curve csv not found: {path}")
    with path.open() as fh:
        header = fh.readline().strip().split(",")
        data = np.loadtxt(fh, delimiter=",")
    if data.ndim == 1:
        data = data[None, :]
    cols = {name: data[:, k] for k, name in enumerate(header)}
    if "l" not in cols:
        raise ConfigError("curve csv needs an 'l' column")
    h_names = sorted(n for n in cols if n.startswith("h"))
    v_names = sorted(n for n in cols if n.startswith("v"))
    h = np.stack([cols[n] for n in h_names], axis=1) if h_names else np.zeros((data.shape[0], 0))
    v = np.stack([cols[n] for n in v_names], axis=1) if v_names else np.zeros((data.shape[0], 0))
    return flows.FlowCurve(cols["l"], h, v, np.ones(h.shape[1]), np.ones(v.shape[1]))


_COMMANDS = {
    "fracops": cmd_fracops,
    "geometry": cmd_geometry,
    "generate": cmd_generate,
    "soliton": cmd_soliton,
}


def main(argv: Optional[list[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="fracgeo",
        description="Grid-based fractional-calculus geometry toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to the run configuration")
        p.add_argument("--refine", action="store_true", help="also run refined grids")
        p.add_argument("--out", default=None, help="output directory override")
    args = parser.parse_args(argv)

    global _STAGE
    _STAGE = "config"
    try:
        cfg = load_config(args.config)
    except (ConfigError, ExpressionError) as exc:
        print(f"fracgeo {args.command}: config error: {exc}", file=sys.stderr)
        return 2

    out = Path(args.out) if args.out else cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    report = RunReport(command=args.command)
    report.info["config"] = str(cfg.path)

    _STAGE = args.command
    try:
        _COMMANDS[args.command](cfg, out, args.refine, report)
    except ConfigError as exc:
        print(f"fracgeo {args.command}: config error: {exc}", file=sys.stderr)
        return 2
    except flows.FlowInstabilityError as exc:
        print(
            f"fracgeo {args.command}: stage {_STAGE} failed: {exc} "
            f"(last stable tau {exc.tau:g})",
            file=sys.stderr,
        )
        return 1
    except (SolutionError, GeometryError, GridError, flows.SolitonError) as exc:
        print(f"fracgeo {args.command}: stage {_STAGE} failed: {exc}", file=sys.stderr)
        return 1

    report.write(out / "report.json")
    for line in report.summary_lines():
        print(line)
    print(f"report written to {out / 'report.json'}")
    return 0 if report.passed else 1


if __name__ == "__main__":
    raise SystemExit(main())
