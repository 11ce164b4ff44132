"""Off-diagonal metric generation from a generating function, with checks.

The pipeline follows the stated recipe: solve the two-dimensional
potential equation for psi, take any nonconstant generating function
phi(x, v), and produce

    g1 = g2 = exp(psi),
    h3  = sign_h3 * |phi_star| / Upsilon2,
    h4  = h4_0 +- 2 * I_v[(exp(2 phi))_star / Upsilon2],
    w_i = -d_i phi / phi_star,
    n_i = n1_i + n2_i * I_v[h3 / sqrt(|h4|)^3],

where stars are v-derivatives, d_i are horizontal derivatives, and I_v is
the fractional integral along v from the lower terminal.  Every
construction is verified by residuals rather than trusted: the
torsion-free constraint families and the field equations are checked on
the assembled metric.

At fractional v-order the discrete v-derivative of any sampled function
vanishes on the first v-slice (empty-history convention), so h3 vanishes
there no matter what phi is.  The pipeline then marks that slice as
excluded: constraint checks skip it, and field-equation verification,
which needs an invertible metric everywhere, refuses such bundles.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .fracops import caputo_axis, rl_axis
from .geometry import (
    ConstraintReport,
    DMetric,
    GeometryError,
    NConnectionField,
    chart_partial,
    full_stack,
)
from .grids import ChartSplit, GridError

__all__ = [
    "SolutionError",
    "SourceSpec",
    "GeneratingData",
    "PsiSolution",
    "SolutionBundle",
    "FieldEquationReport",
    "solve_psi",
    "generate_solution",
    "check_lc_solution",
    "apply_omega",
    "verify_field_equations",
]


class SolutionError(RuntimeError):
    """Pipeline input or convergence failure."""


def _axis_partial(chart: ChartSplit, values: np.ndarray, axis: int, n_grid_axes: int) -> np.ndarray:
    """Left derivative along chart axis ``axis`` for arrays whose trailing
    ``n_grid_axes`` dimensions are the leading chart axes."""
    order = chart.orders[axis]
    grid = chart.axes[axis]
    return caputo_axis(values, values.ndim - n_grid_axes + axis, order.alpha, grid.spacing)


def _axis_integral(chart: ChartSplit, values: np.ndarray, axis: int, n_grid_axes: int) -> np.ndarray:
    order = chart.orders[axis]
    grid = chart.axes[axis]
    return rl_axis(values, values.ndim - n_grid_axes + axis, order.alpha, grid.spacing)


@dataclass(frozen=True)
class SourceSpec:
    """Diagonal source data: Upsilon2(x, v) and Upsilon4(x).

    Upsilon2 sits in the generated denominators and must be nowhere zero;
    the vacuum variant is not handled by this pipeline.
    """

    chart: ChartSplit
    upsilon2: np.ndarray
    upsilon4: np.ndarray

    def __post_init__(self) -> None:
        u2 = np.asarray(self.upsilon2, dtype=float)
        u4 = np.asarray(self.upsilon4, dtype=float)
        if u2.shape != self.chart.hv_shape:
            raise GridError(f"Upsilon2 must have shape {self.chart.hv_shape}, got {u2.shape}")
        if u4.shape != self.chart.h_shape:
            raise GridError(f"Upsilon4 must have shape {self.chart.h_shape}, got {u4.shape}")
        if not (np.all(np.isfinite(u2)) and np.all(np.isfinite(u4))):
            raise GridError("source samples must be finite")
        if np.any(u2 == 0.0):
            idx = tuple(int(v) for v in np.argwhere(u2 == 0.0)[0])
            raise SolutionError(f"Upsilon2 vanishes at node {idx}; vacuum sources are rejected")
        object.__setattr__(self, "upsilon2", u2)
        object.__setattr__(self, "upsilon4", u4)


@dataclass(frozen=True)
class GeneratingData:
    """Free data of the recipe: phi, optional psi, integration functions, signs."""

    chart: ChartSplit
    phi: np.ndarray
    psi: Optional[np.ndarray] = None
    h4_0: Optional[np.ndarray] = None
    n1: Optional[np.ndarray] = None  # (2, n1, n2)
    n2: Optional[np.ndarray] = None  # (2, n1, n2)
    sign_h3: int = 1
    sign_h4: int = 1

    def __post_init__(self) -> None:
        hv = self.chart.hv_shape
        h = self.chart.h_shape
        phi = np.asarray(self.phi, dtype=float)
        if phi.shape != hv:
            raise GridError(f"phi must have shape {hv}, got {phi.shape}")
        if self.sign_h3 not in (-1, 1) or self.sign_h4 not in (-1, 1):
            raise GridError("sign flags must be +1 or -1")
        object.__setattr__(self, "phi", phi)
        for name, want in (("psi", h), ("h4_0", h)):
            arr = getattr(self, name)
            if arr is not None:
                arr = np.asarray(arr, dtype=float)
                if arr.shape != want:
                    raise GridError(f"{name} must have shape {want}, got {arr.shape}")
                object.__setattr__(self, name, arr)
        for name in ("n1", "n2"):
            arr = getattr(self, name)
            if arr is not None:
                arr = np.asarray(arr, dtype=float)
                if arr.shape != (2,) + h:
                    raise GridError(f"{name} must have shape {(2,) + h}, got {arr.shape}")
                object.__setattr__(self, name, arr)


@dataclass(frozen=True)
class PsiSolution:
    values: np.ndarray
    residual: float
    iterations: int
    converged: bool


def _second_derivative_operator(n: int, h: float, alpha: float) -> np.ndarray:
    """Matrix of the twice-applied left derivative along one axis.

    At alpha = 1 the composition of central stencils decouples even and odd
    sublattices, so the classical three-point second difference is used
    instead; this is the alpha -> 1 limit of the composed operator.
    """
    if alpha == 1.0:
        m = np.zeros((n, n))
        for i in range(1, n - 1):
            m[i, i - 1] = 1.0 / h**2
            m[i, i] = -2.0 / h**2
            m[i, i + 1] = 1.0 / h**2
        return m
    from .fracops import _l1_matrix  # shared cached weights

    dm = np.zeros((n - 1, n))
    for k in range(n - 1):
        dm[k, k] = -1.0
        dm[k, k + 1] = 1.0
    d1 = _l1_matrix(n, h, alpha) @ dm
    return d1 @ d1


def solve_psi(
    src: SourceSpec,
    chart: ChartSplit,
    boundary: float | np.ndarray = 0.0,
    rhs_factor: float = 2.0,
    damping: float = 0.8,
    tol: float = 1e-10,
    max_iter: int = 60_000,
) -> PsiSolution:
    """Solve d1 d1 psi + d2 d2 psi = rhs_factor * Upsilon4 on the h-grid.

    Damped fixed-point relaxation with Dirichlet edge data; the residual of
    the defining equation on interior nodes is returned with the result.
    Raises on non-convergence, carrying the last residual.
    """
    n1, n2 = chart.h_shape
    a1 = _second_derivative_operator(n1, chart.axes[0].spacing, chart.orders[0].alpha)
    a2 = _second_derivative_operator(n2, chart.axes[1].spacing, chart.orders[1].alpha)
    rhs = rhs_factor * src.upsilon4

    psi = np.zeros((n1, n2))
    psi += boundary
    interior = np.zeros((n1, n2), dtype=bool)
    interior[1:-1, 1:-1] = True

    diag = np.diag(a1)[:, None] + np.diag(a2)[None, :]
    if np.any(diag[interior] == 0.0):
        raise SolutionError("relaxation operator has zero diagonal on the interior")
    scale = max(1.0, float(np.max(np.abs(rhs))))

    res = np.inf
    for it in range(1, max_iter + 1):
        applied = a1 @ psi + psi @ a2.T
        r = rhs - applied
        res = float(np.max(np.abs(r[interior])))
        if res <= tol * scale:
            return PsiSolution(psi, res, it, True)
        psi[interior] += damping * r[interior] / diag[interior]
    raise SolutionError(
        f"psi relaxation did not reach {tol:g} in {max_iter} iterations "
        f"(last residual {res:g})"
    )


@dataclass
class SolutionBundle:
    """Assembled coefficients plus everything needed to audit them."""

    chart: ChartSplit
    psi: np.ndarray
    g1: np.ndarray
    g2: np.ndarray
    h3: np.ndarray
    h4: np.ndarray
    w: np.ndarray  # (2, n1, n2, n3)
    n: np.ndarray  # (2, n1, n2, n3)
    sign_h3: int
    sign_h4: int
    aux: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)
    v_start: int = 0
    omega: Optional[np.ndarray] = None
    omega_residual: Optional[float] = None

    def vertical_blocks(self) -> tuple[np.ndarray, np.ndarray]:
        """h3, h4 on the full chart, with the conformal factor applied."""
        shape = self.chart.shape
        h3 = np.broadcast_to(self.h3[..., None], shape).copy()
        h4 = np.broadcast_to(self.h4[..., None], shape).copy()
        if self.omega is not None:
            h3 *= self.omega**2
            h4 *= self.omega**2
        return h3, h4

    def metric(self, det_floor: float = 1e-12) -> tuple[DMetric, NConnectionField]:
        shape = self.chart.shape
        g1 = np.broadcast_to(self.g1[:, :, None, None], shape)
        g2 = np.broadcast_to(self.g2[:, :, None, None], shape)
        h3, h4 = self.vertical_blocks()
        g = DMetric.diagonal(self.chart, g1, g2, h3, h4, det_floor)
        coeffs = np.zeros((2, 2) + shape)
        for i in range(2):
            coeffs[0, i] = np.broadcast_to(self.w[i][..., None], shape)
            coeffs[1, i] = np.broadcast_to(self.n[i][..., None], shape)
        return g, NConnectionField(self.chart, coeffs)


def generate_solution(
    gen: GeneratingData,
    src: SourceSpec,
    chart: ChartSplit,
    psi_options: Optional[dict] = None,
) -> SolutionBundle:
    """Run the recipe for nowhere-zero phi_star and Upsilon2.

    phi_star must not vanish on the reporting region (all nodes at
    classical v-order; v-index >= 1 at fractional v-order, where the first
    slice is structurally degenerate).  h4 must keep a single sign.
    """
    hv = chart.hv_shape
    if np.ptp(gen.phi) == 0.0:
        raise SolutionError("phi must be nonconstant")

    meta: dict = {}
    if gen.psi is not None:
        psi = gen.psi
        meta["psi_source"] = "supplied"
    else:
        sol = solve_psi(src, chart, **(psi_options or {}))
        psi = sol.values
        meta["psi_source"] = "solved"
        meta["psi_residual"] = sol.residual
        meta["psi_iterations"] = sol.iterations
    g1 = np.exp(psi)
    g2 = g1.copy()

    phi_star = _axis_partial(chart, gen.phi, 2, 3)
    alpha_v = chart.orders[2].alpha
    v_start = 0
    zero_star = phi_star == 0.0
    if alpha_v < 1.0 and np.all(zero_star[:, :, 0]):
        v_start = 1
        zero_star = zero_star[:, :, 1:]
    if np.any(zero_star):
        rel = np.argwhere(zero_star)[0]
        idx = (int(rel[0]), int(rel[1]), int(rel[2]) + v_start)
        raise SolutionError(f"phi_star vanishes on the interior at node {idx}")
    meta["v_start"] = v_start
    meta["phi_star_min"] = float(np.min(np.abs(phi_star[:, :, v_start:])))

    h3 = gen.sign_h3 * np.abs(phi_star) / src.upsilon2

    e2 = np.exp(2.0 * gen.phi)
    de2 = _axis_partial(chart, e2, 2, 3)
    iv = _axis_integral(chart, de2 / src.upsilon2, 2, 3)
    h4_0 = gen.h4_0 if gen.h4_0 is not None else np.ones(chart.h_shape)
    h4 = h4_0[:, :, None] + 2.0 * gen.sign_h4 * iv
    if np.any(h4 == 0.0):
        idx = tuple(int(v) for v in np.argwhere(h4 == 0.0)[0])
        raise SolutionError(f"h4 vanishes at node {idx}")
    signs = np.sign(h4)
    if np.any(signs != signs.flat[0]):
        idx = tuple(int(v) for v in np.argwhere(signs != signs.flat[0])[0])
        raise SolutionError(f"h4 changes sign across the grid (first flip at node {idx})")

    w = np.zeros((2,) + hv)
    for i in range(2):
        num = -_axis_partial(chart, gen.phi, i, 3)
        nz = num != 0.0
        bad = nz & (phi_star == 0.0)
        if np.any(bad):
            idx = tuple(int(v) for v in np.argwhere(bad)[0])
            raise SolutionError(
                f"w_{i + 1} undefined at node {idx}: phi_star vanishes under a "
                "nonzero horizontal derivative"
            )
        w[i][nz] = num[nz] / phi_star[nz]

    n_integrand = h3 / np.sqrt(np.abs(h4)) ** 3
    ivn = _axis_integral(chart, n_integrand, 2, 3)
    n1 = gen.n1 if gen.n1 is not None else np.zeros((2,) + chart.h_shape)
    n2 = gen.n2 if gen.n2 is not None else np.zeros((2,) + chart.h_shape)
    n = n1[:, :, :, None] + n2[:, :, :, None] * ivn[None]

    h4_star = _axis_partial(chart, h4, 2, 3)
    with np.errstate(divide="ignore", invalid="ignore"):
        phi_rec = np.log(np.abs(h4_star / np.sqrt(np.abs(h3 * h4))))
        gamma = _axis_partial(
            chart, np.log(np.abs(h4) ** 1.5 / np.abs(h3)), 2, 3
        ) if v_start == 0 else np.full(hv, np.nan)
    alpha_i = np.stack([h4_star * _axis_partial(chart, gen.phi, i, 3) for i in range(2)])
    beta = h4_star * phi_star

    aux = {
        "phi": gen.phi,
        "phi_star": phi_star,
        "phi_reconstructed": phi_rec,
        "gamma": gamma,
        "alpha_i": alpha_i,
        "beta": beta,
        "h4_star": h4_star,
    }
    return SolutionBundle(
        chart=chart,
        psi=psi,
        g1=g1,
        g2=g2,
        h3=h3,
        h4=h4,
        w=w,
        n=n,
        sign_h3=gen.sign_h3,
        sign_h4=gen.sign_h4,
        aux=aux,
        meta=meta,
        v_start=v_start,
    )


def _e_horizontal(sol: SolutionBundle, values: np.ndarray, i: int) -> np.ndarray:
    """Adapted horizontal derivative e_i on (x, v) fields of the bundle."""
    chart = sol.chart
    out = _axis_partial(chart, values, i, 3)
    out = out - sol.w[i] * _axis_partial(chart, values, 2, 3)
    # the y4 term drops: bundle coefficients do not depend on y4
    return out


def check_lc_solution(sol: SolutionBundle, tolerance: float = 1e-8) -> ConstraintReport:
    """Residuals of the four torsion-free families on the assembled data.

    Families: w_i_star = e_i ln|h4|; e_k w_i = e_i w_k; n_i_star = 0;
    d_i n_k = d_k n_i.  Max-norms are taken over the reporting region
    (v-index >= v_start).
    """
    chart = sol.chart
    sl = (slice(None), slice(None), slice(sol.v_start, None))
    ln_h4 = np.log(np.abs(sol.h4))

    w_star = np.stack([_axis_partial(chart, sol.w[i], 2, 3) for i in range(2)])
    e_ln = np.stack([_e_horizontal(sol, ln_h4, i) for i in range(2)])
    res_w_star = float(np.max(np.abs((w_star - e_ln)[(slice(None),) + sl])))

    cross = _e_horizontal(sol, sol.w[1], 0) - _e_horizontal(sol, sol.w[0], 1)
    res_w_sym = float(np.max(np.abs(cross[sl])))

    n_star = np.stack([_axis_partial(chart, sol.n[i], 2, 3) for i in range(2)])
    res_n_star = float(np.max(np.abs(n_star[(slice(None),) + sl])))

    curl_n = _axis_partial(chart, sol.n[1], 0, 3) - _axis_partial(chart, sol.n[0], 1, 3)
    res_n_curl = float(np.max(np.abs(curl_n[sl])))

    return ConstraintReport(
        tolerance,
        {
            "w_star_matches_e_ln_h4": res_w_star,
            "w_cross_symmetry": res_w_sym,
            "n_star_zero": res_n_star,
            "n_curl_zero": res_n_curl,
        },
    )


def apply_omega(sol: SolutionBundle, omega: np.ndarray) -> SolutionBundle:
    """Attach the conformal factor and record its anholonomy residual.

    The factor must be positive everywhere.  The residual
    max |d_k omega + w_k omega_star + n_k d_y4 omega| is recorded, not
    enforced.
    """
    chart = sol.chart
    omega = np.asarray(omega, dtype=float)
    if omega.shape != chart.shape:
        raise GridError(f"omega must have shape {chart.shape}, got {omega.shape}")
    if not np.all(np.isfinite(omega)) or np.any(omega <= 0.0):
        raise SolutionError("omega must be positive and finite everywhere")

    omega_star = _axis_partial(chart, omega, 2, 4)
    omega_y4 = _axis_partial(chart, omega, 3, 4)
    worst = 0.0
    sl = (slice(None), slice(None), slice(sol.v_start, None), slice(None))
    for k in range(2):
        ek = (
            _axis_partial(chart, omega, k, 4)
            + sol.w[k][..., None] * omega_star
            + sol.n[k][..., None] * omega_y4
        )
        worst = max(worst, float(np.max(np.abs(ek[sl]))))
    return dataclasses.replace(sol, omega=omega, omega_residual=worst)


@dataclass(frozen=True)
class FieldEquationReport:
    """Component-wise residuals of the mixed field equations."""

    components: dict[str, float]
    total: float
    shape: tuple[int, int, int, int]

    def __str__(self) -> str:
        rows = ", ".join(f"{k}={v:.3e}" for k, v in sorted(self.components.items()))
        return f"field-equation residual total={self.total:.6e} ({rows})"


def verify_field_equations(
    sol: SolutionBundle, src: SourceSpec, det_floor: float = 1e-12
) -> FieldEquationReport:
    """Assemble the metric, run the geometry stack, compare against the source.

    Reports max |G^alpha_beta - diag(U2, U2, U4, U4)| per component on the
    mixed index layout of the source.  Bundles with an excluded first
    v-slice (fractional v-order) are refused: the metric is not invertible
    there and the history-dependent derivatives would drag the singular
    slice into every interior value.
    """
    if sol.v_start != 0:
        raise SolutionError(
            "field-equation verification needs a metric invertible on the whole "
            "grid; this bundle's first v-slice is degenerate (fractional v-order)"
        )
    try:
        g, n_field = sol.metric(det_floor)
    except GeometryError as exc:
        raise SolutionError(f"assembled metric is singular: {exc}") from exc

    stack = full_stack(g, n_field)
    shape = sol.chart.shape
    target = np.zeros((4,) + shape)
    target[0] = target[1] = np.broadcast_to(src.upsilon2[..., None], shape)
    target[2] = target[3] = np.broadcast_to(src.upsilon4[:, :, None, None], shape)

    comps: dict[str, float] = {}
    total = 0.0
    for alpha in range(4):
        for beta in range(4):
            diff = stack.einstein_mixed[alpha, beta]
            if alpha == beta:
                diff = diff - target[alpha]
            r = float(np.max(np.abs(diff)))
            comps[f"G^{alpha + 1}_{beta + 1}"] = r
            total = max(total, r)
    return FieldEquationReport(comps, total, shape)
