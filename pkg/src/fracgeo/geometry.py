"""Frame geometry of the 2+2 split: frames, connection, curvature stack.

Conventions fixed here (and relied on by the tests):

* Greek indices run 0..3 over (x1, x2, v, y4); horizontal i, j, k are 0..1
  and vertical a, b, c are 2..3 (stored 0..1 within blocks).
* The structure coefficients W satisfy [e_alpha, e_beta] = W^gamma_ab e_gamma
  with the sign the bracket actually produces; Omega is stored so that the
  mixed torsion components reproduce it, T^a_(ji) = Omega^a_(ji).
* Curvature components follow R(e_g, e_d) e_b = R^t_(bgd) e_t, and the
  Ricci blocks contract the last 2-form slot, Ric_(bg) = R^t_(bgt).  With
  this pairing the scalar of a round sphere block comes out negative; the
  Einstein tensor inherits the same overall sign.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fracops import caputo_axis
from .grids import ChartSplit, GridError

__all__ = [
    "GeometryError",
    "NConnectionField",
    "FrameField",
    "DMetric",
    "DConnection",
    "CurvatureStack",
    "ConstraintReport",
    "build_frames",
    "nonholonomy",
    "canonical_dconnection",
    "torsion",
    "curvature",
    "ricci",
    "scalar_curvature",
    "einstein_tensor",
    "mixed_components",
    "metric_compatibility_residual",
    "check_lc_constraints",
    "full_stack",
]

HDIM = 2
VDIM = 2
DIM = 4


class GeometryError(RuntimeError):
    """Numerical failure inside the geometry stack (singular metric, ...)."""


def chart_partial(chart: ChartSplit, values: np.ndarray, axis: int) -> np.ndarray:
    """Left derivative along chart axis ``axis`` of a batched array.

    The chart's grid axes are the trailing four dimensions of ``values``;
    leading dimensions are treated as components.
    """
    order = chart.orders[axis]
    grid = chart.axes[axis]
    return caputo_axis(values, values.ndim - 4 + axis, order.alpha, grid.spacing)


@dataclass(frozen=True)
class NConnectionField:
    """Coefficients N^a_i of the h/v splitting, sampled on the chart.

    ``coeffs[a, i]`` is the grid array for vertical index a (0 -> v,
    1 -> y4) and horizontal index i (0 -> x1, 1 -> x2).
    """

    chart: ChartSplit
    coeffs: np.ndarray

    def __post_init__(self) -> None:
        expected = (VDIM, HDIM) + self.chart.shape
        arr = np.asarray(self.coeffs, dtype=float)
        if arr.shape != expected:
            raise GridError(f"N coefficients must have shape {expected}, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise GridError("N coefficients must be finite")
        object.__setattr__(self, "coeffs", arr)

    @classmethod
    def zero(cls, chart: ChartSplit) -> "NConnectionField":
        return cls(chart, np.zeros((VDIM, HDIM) + chart.shape))


def frame_derivative(
    chart: ChartSplit, N: NConnectionField, values: np.ndarray, direction: int
) -> np.ndarray:
    """Apply the adapted frame e_direction to a batched field."""
    out = chart_partial(chart, values, direction)
    if direction < HDIM:
        for a in range(VDIM):
            out = out - N.coeffs[a, direction] * chart_partial(chart, values, HDIM + a)
    return out


@dataclass(frozen=True)
class FrameField:
    """Adapted frame e_beta and co-frame e^beta as coefficient matrices."""

    chart: ChartSplit
    N: NConnectionField

    def frame_matrix(self) -> np.ndarray:
        """M[beta, mu] with e_beta = M[beta, mu] d_mu."""
        shape = self.chart.shape
        m = np.zeros((DIM, DIM) + shape)
        for mu in range(DIM):
            m[mu, mu] = 1.0
        for j in range(HDIM):
            for a in range(VDIM):
                m[j, HDIM + a] = -self.N.coeffs[a, j]
        return m

    def coframe_matrix(self) -> np.ndarray:
        """C[beta, mu] with e^beta = C[beta, mu] (du^mu)^alpha."""
        shape = self.chart.shape
        c = np.zeros((DIM, DIM) + shape)
        for mu in range(DIM):
            c[mu, mu] = 1.0
        for b in range(VDIM):
            for k in range(HDIM):
                c[HDIM + b, k] = self.N.coeffs[b, k]
        return c

    def apply(self, values: np.ndarray, direction: int) -> np.ndarray:
        return frame_derivative(self.chart, self.N, values, direction)

    def duality_defect(self) -> float:
        """Max deviation of <e^beta, e_gamma> from the identity."""
        pairing = np.einsum("bm...,gm...->bg...", self.coframe_matrix(), self.frame_matrix())
        eye = np.zeros((DIM, DIM) + self.chart.shape)
        for mu in range(DIM):
            eye[mu, mu] = 1.0
        return float(np.max(np.abs(pairing - eye)))


def build_frames(N: NConnectionField) -> FrameField:
    return FrameField(N.chart, N)


def _block_signature(block: np.ndarray, name: str) -> tuple[int, int]:
    """Constant sign pattern of a sampled symmetric 2x2 block."""
    det = block[0, 0] * block[1, 1] - block[0, 1] * block[1, 0]
    tr = block[0, 0] + block[1, 1]
    det_sign = np.sign(det)
    if np.any(det_sign == 0):
        raise GeometryError(f"{name} block is singular somewhere on the grid")
    if np.any(det_sign != det_sign.flat[0]):
        raise GeometryError(f"{name} block changes signature across the grid")
    if det_sign.flat[0] < 0:
        return (1, -1)
    tr_sign = np.sign(tr)
    if np.any(tr_sign != tr_sign.flat[0]) or tr_sign.flat[0] == 0:
        raise GeometryError(f"{name} block changes signature across the grid")
    s = int(tr_sign.flat[0])
    return (s, s)


def _invert_block(block: np.ndarray, floor: float, name: str) -> np.ndarray:
    det = block[0, 0] * block[1, 1] - block[0, 1] * block[1, 0]
    bad = np.abs(det) < floor
    if np.any(bad):
        idx = tuple(int(v) for v in np.argwhere(bad)[0])
        raise GeometryError(
            f"{name} block determinant below floor {floor:g} at node {idx}"
        )
    inv = np.empty_like(block)
    inv[0, 0] = block[1, 1] / det
    inv[1, 1] = block[0, 0] / det
    inv[0, 1] = -block[0, 1] / det
    inv[1, 0] = -block[1, 0] / det
    return inv


@dataclass
class DMetric:
    """Block metric: horizontal g_h[i, j] and vertical g_v[a, b] samples."""

    chart: ChartSplit
    g_h: np.ndarray
    g_v: np.ndarray
    det_floor: float = 1e-12
    signature: tuple[int, int, int, int] = field(init=False)

    def __post_init__(self) -> None:
        shape = self.chart.shape
        for name, arr in (("horizontal", self.g_h), ("vertical", self.g_v)):
            if arr.shape != (2, 2) + shape:
                raise GridError(f"{name} block must have shape {(2, 2) + shape}")
            if not np.all(np.isfinite(arr)):
                raise GridError(f"{name} block must be finite")
            asym = np.max(np.abs(arr[0, 1] - arr[1, 0]))
            scale = max(float(np.max(np.abs(arr))), 1.0)
            if asym > 1e-12 * scale:
                raise GridError(f"{name} block is not symmetric (defect {asym:g})")
        self.signature = _block_signature(self.g_h, "horizontal") + _block_signature(
            self.g_v, "vertical"
        )

    @classmethod
    def diagonal(
        cls,
        chart: ChartSplit,
        g1: np.ndarray,
        g2: np.ndarray,
        h3: np.ndarray,
        h4: np.ndarray,
        det_floor: float = 1e-12,
    ) -> "DMetric":
        shape = chart.shape
        g_h = np.zeros((2, 2) + shape)
        g_v = np.zeros((2, 2) + shape)
        g_h[0, 0] = np.broadcast_to(g1, shape)
        g_h[1, 1] = np.broadcast_to(g2, shape)
        g_v[0, 0] = np.broadcast_to(h3, shape)
        g_v[1, 1] = np.broadcast_to(h4, shape)
        return cls(chart, g_h, g_v, det_floor)

    def inverse_h(self) -> np.ndarray:
        return _invert_block(self.g_h, self.det_floor, "horizontal")

    def inverse_v(self) -> np.ndarray:
        return _invert_block(self.g_v, self.det_floor, "vertical")

    def full(self) -> np.ndarray:
        g = np.zeros((DIM, DIM) + self.chart.shape)
        g[:2, :2] = self.g_h
        g[2:, 2:] = self.g_v
        return g

    def full_inverse(self) -> np.ndarray:
        g = np.zeros((DIM, DIM) + self.chart.shape)
        g[:2, :2] = self.inverse_h()
        g[2:, 2:] = self.inverse_v()
        return g


@dataclass(frozen=True)
class DConnection:
    """Coefficient families of a distinguished connection."""

    chart: ChartSplit
    L_h: np.ndarray  # L^i_(jk)
    L_v: np.ndarray  # L^a_(bk)
    C_h: np.ndarray  # C^i_(jc)
    C_v: np.ndarray  # C^a_(bc)

    def full(self) -> np.ndarray:
        """Gamma^tau_(beta gamma); the splitting-breaking families are zero."""
        gam = np.zeros((DIM, DIM, DIM) + self.chart.shape)
        gam[:2, :2, :2] = self.L_h
        gam[2:, 2:, :2] = self.L_v
        gam[:2, :2, 2:] = self.C_h
        gam[2:, 2:, 2:] = self.C_v
        return gam


def nonholonomy(N: NConnectionField) -> tuple[np.ndarray, np.ndarray]:
    """Structure coefficients W^gamma_(alpha beta) and the curvature Omega.

    W is stored with the sign produced by the bracket itself,
    [e_alpha, e_beta] = W^gamma_(alpha beta) e_gamma, and
    Omega[a, j, i] = W^a_(ij), so that the canonical torsion satisfies
    T^a_(ji) = Omega^a_(ji).
    """
    chart = N.chart
    shape = chart.shape
    w = np.zeros((DIM, DIM, DIM) + shape)
    # e_i N^a_j for all horizontal directions
    eN = np.stack(
        [frame_derivative(chart, N, N.coeffs, i) for i in range(HDIM)]
    )  # (i, a, j, S)
    dN = np.stack(
        [chart_partial(chart, N.coeffs, HDIM + b) for b in range(VDIM)]
    )  # (b, a, i, S)
    omega = np.zeros((VDIM, HDIM, HDIM) + shape)
    for a in range(VDIM):
        for i in range(HDIM):
            for j in range(HDIM):
                # [e_i, e_j] = (e_j N^a_i - e_i N^a_j) d_a
                w[HDIM + a, i, j] = eN[j, a, i] - eN[i, a, j]
                omega[a, j, i] = w[HDIM + a, i, j]
            for b in range(VDIM):
                # [e_i, d_b] = (d_b N^a_i) d_a
                w[HDIM + a, i, HDIM + b] = dN[b, a, i]
                w[HDIM + a, HDIM + b, i] = -dN[b, a, i]
    return w, omega


def canonical_dconnection(g: DMetric, N: NConnectionField) -> DConnection:
    """Metric-compatible d-connection with torsion confined to mixed blocks.

    Standard adapted coefficients with every partial derivative replaced by
    the left Caputo operators of the chart.
    """
    chart = g.chart
    inv_h = g.inverse_h()
    inv_v = g.inverse_v()

    eg_h = np.stack([frame_derivative(chart, N, g.g_h, mu) for mu in range(DIM)])
    eg_v = np.stack([frame_derivative(chart, N, g.g_v, mu) for mu in range(DIM)])
    dN = np.stack([chart_partial(chart, N.coeffs, HDIM + b) for b in range(VDIM)])

    # L^i_(jk) = 1/2 g^(ir) (e_k g_(jr) + e_j g_(kr) - e_r g_(jk))
    hh = eg_h[:2]
    t = np.swapaxes(hh, 0, 1) + hh - np.moveaxis(hh, 0, 2)
    l_h = 0.5 * np.einsum("ir...,jkr...->ijk...", inv_h, t)

    # L^a_(bk) = d_b N^a_k + 1/2 g^(ac) (e_k g_(bc) - g_(dc) d_b N^d_k - g_(db) d_c N^d_k)
    u = (
        np.moveaxis(eg_v[:2], 0, 2)
        - np.einsum("dc...,bdk...->bck...", g.g_v, dN)
        - np.einsum("db...,cdk...->bck...", g.g_v, dN)
    )
    l_v = np.swapaxes(dN, 0, 1) + 0.5 * np.einsum("ac...,bck...->abk...", inv_v, u)

    # C^i_(jc) = 1/2 g^(ik) d_c g_(jk)
    dgh_v = eg_h[2:]
    c_h = 0.5 * np.einsum("ik...,cjk...->ijc...", inv_h, dgh_v)

    # C^a_(bc) = 1/2 g^(ad) (d_c g_(bd) + d_b g_(cd) - d_d g_(bc))
    dgv_v = eg_v[2:]
    v = np.swapaxes(dgv_v, 0, 1) + dgv_v - np.moveaxis(dgv_v, 0, 2)
    c_v = 0.5 * np.einsum("ad...,bcd...->abc...", inv_v, v)

    return DConnection(chart, l_h, l_v, c_h, c_v)


def torsion(conn: DConnection, N: NConnectionField) -> np.ndarray:
    """T^tau_(gamma delta) = Gamma^tau_(delta gamma) - Gamma^tau_(gamma delta) - W^tau_(gamma delta)."""
    gam = conn.full()
    w, _ = nonholonomy(N)
    return np.einsum("tdg...->tgd...", gam) - gam - w


def curvature(conn: DConnection, N: NConnectionField) -> np.ndarray:
    """Curvature components R^tau_(beta gamma delta), antisymmetric in (gamma, delta)."""
    chart = conn.chart
    shape = chart.shape
    gam = conn.full()
    w, _ = nonholonomy(N)
    flat = gam.reshape((DIM * DIM * DIM,) + shape)
    dgam = np.stack([frame_derivative(chart, N, flat, mu) for mu in range(DIM)])
    dgam = dgam.reshape((DIM, DIM, DIM, DIM) + shape)  # [mu, tau, beta, delta]

    r = np.zeros((DIM, DIM, DIM, DIM) + shape)
    for gidx in range(DIM):
        for didx in range(gidx + 1, DIM):
            a = dgam[gidx, :, :, didx] - dgam[didx, :, :, gidx]
            a = a + np.einsum("mb...,tm...->tb...", gam[:, :, didx], gam[:, :, gidx])
            a = a - np.einsum("mb...,tm...->tb...", gam[:, :, gidx], gam[:, :, didx])
            a = a - np.einsum("m...,tbm...->tb...", w[:, gidx, didx], gam)
            r[:, :, gidx, didx] = a
            r[:, :, didx, gidx] = -a
    return r


def ricci(r: np.ndarray) -> np.ndarray:
    """Ricci blocks by the last-slot contraction Ric_(bg) = R^t_(bgt)."""
    return np.einsum("tbgt...->bg...", r)


def scalar_curvature(ric: np.ndarray, g: DMetric) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (sR, horizontal trace R, vertical trace S)."""
    r_h = np.einsum("ij...,ij...->...", g.inverse_h(), ric[:2, :2])
    s_v = np.einsum("ab...,ab...->...", g.inverse_v(), ric[2:, 2:])
    return r_h + s_v, r_h, s_v


def einstein_tensor(ric: np.ndarray, s_r: np.ndarray, g: DMetric) -> np.ndarray:
    """G_(ab) = Ric_(ab) - 1/2 g_(ab) sR on the adapted basis."""
    return ric - 0.5 * g.full() * s_r


def mixed_components(tensor: np.ndarray, g: DMetric) -> np.ndarray:
    """Raise the first index with the block-diagonal inverse metric."""
    return np.einsum("am...,mb...->ab...", g.full_inverse(), tensor)


def metric_compatibility_residual(
    conn: DConnection, g: DMetric, N: NConnectionField
) -> float:
    """Max-norm of the covariant derivative of the metric over all directions."""
    chart = conn.chart
    gam = conn.full()
    gfull = g.full()
    worst = 0.0
    flat = gfull.reshape((DIM * DIM,) + chart.shape)
    for direction in range(DIM):
        dg = frame_derivative(chart, N, flat, direction).reshape(gfull.shape)
        dg = dg - np.einsum("ma...,mb...->ab...", gam[:, :, direction], gfull)
        dg = dg - np.einsum("mb...,ma...->ab...", gam[:, :, direction], gfull)
        worst = max(worst, float(np.max(np.abs(dg))))
    return worst


@dataclass(frozen=True)
class ConstraintReport:
    """Residuals of a constraint family set against one tolerance."""

    tolerance: float
    residuals: dict[str, float]

    @property
    def passed(self) -> bool:
        return all(v <= self.tolerance for v in self.residuals.values())

    def failing(self) -> list[str]:
        return [k for k, v in self.residuals.items() if v > self.tolerance]


def check_lc_constraints(
    conn: DConnection, N: NConnectionField, tolerance: float = 1e-8
) -> ConstraintReport:
    """Residuals of the torsion-free restriction of the canonical connection.

    Families: L^c_(aj) = d_a N^c_j, C^i_(jb) = 0, Omega^a_(ji) = 0.
    """
    chart = conn.chart
    dN = np.stack([chart_partial(chart, N.coeffs, HDIM + b) for b in range(VDIM)])
    res_l = float(np.max(np.abs(conn.L_v - np.swapaxes(dN, 0, 1))))
    res_c = float(np.max(np.abs(conn.C_h)))
    _, omega = nonholonomy(N)
    res_o = float(np.max(np.abs(omega)))
    return ConstraintReport(
        tolerance,
        {"L_v_matches_dN": res_l, "C_h_zero": res_c, "Omega_zero": res_o},
    )


@dataclass(frozen=True)
class CurvatureStack:
    """Everything derived from one (metric, N-connection) pair."""

    chart: ChartSplit
    torsion: np.ndarray
    curvature: np.ndarray
    ricci: np.ndarray
    scalar: np.ndarray
    scalar_h: np.ndarray
    scalar_v: np.ndarray
    einstein: np.ndarray
    einstein_mixed: np.ndarray
    nonholonomy_w: np.ndarray
    omega: np.ndarray


def full_stack(g: DMetric, N: NConnectionField) -> CurvatureStack:
    """Run connection -> torsion -> curvature -> Ricci -> Einstein."""
    conn = canonical_dconnection(g, N)
    w, omega = nonholonomy(N)
    tor = torsion(conn, N)
    r = curvature(conn, N)
    ric = ricci(r)
    s_r, r_h, s_v = scalar_curvature(ric, g)
    g_ein = einstein_tensor(ric, s_r, g)
    g_mixed = mixed_components(g_ein, g)
    return CurvatureStack(
        chart=g.chart,
        torsion=tor,
        curvature=r,
        ricci=ric,
        scalar=s_r,
        scalar_h=r_h,
        scalar_v=s_v,
        einstein=g_ein,
        einstein_mixed=g_mixed,
        nonholonomy_w=w,
        omega=omega,
    )
