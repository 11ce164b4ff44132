"""Grid quadrature for the history-dependent derivative and integral operators.

The left derivative of order alpha in (0, 1) is discretised with the L1
product rule: the sampled function is treated as piecewise linear and the
weakly singular kernel is integrated exactly against it.  The companion
integral operator uses the matching product-trapezoid weights.  Both
reduce, at alpha = 1, to classical second-order stencils (central
differences, cumulative trapezoid).

Two conventions are fixed here and relied on everywhere else:

* the value of the left derivative at the first node is 0 (the empty
  history limit of the L1 sum);
* the right derivative keeps the (-d/dx)^s sign of its definition, so at
  alpha = 1 it returns minus the classical derivative.

All operators are linear in the samples and annihilate constants exactly,
because they act on consecutive differences.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import toeplitz
from scipy.special import gamma

from .grids import FracOrder, Grid1D, GridError, GridFunction

__all__ = [
    "caputo_left",
    "caputo_right",
    "rl_integral",
    "caputo_partial",
    "rl_partial",
    "caputo_axis",
    "rl_axis",
    "check_fundamental",
    "FracBasisScale",
]


def _l1_weights(n: int, alpha: float) -> np.ndarray:
    """b_j = (j+1)^(1-alpha) - j^(1-alpha), j = 0..n-2."""
    j = np.arange(n - 1, dtype=float)
    return (j + 1.0) ** (1.0 - alpha) - j ** (1.0 - alpha)


@lru_cache(maxsize=128)
def _central_matrix(n: int, h: float) -> np.ndarray:
    """Classical first derivative, O(h^2): central interior, one-sided ends."""
    m = np.zeros((n, n))
    inv = 1.0 / (2.0 * h)
    for i in range(1, n - 1):
        m[i, i - 1] = -inv
        m[i, i + 1] = inv
    m[0, 0:3] = np.array([-3.0, 4.0, -1.0]) * inv
    m[n - 1, n - 3 : n] = np.array([1.0, -4.0, 3.0]) * inv
    return m


@lru_cache(maxsize=128)
def _l1_matrix(n: int, h: float, alpha: float) -> np.ndarray:
    """(n, n-1) matrix mapping consecutive differences to L1 values."""
    b = _l1_weights(n, alpha)
    col = np.concatenate(([0.0], b))
    mat = toeplitz(col, np.zeros(n - 1))
    return mat * (h ** (-alpha) / gamma(2.0 - alpha))


def _rl_kernel(n: int, alpha: float) -> np.ndarray:
    """Interior product-trapezoid weights K_m, m = 0..n-1 (K_0 = 1)."""
    m = np.arange(n, dtype=float)
    k = np.empty(n)
    k[0] = 1.0
    mm = m[1:]
    k[1:] = (mm + 1.0) ** (alpha + 1.0) - 2.0 * mm ** (alpha + 1.0) + (mm - 1.0) ** (
        alpha + 1.0
    )
    return k


def _rl_left_weight(n: int, alpha: float) -> np.ndarray:
    """Weight of the first sample, c_{0,m} for m = 0..n-1 (m = 0 unused)."""
    m = np.arange(n, dtype=float)
    with np.errstate(invalid="ignore"):
        c = (m - 1.0) ** (alpha + 1.0) - m ** alpha * (m - alpha - 1.0)
    c[0] = 0.0
    return c


@lru_cache(maxsize=128)
def _rl_matrix(n: int, h: float, alpha: float) -> np.ndarray:
    k = _rl_kernel(n, alpha)
    mat = np.tril(toeplitz(k, np.zeros(n)))
    mat[:, 0] = _rl_left_weight(n, alpha)
    mat[0, :] = 0.0
    return mat * (h ** alpha / gamma(alpha + 2.0))


def _as_1d(f: GridFunction) -> tuple[np.ndarray, Grid1D]:
    if f.ndim != 1:
        raise GridError("this operator takes a 1-D grid function; use the axis form")
    return f.values, f.axes[0]


def caputo_left(f: GridFunction, order: FracOrder) -> GridFunction:
    """Left derivative of order alpha with terminal at the grid's lower end.

    For alpha < 1 this is the L1 sum; node 0 is the empty-history limit 0.
    At alpha = 1 it is the classical O(h^2) derivative at every node.
    """
    vals, grid = _as_1d(f)
    a = order.alpha
    n = grid.n_nodes
    h = grid.spacing
    if order.is_classical:
        return f.copy_with(_central_matrix(n, h) @ vals)
    d = np.diff(vals)
    conv = np.convolve(_l1_weights(n, a), d)[: n - 1]
    out = np.zeros(n)
    out[1:] = conv * (h ** (-a) / gamma(2.0 - a))
    return f.copy_with(out)


def caputo_right(f: GridFunction, order: FracOrder) -> GridFunction:
    """Right derivative with terminal at the grid's upper end.

    Carries the (-d/dx)^s sign of the defining kernel, so the alpha -> 1
    limit is minus the classical derivative; the last node is the
    empty-history limit 0 for alpha < 1.
    """
    vals, grid = _as_1d(f)
    a = order.alpha
    n = grid.n_nodes
    h = grid.spacing
    if order.is_classical:
        return f.copy_with(-(_central_matrix(n, h) @ vals))
    d = np.diff(vals)
    conv = np.convolve(_l1_weights(n, a), d[::-1])[: n - 1]
    out = np.zeros(n)
    out[: n - 1] = -conv[::-1] * (h ** (-a) / gamma(2.0 - a))
    return f.copy_with(out)


def rl_integral(f: GridFunction, order: FracOrder) -> GridFunction:
    """Fractional integral of order alpha from the lower terminal.

    Product-trapezoid weights, exact for piecewise-linear samples; at
    alpha = 1 they coincide with the cumulative trapezoid rule.  Node 0 is
    exactly 0.
    """
    vals, grid = _as_1d(f)
    a = order.alpha
    n = grid.n_nodes
    h = grid.spacing
    k = _rl_kernel(n, a)
    s = np.convolve(k, vals)[:n]
    s += (_rl_left_weight(n, a) - k) * vals[0]
    out = s * (h ** a / gamma(a + 2.0))
    out[0] = 0.0
    return f.copy_with(out)


def caputo_axis(values: np.ndarray, axis: int, alpha: float, h: float) -> np.ndarray:
    """Left derivative along one axis of a (possibly batched) array.

    ``axis`` indexes ``values`` directly, so batched tensors with leading
    component axes pass the absolute position of the grid axis.
    """
    n = values.shape[axis]
    if alpha == 1.0:
        w = _central_matrix(n, h)
        out = np.tensordot(w, np.moveaxis(values, axis, 0), axes=(1, 0))
    else:
        moved = np.moveaxis(values, axis, 0)
        d = np.diff(moved, axis=0)
        out = np.tensordot(_l1_matrix(n, h, alpha), d, axes=(1, 0))
    return np.moveaxis(out, 0, axis)


def rl_axis(values: np.ndarray, axis: int, alpha: float, h: float) -> np.ndarray:
    """Fractional integral along one axis of a (possibly batched) array."""
    n = values.shape[axis]
    mat = _rl_matrix(n, h, alpha)
    out = np.tensordot(mat, np.moveaxis(values, axis, 0), axes=(1, 0))
    return np.moveaxis(out, 0, axis)


def caputo_partial(f: GridFunction, axis: int, order: FracOrder) -> GridFunction:
    """Left derivative along the named axis of a multi-axis grid function.

    Realises the dot (axis x1), prime (axis x2) and star (axis v)
    derivatives used by the solution pipeline.
    """
    if not 0 <= axis < f.ndim:
        raise GridError(f"axis {axis} out of range for {f.ndim}-D grid function")
    g = f.axes[axis]
    return f.copy_with(caputo_axis(f.values, axis, order.alpha, g.spacing))


def rl_partial(f: GridFunction, axis: int, order: FracOrder) -> GridFunction:
    """Fractional integral along the named axis of a multi-axis grid function."""
    if not 0 <= axis < f.ndim:
        raise GridError(f"axis {axis} out of range for {f.ndim}-D grid function")
    g = f.axes[axis]
    return f.copy_with(rl_axis(f.values, axis, order.alpha, g.spacing))


def check_fundamental(f: GridFunction, order: FracOrder) -> tuple[float, float]:
    """Max-norm residuals of the two composition identities.

    residual_a: derivative of the integral minus the function.
    residual_b: integral of the derivative minus (function - left value).
    Both are reported, not thresholded; they shrink under refinement for
    smooth samples.
    """
    vals, _ = _as_1d(f)
    da = caputo_left(rl_integral(f, order), order).values - vals
    db = rl_integral(caputo_left(f, order), order).values - (vals - vals[0])
    return float(np.max(np.abs(da))), float(np.max(np.abs(db)))


@dataclass(frozen=True)
class FracBasisScale:
    """Per-node co-basis scale factors (x - lower)^(1-alpha) / Gamma(2-alpha).

    The lower terminal is taken from the grid, which extends the stated
    zero-terminal form to shifted intervals.  At alpha = 1 every factor is
    exactly 1.
    """

    order: FracOrder
    grid: Grid1D

    def factors(self) -> np.ndarray:
        a = self.order.alpha
        x = self.grid.nodes() - self.grid.lower
        return x ** (1.0 - a) / gamma(2.0 - a)
