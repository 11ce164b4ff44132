"""Uniform grids, fractional orders, and sampled grid functions.

Everything downstream works on uniform tensor-product grids.  A
:class:`Grid1D` carries the lower/upper terminals of the fractional
operators together with the node count; :class:`GridFunction` is a bundle
of one value per node.  The four-axis chart used by the geometry and
solution modules is :class:`ChartSplit`, which fixes the 2+2 splitting
into horizontal coordinates (x1, x2) and vertical ones (v, y4).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "GridError",
    "FracOrder",
    "Grid1D",
    "GridFunction",
    "ChartSplit",
    "AXIS_LABELS",
]

AXIS_LABELS = ("x1", "x2", "v", "y4")


class GridError(ValueError):
    """Invalid grid, order, or sampled-value data."""


@dataclass(frozen=True)
class FracOrder:
    """Differentiation order alpha restricted to (0, 1].

    The integer ceiling ``s`` is 1 on the whole supported range; at
    ``alpha == 1`` every operator built from this order degenerates to its
    classical counterpart.
    """

    alpha: float

    def __post_init__(self) -> None:
        if not isinstance(self.alpha, (int, float)) or not math.isfinite(self.alpha):
            raise GridError(f"order must be a finite real, got {self.alpha!r}")
        if not 0.0 < float(self.alpha) <= 1.0:
            raise GridError(f"order must lie in (0, 1], got {self.alpha}")
        object.__setattr__(self, "alpha", float(self.alpha))

    @property
    def s(self) -> int:
        return 1

    @property
    def is_classical(self) -> bool:
        return self.alpha == 1.0


@dataclass(frozen=True)
class Grid1D:
    """Uniform grid on [lower, upper] with nodes x_k = lower + k*h.

    ``lower`` doubles as the left terminal of the history-dependent
    operators and ``upper`` as the right one.
    """

    lower: float
    upper: float
    n_nodes: int

    def __post_init__(self) -> None:
        if not (math.isfinite(self.lower) and math.isfinite(self.upper)):
            raise GridError("grid terminals must be finite")
        if self.upper <= self.lower:
            raise GridError(
                f"upper terminal must exceed lower, got [{self.lower}, {self.upper}]"
            )
        if int(self.n_nodes) != self.n_nodes or self.n_nodes < 3:
            raise GridError(f"need at least 3 nodes, got {self.n_nodes}")
        object.__setattr__(self, "lower", float(self.lower))
        object.__setattr__(self, "upper", float(self.upper))
        object.__setattr__(self, "n_nodes", int(self.n_nodes))

    @property
    def spacing(self) -> float:
        return (self.upper - self.lower) / (self.n_nodes - 1)

    @property
    def span(self) -> float:
        return self.upper - self.lower

    def nodes(self) -> np.ndarray:
        return np.linspace(self.lower, self.upper, self.n_nodes)

    def refined(self) -> "Grid1D":
        """Same interval with halved spacing (n -> 2n - 1)."""
        return Grid1D(self.lower, self.upper, 2 * self.n_nodes - 1)


class GridFunction:
    """Real samples of a function on a Grid1D or a tensor product of them."""

    def __init__(self, axes: Grid1D | Sequence[Grid1D], values: np.ndarray):
        if isinstance(axes, Grid1D):
            axes = (axes,)
        axes = tuple(axes)
        if not axes or len(axes) > 4:
            raise GridError("a grid function needs 1 to 4 axes")
        values = np.asarray(values, dtype=float)
        expected = tuple(ax.n_nodes for ax in axes)
        if values.shape != expected:
            raise GridError(
                f"value shape {values.shape} does not match grid shape {expected}"
            )
        if not np.all(np.isfinite(values)):
            raise GridError("grid-function values must all be finite")
        self.axes = axes
        self.values = values

    @property
    def grid(self) -> Grid1D:
        """The single axis of a 1-D grid function."""
        if len(self.axes) != 1:
            raise GridError("grid property is only defined for 1-D grid functions")
        return self.axes[0]

    @property
    def ndim(self) -> int:
        return len(self.axes)

    @classmethod
    def sample(
        cls, axes: Grid1D | Sequence[Grid1D], fn: Callable[..., np.ndarray]
    ) -> "GridFunction":
        """Sample ``fn(x1, ..., xk)`` on the tensor-product nodes."""
        if isinstance(axes, Grid1D):
            axes = (axes,)
        mesh = np.meshgrid(*(ax.nodes() for ax in axes), indexing="ij")
        vals = np.asarray(fn(*mesh), dtype=float)
        vals = np.broadcast_to(vals, tuple(ax.n_nodes for ax in axes)).copy()
        return cls(axes, vals)

    def copy_with(self, values: np.ndarray) -> "GridFunction":
        return GridFunction(self.axes, values)


@dataclass(frozen=True)
class ChartSplit:
    """2+2 coordinate chart (x1, x2 | v, y4) with per-axis orders.

    Horizontal indices i, j, k run over axes 0..1, vertical indices a, b, c
    over axes 2..3.  The vertical coordinate v (axis 2) is the integration
    variable of the solution pipeline.
    """

    axes: tuple[Grid1D, Grid1D, Grid1D, Grid1D]
    orders: tuple[FracOrder, FracOrder, FracOrder, FracOrder]

    N_H = 2
    N_V = 2
    DIM = 4

    def __post_init__(self) -> None:
        if len(self.axes) != 4 or len(self.orders) != 4:
            raise GridError("chart needs exactly 4 axes and 4 orders")
        for ax in self.axes:
            if not isinstance(ax, Grid1D):
                raise GridError("chart axes must be Grid1D instances")
        for o in self.orders:
            if not isinstance(o, FracOrder):
                raise GridError("chart orders must be FracOrder instances")

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return tuple(ax.n_nodes for ax in self.axes)  # type: ignore[return-value]

    @property
    def h_shape(self) -> tuple[int, int]:
        return (self.axes[0].n_nodes, self.axes[1].n_nodes)

    @property
    def hv_shape(self) -> tuple[int, int, int]:
        return (self.axes[0].n_nodes, self.axes[1].n_nodes, self.axes[2].n_nodes)

    def coords(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Node coordinates broadcastable against the chart shape."""
        out = []
        for k, ax in enumerate(self.axes):
            shape = [1, 1, 1, 1]
            shape[k] = ax.n_nodes
            out.append(ax.nodes().reshape(shape))
        return tuple(out)  # type: ignore[return-value]

    def meshgrid(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*(ax.nodes() for ax in self.axes), indexing="ij"))

    def sample(self, fn: Callable[..., np.ndarray]) -> np.ndarray:
        """Sample a callable of (x1, x2, v, y4) on the full chart."""
        x1, x2, v, y4 = self.coords()
        vals = np.asarray(fn(x1, x2, v, y4), dtype=float)
        return np.broadcast_to(vals, self.shape).copy()

    def with_axis(self, index: int, grid: Grid1D) -> "ChartSplit":
        axes = list(self.axes)
        axes[index] = grid
        return ChartSplit(tuple(axes), self.orders)
