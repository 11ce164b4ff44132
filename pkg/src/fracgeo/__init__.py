"""fracgeo: grid-based fractional calculus and nonholonomic frame geometry.

Subpackages by task: ``fracops`` (history-dependent derivative/integral
quadrature), ``mlf`` (Mittag-Leffler), ``geometry`` (adapted frames,
canonical connection, curvature stack), ``solutions`` (coefficient
generation and residual verification), ``flows`` (curve-flow
integrators), ``cli`` (configuration-driven front end).
"""

from .grids import ChartSplit, FracOrder, Grid1D, GridError, GridFunction

__all__ = ["ChartSplit", "FracOrder", "Grid1D", "GridError", "GridFunction"]

__version__ = "0.1.0"
