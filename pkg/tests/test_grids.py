import numpy as np
import pytest
from hypothesis import given, strategies as st

from fracgeo.fracops import FracBasisScale
from fracgeo.grids import ChartSplit, FracOrder, Grid1D, GridError, GridFunction


def test_frac_order_range():
    assert FracOrder(0.5).alpha == 0.5
    assert FracOrder(1.0).is_classical
    assert FracOrder(0.3).s == 1
    for bad in (0.0, -0.1, 1.0001, float("nan"), float("inf")):
        with pytest.raises(GridError):
            FracOrder(bad)


def test_grid1d_basics():
    g = Grid1D(0.0, 1.0, 11)
    assert g.spacing == pytest.approx(0.1)
    x = g.nodes()
    assert x[0] == 0.0 and x[-1] == 1.0
    assert np.allclose(np.diff(x), g.spacing)
    fine = g.refined()
    assert fine.n_nodes == 21
    assert fine.spacing == pytest.approx(g.spacing / 2)


def test_grid1d_rejects():
    with pytest.raises(GridError):
        Grid1D(0.0, 1.0, 2)
    with pytest.raises(GridError):
        Grid1D(1.0, 1.0, 5)
    with pytest.raises(GridError):
        Grid1D(2.0, 1.0, 5)
    with pytest.raises(GridError):
        Grid1D(0.0, float("inf"), 5)


@given(
    lower=st.floats(-5, 5),
    span=st.floats(0.1, 10),
    n=st.integers(3, 200),
)
def test_grid1d_nodes_uniform(lower, span, n):
    g = Grid1D(lower, lower + span, n)
    x = g.nodes()
    k = np.arange(n)
    assert np.allclose(x, lower + k * g.spacing, rtol=0, atol=1e-12 * max(1, abs(lower) + span))


def test_grid_function_validation():
    g = Grid1D(0, 1, 5)
    with pytest.raises(GridError):
        GridFunction(g, np.zeros(4))
    with pytest.raises(GridError):
        GridFunction(g, np.array([0.0, 1.0, np.nan, 0.0, 0.0]))
    f = GridFunction.sample(g, lambda x: x**2)
    assert f.values[-1] == pytest.approx(1.0)
    assert f.grid is g


def test_grid_function_multi_axis():
    gx = Grid1D(0, 1, 4)
    gv = Grid1D(0, 2, 5)
    f = GridFunction.sample((gx, gv), lambda x, v: x + v)
    assert f.values.shape == (4, 5)
    with pytest.raises(GridError):
        f.grid  # not 1-D


def test_chart_split_shapes():
    axes = tuple(Grid1D(0, 1, n) for n in (4, 5, 6, 3))
    orders = tuple(FracOrder(a) for a in (1.0, 1.0, 0.5, 1.0))
    chart = ChartSplit(axes, orders)
    assert chart.shape == (4, 5, 6, 3)
    assert chart.h_shape == (4, 5)
    assert chart.hv_shape == (4, 5, 6)
    x1, x2, v, y4 = chart.coords()
    assert x1.shape == (4, 1, 1, 1)
    assert v.shape == (1, 1, 6, 1)
    sampled = chart.sample(lambda a, b, c, d: a + c)
    assert sampled.shape == chart.shape
    assert sampled[1, 0, 2, 0] == pytest.approx(x1[1, 0, 0, 0] + v[0, 0, 2, 0])


@given(n=st.integers(3, 60), span=st.floats(0.5, 4.0))
def test_basis_scale_classical_is_unity(n, span):
    scale = FracBasisScale(FracOrder(1.0), Grid1D(0.25, 0.25 + span, n))
    assert np.all(scale.factors() == 1.0)


def test_basis_scale_fractional():
    from scipy.special import gamma

    g = Grid1D(0.5, 1.5, 5)
    s = FracBasisScale(FracOrder(0.25), g).factors()
    x = g.nodes() - 0.5
    assert s[0] == 0.0
    assert np.allclose(s, x**0.75 / gamma(1.75))
