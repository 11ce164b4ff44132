import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def fit_order(errors, sizes):
    """Least-squares slope of log(err) against log(1/n)."""
    e = np.asarray(errors, dtype=float)
    n = np.asarray(sizes, dtype=float)
    e = np.maximum(e, 1e-300)
    a = np.vstack([np.log(1.0 / n), np.ones_like(n)]).T
    slope, _ = np.linalg.lstsq(a, np.log(e), rcond=None)[0]
    return float(slope)
