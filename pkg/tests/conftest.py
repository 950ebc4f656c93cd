import numpy as np
import pytest

from normal_torsion.disc_grid import build_grid
from normal_torsion.functional import gauge_descent
from normal_torsion.geometry import initial_frame
from normal_torsion.surfaces import complex_curve, lifted_complex_curve


@pytest.fixture(scope="session")
def grids():
    cache = {}

    def get(M):
        if M not in cache:
            cache[M] = build_grid(M)
        return cache[M]

    return get


@pytest.fixture(scope="session")
def g33(grids):
    return grids(33)


@pytest.fixture(scope="session")
def g65(grids):
    return grids(65)


@pytest.fixture(scope="session")
def critical_complex_curve(g65):
    """Descent-critical frame of p(w) = w^2 at M = 65."""
    X = complex_curve()
    F, report = gauge_descent(X, initial_frame(X, g65), g65, tol=1e-4)
    return X, F, report


@pytest.fixture(scope="session")
def critical_lifted_curve(g65):
    X = lifted_complex_curve((0, 0.3, 1, 0.5))
    F, report = gauge_descent(X, initial_frame(X, g65), g65, tol=1e-4, max_iters=300)
    return X, F, report


def smooth_bump(grid, seed, amp=1.0):
    """Random smooth field a(u, v) from a low-degree trigonometric sum."""
    rng = np.random.default_rng(seed)
    c = rng.standard_normal((3, 3))
    out = np.zeros(grid.n_nodes)
    for j in range(3):
        for k in range(3):
            out += c[j, k] * np.cos(j * grid.u + k * grid.v + j * k)
    return amp * out / 9.0


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(RESULTS):
            terminalreporter.write_line(line)
