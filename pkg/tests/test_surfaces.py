import numpy as np
import pytest

from normal_torsion.geometry import check_conformal, metric
from normal_torsion.surfaces import (
    SurfaceError,
    clifford_torus,
    complex_curve,
    lifted_complex_curve,
    list_surfaces,
    make_surface,
    plane_embed,
    scaled_graph,
)

CATALOG = [
    plane_embed(1),
    plane_embed(3),
    clifford_torus(),
    complex_curve(),
    complex_curve((0, 0.3, 1, 0.5)),
    lifted_complex_curve((0, 0.3, 1, 0.5)),
    scaled_graph(0.2, "u**2 - v**3", "sin(u*v)"),
]


@pytest.mark.parametrize("X", CATALOG, ids=lambda X: X.name)
def test_jet_shapes(X):
    u = np.linspace(-0.5, 0.5, 7)
    jet = X.jet(u, u[::-1])
    assert all(a.shape == (X.n + 2, 7) for a in jet)
    np.testing.assert_array_equal(X(u, u[::-1]), jet.X)


@pytest.mark.parametrize("X", CATALOG, ids=lambda X: X.name)
def test_jet_matches_finite_differences(X):
    rng = np.random.default_rng(3)
    u, v = rng.uniform(-0.6, 0.6, (2, 5))
    e = 1e-5
    jet = X.jet(u, v)
    np.testing.assert_allclose(jet.Xu, (X(u + e, v) - X(u - e, v)) / (2 * e), atol=1e-8)
    np.testing.assert_allclose(jet.Xv, (X(u, v + e) - X(u, v - e)) / (2 * e), atol=1e-8)
    du = lambda f: (f(u + e, v) - f(u - e, v)) / (2 * e)  # noqa: E731
    dv = lambda f: (f(u, v + e) - f(u, v - e)) / (2 * e)  # noqa: E731
    np.testing.assert_allclose(jet.Xuu, du(lambda a, b: X.jet(a, b).Xu), atol=1e-7)
    np.testing.assert_allclose(jet.Xuv, dv(lambda a, b: X.jet(a, b).Xu), atol=1e-7)
    np.testing.assert_allclose(jet.Xvv, dv(lambda a, b: X.jet(a, b).Xv), atol=1e-7)


@pytest.mark.parametrize("X", [x for x in CATALOG if x.conformal], ids=lambda X: X.name)
def test_conformal_entries(X, g33):
    rep = check_conformal(metric(X, g33), tol=1e-12)
    assert rep["conformal"], rep


def test_scaled_graph_is_not_conformal(g33):
    assert not check_conformal(metric(scaled_graph(0.3), g33))["conformal"]


def test_clifford_torus_lies_on_sphere():
    u = np.linspace(-1, 1, 11)
    np.testing.assert_allclose(np.sum(clifford_torus()(u, -u) ** 2, axis=0), 1.0)


def test_catalog_listing_and_factory():
    names = set(list_surfaces())
    assert {"plane_embed", "clifford_torus", "complex_curve", "lifted_complex_curve", "scaled_graph"} <= names
    X = make_surface("complex_curve", coeffs="0,0,1,0.5")
    assert X.params["coeffs"] == (0, 0, 1, 0.5)
    assert make_surface("plane_embed", n=4).n == 4


@pytest.mark.parametrize(
    "name, params",
    [
        ("nope", {}),
        ("plane_embed", {"n": 0}),
        ("plane_embed", {"n": 1.5}),
        ("complex_curve", {"coeffs": "0,0,0,0,1"}),
        ("complex_curve", {"bogus": 1}),
        ("scaled_graph", {"f1": "u + z"}),
        ("scaled_graph", {"eps": float("nan")}),
    ],
)
def test_surface_errors(name, params):
    with pytest.raises(SurfaceError):
        make_surface(name, **params)


def test_flat_flags():
    assert plane_embed().flat and clifford_torus().flat
    assert complex_curve((1, 2)).flat
    assert not complex_curve().flat
