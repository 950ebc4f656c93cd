"""Catalog of analytic immersions B -> R^{n+2} with closed-form jets."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np


class Jet(NamedTuple):
    X: np.ndarray
    Xu: np.ndarray
    Xv: np.ndarray
    Xuu: np.ndarray
    Xuv: np.ndarray
    Xvv: np.ndarray


class SurfaceError(ValueError):
    pass


@dataclass(frozen=True)
class Immersion:
    """Immersion of the unit disc with second-order jets.

    ``jet_fn(u, v)`` returns six arrays of shape ``(n + 2,) + u.shape``.
    """

    name: str
    n: int
    jet_fn: Callable = field(repr=False)
    conformal: bool = True
    flat: bool = False
    params: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.n + 2

    def jet(self, u, v) -> Jet:
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        return Jet(*(np.asarray(a, dtype=float) for a in self.jet_fn(u, v)))

    def __call__(self, u, v):
        return self.jet(u, v).X


def _zeros(u, k):
    return [np.zeros_like(u) for _ in range(k)]


def plane_embed(n: int = 2) -> Immersion:
    if int(n) != n or n < 1:
        raise SurfaceError("plane_embed needs an integer n >= 1")
    n = int(n)

    def jet(u, v):
        z = _zeros(u, n)
        one, zero = np.ones_like(u), np.zeros_like(u)
        X = np.stack([u, v] + z)
        Xu = np.stack([one, zero] + z)
        Xv = np.stack([zero, one] + z)
        Z = np.zeros((n + 2,) + u.shape)
        return X, Xu, Xv, Z, Z.copy(), Z.copy()

    return Immersion("plane_embed", n, jet, conformal=True, flat=True, params={"n": n})


def clifford_torus() -> Immersion:
    """(cos u, sin u, cos v, sin v)/sqrt(2), using disc coordinates as angles."""
    c = 1.0 / np.sqrt(2.0)

    def jet(u, v):
        cu, su, cv, sv = np.cos(u), np.sin(u), np.cos(v), np.sin(v)
        z = np.zeros_like(u)
        X = c * np.stack([cu, su, cv, sv])
        Xu = c * np.stack([-su, cu, z, z])
        Xv = c * np.stack([z, z, -sv, cv])
        Xuu = c * np.stack([-cu, -su, z, z])
        Xuv = np.zeros_like(X)
        Xvv = c * np.stack([z, z, -cv, -sv])
        return X, Xu, Xv, Xuu, Xuv, Xvv

    return Immersion("clifford_torus", 2, jet, conformal=True, flat=True)



def _parse_coeffs(coeffs):
    if isinstance(coeffs, str):
        coeffs = [complex(c.strip().replace(" ", "")) for c in coeffs.split(",") if c.strip()]
    coeffs = [complex(c) for c in coeffs]
    while len(coeffs) > 1 and coeffs[-1] == 0:
        coeffs.pop()
    if len(coeffs) > 4:
        raise SurfaceError("complex_curve supports polynomials of degree <= 3")
    if len(coeffs) < 3 or all(c == 0 for c in coeffs[2:]):
        # p'' == 0 gives a plane; still a valid immersion
        pass
    return tuple(coeffs)


def _complex_curve_jet(coeffs, extra):
    p = np.polynomial.Polynomial(coeffs)
    dp, d2p = p.deriv(1), p.deriv(2)

    def jet(u, v):
        w = u + 1j * v
        pw, dpw, d2pw = p(w), dp(w), d2p(w)
        one, zero = np.ones_like(u), np.zeros_like(u)
        pad = _zeros(u, extra)
        X = np.stack([u, v, pw.real, pw.imag] + pad)
        Xu = np.stack([one, zero, dpw.real, dpw.imag] + pad)
        # d/dv p(w) = i p'(w)
        Xv = np.stack([zero, one, -dpw.imag, dpw.real] + pad)
        Xuu = np.stack([zero, zero, d2pw.real, d2pw.imag] + pad)
        Xuv = np.stack([zero, zero, -d2pw.imag, d2pw.real] + pad)
        Xvv = -Xuu
        return X, Xu, Xv, Xuu, Xuv, Xvv

    return jet


def complex_curve(coeffs=(0.0, 0.0, 1.0)) -> Immersion:
    """Graph (u, v, Re p(w), Im p(w)) of a complex polynomial p = sum c_k w^k."""
    coeffs = _parse_coeffs(coeffs)
    flat = len(coeffs) < 3
    return Immersion("complex_curve", 2, _complex_curve_jet(coeffs, 0), conformal=True, flat=flat,
                     params={"coeffs": coeffs})


def lifted_complex_curve(coeffs=(0.0, 0.0, 1.0)) -> Immersion:
    """complex_curve with an appended zero coordinate (codimension 3)."""
    coeffs = _parse_coeffs(coeffs)
    flat = len(coeffs) < 3
    return Immersion("lifted_complex_curve", 3, _complex_curve_jet(coeffs, 1), conformal=True, flat=flat,
                     params={"coeffs": coeffs})


def scaled_graph(eps: float = 0.1, f1: str = "u**2", f2: str = "0") -> Immersion:
    """(u, v, eps f1(u, v), eps f2(u, v)); f1, f2 are sympy expressions in u, v."""
    import sympy

    eps = float(eps)
    if not np.isfinite(eps):
        raise SurfaceError("eps must be finite")
    us, vs = sympy.symbols("u v", real=True)
    try:
        exprs = [sympy.sympify(f, locals={"u": us, "v": vs}) for f in (f1, f2)]
    except (sympy.SympifyError, TypeError) as exc:
        raise SurfaceError(f"cannot parse graph function: {exc}") from exc
    for e in exprs:
        if e.free_symbols - {us, vs}:
            raise SurfaceError(f"graph functions may only use u and v, got {e}")
    derivs = []
    for e in exprs:
        derivs.append([e, e.diff(us), e.diff(vs), e.diff(us, 2), e.diff(us, vs), e.diff(vs, 2)])
    fns = [[sympy.lambdify((us, vs), d, "numpy") for d in row] for row in derivs]

    def ev(f, u, v):
        return np.broadcast_to(np.asarray(f(u, v), dtype=float), u.shape) * eps

    def jet(u, v):
        one, zero = np.ones_like(u), np.zeros_like(u)
        g = [[ev(f, u, v) for f in row] for row in fns]
        X = np.stack([u, v, g[0][0], g[1][0]])
        Xu = np.stack([one, zero, g[0][1], g[1][1]])
        Xv = np.stack([zero, one, g[0][2], g[1][2]])
        Xuu = np.stack([zero, zero, g[0][3], g[1][3]])
        Xuv = np.stack([zero, zero, g[0][4], g[1][4]])
        Xvv = np.stack([zero, zero, g[0][5], g[1][5]])
        return X, Xu, Xv, Xuu, Xuv, Xvv

    return Immersion("scaled_graph", 2, jet, conformal=False, flat=False,
                     params={"eps": eps, "f1": str(f1), "f2": str(f2)})


SURFACES = {
    "plane_embed": (plane_embed, "X = (u, v, 0, ..., 0); params: n >= 1 (flat, conformal)"),
    "clifford_torus": (clifford_torus, "X = (cos u, sin u, cos v, sin v)/sqrt 2; n = 2 (flat, conformal)"),
    "complex_curve": (complex_curve, "X = (u, v, Re p, Im p); params: coeffs=c0,c1,c2[,c3] (n = 2, conformal)"),
    "lifted_complex_curve": (lifted_complex_curve, "complex_curve with a zero 5th coordinate; params: coeffs (n = 3)"),
    "scaled_graph": (scaled_graph, "X = (u, v, eps f1, eps f2); params: eps, f1, f2 (n = 2, not conformal)"),
}


def list_surfaces():
    return {name: doc for name, (_, doc) in SURFACES.items()}


def make_surface(name: str, **params) -> Immersion:
    try:
        factory, _ = SURFACES[name]
    except KeyError:
        raise SurfaceError(f"unknown surface {name!r}; known: {', '.join(SURFACES)}") from None
    import inspect

    allowed = set(inspect.signature(factory).parameters)
    unknown = set(params) - allowed
    if unknown:
        raise SurfaceError(f"surface {name!r} does not take parameters {sorted(unknown)}")
    return factory(**params)
