"""Potentials g^(st), the Grassmann-type system Lap G = -dG + S, and its checks."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .disc_grid import (
    DiscGrid,
    extrapolate,
    gradient,
    integrate,
    integrate_boundary,
    laplacian,
    solve_poisson,
)
from .geometry import n_from_pairs, pairs, to_skew, to_vector


class SmallnessViolation(RuntimeError):
    """Picard iterates left the small-solution regime."""

    def __init__(self, message, history):
        super().__init__(message)
        self.history = history


def _l2(grid, f):
    """L2 norm over the disc of a (N, k) or (k,) field, summed over components."""
    f = np.asarray(f)
    return float(np.sqrt(np.sum(integrate(grid, np.abs(f) ** 2))))


@dataclass
class Potentials:
    G: np.ndarray  # (N, k)
    consistency: np.ndarray  # per pair ||grad g - (-T_2, T_1)||_2
    warning: str | None = None


def build_potentials(T, grid: DiscGrid, el_residual_total=None) -> Potentials:
    """Solve Lap g = d_v T_1 - d_u T_2, g = 0 on the circle, for every pair s < t.

    ``consistency`` measures how far grad g is from (-T_2, T_1); it vanishes
    exactly only for critical frames.  A warning is attached when it exceeds
    ten times ``el_residual_total`` (if given).
    """
    n = T.shape[1]
    T1, T2 = to_vector(T[0]), to_vector(T[1])
    _, dv_T1 = gradient(grid, T1)
    du_T2, _ = gradient(grid, T2)
    G = solve_poisson(grid, dv_T1 - du_T2, 0.0)
    gu, gv = gradient(grid, G, 0.0)
    cons = np.array([_l2(grid, np.stack([gu[m] + T2[m], gv[m] - T1[m]])) for m in range(len(G))])
    warning = None
    if el_residual_total is not None and cons.size and cons.max() > 10.0 * el_residual_total:
        warning = (
            f"potential consistency {cons.max():.3e} exceeds 10x the Euler-Lagrange "
            f"residual {el_residual_total:.3e}; the frame is probably not critical"
        )
    if n < 2:
        G = np.zeros((0, grid.n_nodes))
    return Potentials(G, cons, warning)


def delta_g(G, grid: DiscGrid, trace=0.0):
    """dg^(st) = sum_w det(grad g^(sw), grad g^(wt)) = [G_u, G_v]_st."""
    G = np.asarray(G, dtype=float)
    n = n_from_pairs(len(G))
    if n < 3:
        return np.zeros_like(G)
    gu, gv = gradient(grid, G, trace)
    Gu, Gv = to_skew(gu, n), to_skew(gv, n)
    comm = np.einsum("swk,wtk->stk", Gu, Gv) - np.einsum("swk,wtk->stk", Gv, Gu)
    return to_vector(comm)


def system_residual(G, S, grid: DiscGrid, trace=None):
    """||Lap G + dG - S||_2 over the disc plus the boundary L2 norm of the trace of G.

    G is stored at interior nodes with zero boundary trace unless ``trace``
    (shape (N, n_cuts)) is given.
    """
    G = np.asarray(G, dtype=float)
    tr = np.zeros(G.shape[:-1] + (grid.n_cuts,)) if trace is None else np.asarray(trace, dtype=float)
    r = laplacian(grid, G, tr) + delta_g(G, grid, tr) - S
    boundary = float(np.sqrt(np.sum(integrate_boundary(grid, tr**2))))
    return _l2(grid, r) + boundary


def sup_norm(G):
    """max over nodes of the Euclidean norm |G| of the Grassmann-type vector."""
    G = np.asarray(G)
    return float(np.sqrt(np.sum(G**2, axis=0)).max()) if G.size else 0.0


def gradient_energy(G, grid: DiscGrid):
    """||grad G||_2^2 = sum over components of int |grad g|^2."""
    G = np.asarray(G, dtype=float)
    if not G.size:
        return 0.0
    gu, gv = gradient(grid, G, 0.0)
    return float(np.sum(integrate(grid, gu**2 + gv**2)))


@dataclass
class SystemReport:
    iterations: int = 0
    converged: bool = False
    sup_differences: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    sup_norms: list = field(default_factory=list)
    contraction_ratios: list = field(default_factory=list)
    contraction: float | None = None
    apriori_bound: float | None = None
    smallness: dict | None = None

    def to_dict(self):
        return {
            "iterations": self.iterations,
            "converged": self.converged,
            "sup_differences": self.sup_differences,
            "residuals": self.residuals,
            "sup_norms": self.sup_norms,
            "contraction_ratios": self.contraction_ratios,
            "contraction": self.contraction,
            "apriori_bound": self.apriori_bound,
            "smallness": self.smallness,
        }


def solve_system(S, grid: DiscGrid, max_picard=500, tol=1e-10):
    """Picard iteration G_{k+1} = Lap^{-1}(-dG_k + S), zero trace, from G_0 = 0.

    Stops when the sup-norm change drops below ``tol``, or as soon as the
    nonlinearity dG is unchanged between iterates (then the next iterate would
    repeat the current one; this is the case for n = 2 and for S = 0).
    """
    from .bounds import smallness_condition

    S = np.asarray(S, dtype=float)
    N = len(S)
    n = n_from_pairs(N)
    s_sup = sup_norm(S)
    blowup = 10.0 * (np.sqrt(N) / 4.0) * s_sup + 10.0
    report = SystemReport()
    G = np.zeros_like(S)
    dG = np.zeros_like(S)
    history = []
    for k in range(1, max_picard + 1):
        G_new = solve_poisson(grid, S - dG, 0.0)
        dG_new = delta_g(G_new, grid)
        diff = float(np.abs(G_new - G).max()) if G.size else 0.0
        report.iterations = k
        report.sup_differences.append(diff)
        report.sup_norms.append(sup_norm(G_new))
        report.residuals.append(system_residual(G_new, S, grid))
        if len(report.sup_differences) > 1 and report.sup_differences[-2] > 0:
            report.contraction_ratios.append(diff / report.sup_differences[-2])
        history.append(G_new)
        if not np.isfinite(report.sup_norms[-1]) or report.sup_norms[-1] > blowup:
            raise SmallnessViolation(
                f"smallness regime violated: sup|G_{k}| = {report.sup_norms[-1]:.3e} exceeds {blowup:.3e}",
                {"sup_norms": report.sup_norms, "sup_differences": report.sup_differences,
                 "iterates": history},
            )
        G = G_new
        if diff < tol or np.array_equal(dG_new, dG):
            report.converged = True
            break
        dG = dG_new
    ratios = report.contraction_ratios[-5:]
    if ratios:
        report.contraction = float(max(ratios))
    elif report.converged:
        report.contraction = 0.0
    if report.contraction is not None and report.contraction < 1.0:
        report.apriori_bound = float(np.sqrt(N) / 4.0 * s_sup / (1.0 - report.contraction))
    if n >= 3:
        report.smallness = smallness_condition(n, 2.0 * gradient_energy(G, grid), s_sup)
    return G, report


def quadratic_growth_check(G, S, grid: DiscGrid, slack=None, C=10.0):
    """Pointwise |Lap G| <= (sqrt(n-2)/2)|grad G|^2 + |S| and |dG|^2 <= (n-2)|G_u|^2 |G_v|^2.

    The first inequality gets the additive slack ``C h^2`` (or ``slack``); the
    second is algebraic and is checked without tolerance.
    """
    G = np.asarray(G, dtype=float)
    S = np.asarray(S, dtype=float)
    n = n_from_pairs(len(G))
    slack = C * grid.h**2 if slack is None else slack
    gu, gv = gradient(grid, G, 0.0)
    lap = laplacian(grid, G, 0.0)
    dG = delta_g(G, grid)
    Gu2, Gv2 = np.sum(gu**2, axis=0), np.sum(gv**2, axis=0)
    lhs = np.sqrt(np.sum(lap**2, axis=0))
    rhs = 0.5 * np.sqrt(max(n - 2, 0)) * (Gu2 + Gv2) + np.sqrt(np.sum(S**2, axis=0))
    wedge_lhs = np.sum(dG**2, axis=0)
    wedge_rhs = (n - 2) * Gu2 * Gv2
    growth_excess = float(np.max(lhs - rhs)) if lhs.size else 0.0
    wedge_excess = float(np.max(wedge_lhs - wedge_rhs)) if lhs.size else 0.0
    return {
        "n": n,
        "growth_max_excess": growth_excess,
        "growth_slack": float(slack),
        "growth_holds": growth_excess <= slack,
        "wedge_max_excess": wedge_excess,
        "wedge_holds": wedge_excess <= 0.0,
    }


def flat_holomorphy_check(G, grid: DiscGrid):
    """Norms of f = G_w . G_w: ||f_wbar||_2, ||Im(w^2 f)||_{L2(circle)}, ||f||_inf."""
    from .disc_grid import wirtinger

    G = np.asarray(G, dtype=float)
    if not G.size:
        return {"f_wbar_l2": 0.0, "boundary_im_l2": 0.0, "f_sup": 0.0}
    gu, gv = gradient(grid, G, 0.0)
    Gw = gu - 1j * gv
    f = np.sum(Gw**2, axis=0)
    fwbar = wirtinger(grid, f, conjugate=True)
    fb = extrapolate(grid, f.real) + 1j * extrapolate(grid, f.imag)
    wb = grid.cuts.points[:, 0] + 1j * grid.cuts.points[:, 1]
    im = np.imag(wb**2 * fb)
    return {
        "f_wbar_l2": _l2(grid, fwbar),
        "boundary_im_l2": float(np.sqrt(integrate_boundary(grid, im**2))),
        "f_sup": float(np.abs(f).max()),
    }


def manufactured_system(grid: DiscGrid, amplitude=0.1):
    """n = 3 test problem: G* = a (sin pi u, sin pi v, uv)(1 - |w|^2), S = Lap G* + dG*.

    S is formed symbolically, so it carries no discretization error.
    Returns ``(G_star, S)`` sampled at the interior nodes.
    """
    import sympy

    u, v = sympy.symbols("u v", real=True)
    bump = 1 - u**2 - v**2
    comps = [amplitude * e * bump for e in (sympy.sin(sympy.pi * u), sympy.sin(sympy.pi * v), u * v)]
    grads = [(sympy.diff(c, u), sympy.diff(c, v)) for c in comps]
    n = 3
    gu = to_skew(np.array([g[0] for g in grads], dtype=object), n)
    gv = to_skew(np.array([g[1] for g in grads], dtype=object), n)
    dG = []
    for s, t in pairs(n):
        dG.append(sum(gu[s, w] * gv[w, t] - gv[s, w] * gu[w, t] for w in range(n)))
    S_exprs = [sympy.diff(c, u, 2) + sympy.diff(c, v, 2) + d for c, d in zip(comps, dG)]
    ev = lambda e: np.broadcast_to(  # noqa: E731
        np.asarray(sympy.lambdify((u, v), e, "numpy")(grid.u, grid.v), dtype=float), grid.u.shape
    )
    return np.stack([ev(c) for c in comps]), np.stack([ev(e) for e in S_exprs])
