"""Lower and upper bounds for the total torsion, L-infinity bounds for G, Wente's estimate."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .disc_grid import DiscGrid, gradient, integrate, solve_poisson
from .geometry import n_from_pairs

DEFAULT_RHOS = tuple(np.round(np.arange(1, 10) / 10, 1))
SLACK_C = 10.0


class BoundError(ValueError):
    pass


@dataclass
class BoundReport:
    """``kind='upper'``: measured <= bound; ``kind='lower'``: measured >= bound."""

    name: str
    bound: float
    measured: float | None
    kind: str = "upper"
    tolerance: float = 0.0
    inputs: dict = field(default_factory=dict)
    applicable: bool = True

    @property
    def slack(self):
        if self.measured is None or not self.applicable:
            return None
        return self.bound - self.measured if self.kind == "upper" else self.measured - self.bound

    @property
    def passed(self):
        if not self.applicable or self.measured is None:
            return True
        return bool(self.slack >= -self.tolerance)

    def to_dict(self):
        return {
            "name": self.name,
            "bound": self.bound,
            "measured": self.measured,
            "slack": self.slack,
            "pass": self.passed,
            "applicable": self.applicable,
            "inputs": self.inputs,
        }


# ----------------------------------------------------------------------
# norms of Grassmann-type vectors (N, k)


def sup_norm(Z):
    Z = np.asarray(Z, dtype=float)
    return float(np.sqrt(np.sum(Z**2, axis=0)).max()) if Z.size else 0.0


def l2_norm(grid: DiscGrid, Z, radius=1.0):
    Z = np.asarray(Z, dtype=float)
    return float(np.sqrt(max(np.sum(integrate(grid, Z**2, radius)), 0.0))) if Z.size else 0.0


def l1_norm(grid: DiscGrid, Z):
    Z = np.asarray(Z, dtype=float)
    return float(integrate(grid, np.sqrt(np.sum(Z**2, axis=0)))) if Z.size else 0.0


def grad_energy(grid: DiscGrid, Z, trace=None):
    """||grad Z||_2^2; pass ``trace=0.0`` for fields vanishing on the circle."""
    Z = np.asarray(Z, dtype=float)
    if not Z.size:
        return 0.0
    zu, zv = gradient(grid, Z, trace)
    return float(np.sum(integrate(grid, zu**2 + zv**2)))


def slack_for(grid: DiscGrid, C=SLACK_C):
    return C * grid.h**2


# ----------------------------------------------------------------------
# lower bounds


def is_constant(grid: DiscGrid, S):
    return math.sqrt(grad_energy(grid, S)) <= 1e-8 * (1.0 + sup_norm(S))


def lower_bound_nonconstant(S, grid: DiscGrid, measured=None, rhos=DEFAULT_RHOS, n=None):
    """Lower bound for T_X from a non-constant curvature vector S, maximised over rho.

    For each rho the bound is ||S||_{2,rho}^2 / (sqrt(n-2) ||S||_inf
    + ||S||_2^2 / ((1-rho)^2 ||S||_{2,rho}^2) + 2 ||grad S||_2^2 / ||S||_{2,rho}^2),
    with ||.||_{2,rho} the L2 norm over the disc of radius rho.
    """
    S = np.asarray(S, dtype=float)
    n = n_from_pairs(len(S)) if n is None else n
    if is_constant(grid, S):
        raise BoundError("S is constant; use lower_bound_constant")
    s_inf, s_2 = sup_norm(S), l2_norm(grid, S)
    grad2 = grad_energy(grid, S)
    per_rho = {}
    for rho in rhos:
        s_rho2 = l2_norm(grid, S, rho) ** 2
        if s_rho2 <= 0.0:
            continue
        denom = math.sqrt(max(n - 2, 0)) * s_inf + s_2**2 / ((1 - rho) ** 2 * s_rho2) + 2 * grad2 / s_rho2
        per_rho[float(rho)] = s_rho2 / denom
    if not per_rho:
        raise BoundError("S vanishes on all inner discs")
    best = max(per_rho, key=per_rho.get)
    return BoundReport(
        "lower_bound_nonconstant",
        per_rho[best],
        measured,
        kind="lower",
        inputs={"n": n, "S_sup": s_inf, "S_l2": s_2, "grad_S_l2_sq": grad2, "rho": best,
                "per_rho": per_rho},
    )


def lower_bound_constant(S_const, n, exact=False):
    """(1/2) pi |S|^2 / (sqrt(n-2) |S| + 16) for a constant nonzero S.

    With ``exact=True`` the result is a sympy expression (inputs may be sympy
    numbers or rationals).
    """
    if exact:
        import sympy

        vals = [sympy.nsimplify(s) for s in np.atleast_1d(np.asarray(S_const, dtype=object))]
        s = sympy.sqrt(sum(v**2 for v in vals))
        if s == 0:
            raise BoundError("S must be nonzero")
        return sympy.simplify(sympy.pi * s**2 / (2 * (sympy.sqrt(n - 2) * s + 16)))
    s = float(np.linalg.norm(np.atleast_1d(np.asarray(S_const, dtype=float))))
    if s == 0.0:
        raise BoundError("S must be nonzero")
    return 0.5 * math.pi * s**2 / (math.sqrt(n - 2) * s + 16.0)


# ----------------------------------------------------------------------
# upper bounds


def small_solution_upper_bound(G, S, grid: DiscGrid, n=None, measured=None):
    """T_X <= 4 ||G||_inf ||S||_1 / (2 - sqrt(n-2) ||G||_inf) for ||G||_inf < 2/sqrt(n-2).

    ``measured`` defaults to 2 ||grad G||_2^2.
    """
    G = np.asarray(G, dtype=float)
    n = n_from_pairs(len(G)) if n is None else n
    g_inf, s_1 = sup_norm(G), l1_norm(grid, S)
    if measured is None:
        measured = 2.0 * grad_energy(grid, G, 0.0)
    root = math.sqrt(max(n - 2, 0))
    applicable = root * g_inf < 2.0
    bound = 4.0 * g_inf * s_1 / (2.0 - root * g_inf) if applicable else float("inf")
    return BoundReport(
        "small_solution_upper_bound",
        bound,
        measured,
        tolerance=slack_for(grid),
        inputs={"n": n, "G_sup": g_inf, "S_l1": s_1},
        applicable=applicable,
    )


def gamma(n):
    """min{(1/4) sqrt(n(n-1)/2), sqrt 2}."""
    return min(0.25 * math.sqrt(n * (n - 1) / 2), math.sqrt(2.0))


def linfty_bound_primary(G, S, grid: DiscGrid, n=None):
    """||G||_inf <= ((n-2)/2pi) ||grad G||_2^2 + (1/4) sqrt(n(n-1)/2) ||S||_inf."""
    G = np.asarray(G, dtype=float)
    n = n_from_pairs(len(G)) if n is None else n
    e, s_inf = grad_energy(grid, G, 0.0), sup_norm(S)
    bound = (n - 2) / (2 * math.pi) * e + 0.25 * math.sqrt(n * (n - 1) / 2) * s_inf
    return BoundReport("linfty_bound_primary", bound, sup_norm(G), tolerance=slack_for(grid),
                       inputs={"n": n, "grad_G_l2_sq": e, "S_sup": s_inf})


def z_field(S, grid: DiscGrid):
    """Solve Lap Z = S, Z = 0 on the circle; check ||Z||_inf <= (sqrt N / 4) ||S||_inf."""
    S = np.asarray(S, dtype=float)
    Z = solve_poisson(grid, S, 0.0)
    N = len(S)
    report = BoundReport("z_sup_bound", math.sqrt(N) / 4 * sup_norm(S), sup_norm(Z),
                         tolerance=slack_for(grid), inputs={"N": N, "S_sup": sup_norm(S)})
    return Z, report


def linfty_bound_alternative(G, S, grid: DiscGrid, n=None):
    """||G||_inf <= ((n-2)/2pi) ||grad G||_2^2 + sqrt 2 ||S||_inf, plus the z-component bounds.

    Returns ``(report, z_reports, smaller)`` where ``z_reports`` check
    |z^(st)| <= sqrt(2/pi) ||S^(st)||_2 per component and ``smaller`` names the
    bound with the smaller value.
    """
    G = np.asarray(G, dtype=float)
    S = np.asarray(S, dtype=float)
    n = n_from_pairs(len(G)) if n is None else n
    e, s_inf = grad_energy(grid, G, 0.0), sup_norm(S)
    bound = (n - 2) / (2 * math.pi) * e + math.sqrt(2.0) * s_inf
    report = BoundReport("linfty_bound_alternative", bound, sup_norm(G), tolerance=slack_for(grid),
                         inputs={"n": n, "grad_G_l2_sq": e, "S_sup": s_inf})
    Z = solve_poisson(grid, S, 0.0) if S.size else S
    z_reports = [
        BoundReport(f"z_component_{m}", math.sqrt(2 / math.pi) * l2_norm(grid, S[m]),
                    float(np.abs(Z[m]).max()), tolerance=slack_for(grid))
        for m in range(len(S))
    ]
    primary = linfty_bound_primary(G, S, grid, n)
    smaller = "alternative" if bound < primary.bound else "primary"
    return report, z_reports, smaller


def smallness_condition(n, T_X, S_sup):
    """(sqrt(n-2)/2) ((n-2)/(4 pi) T_X + gamma(n) ||S||_inf) < 1."""
    lhs = math.sqrt(max(n - 2, 0)) / 2 * ((n - 2) / (4 * math.pi) * T_X + gamma(n) * S_sup)
    return {"n": n, "lhs": lhs, "gamma": gamma(n), "satisfied": lhs < 1.0,
            "needed": n >= 3}


# ----------------------------------------------------------------------
# Wente


def wente_test(a, b, grid: DiscGrid, rel_slack=0.05):
    """Lap y = -det(grad a, grad b), y = 0 on the circle; ||y||_inf <= (1/4pi)(||grad a||^2 + ||grad b||^2)."""
    au, av = gradient(grid, a)
    bu, bv = gradient(grid, b)
    y = solve_poisson(grid, -(au * bv - av * bu), 0.0)
    energy = float(integrate(grid, au**2 + av**2 + bu**2 + bv**2))
    bound = energy / (4 * math.pi)
    return BoundReport("wente", bound * (1 + rel_slack), float(np.abs(y).max()),
                       inputs={"energy": energy, "raw_bound": bound, "rel_slack": rel_slack})


def random_trig_pair(rng: np.random.Generator, degree=3):
    """Random trigonometric polynomials a, b in (u, v) of the given degree, as callables."""

    def make():
        j, k = np.meshgrid(np.arange(degree + 1), np.arange(-degree, degree + 1), indexing="ij")
        keep = (j > 0) | (k > 0)
        j, k = j[keep], k[keep]
        c, s = rng.standard_normal(j.size), rng.standard_normal(j.size)
        scale = 1.0 / (1.0 + j**2 + k**2)

        def f(u, v):
            ph = np.multiply.outer(u, j) + np.multiply.outer(v, k)
            return (np.cos(ph) * c * scale + np.sin(ph) * s * scale).sum(axis=-1)

        return f

    return make(), make()


def wente_suite(grid: DiscGrid, trials=200, seed=0, degree=3, rel_slack=0.05):
    rng = np.random.default_rng(seed)
    reports = []
    for _ in range(trials):
        fa, fb = random_trig_pair(rng, degree)
        reports.append(wente_test(fa(grid.u, grid.v), fb(grid.u, grid.v), grid, rel_slack))
    return reports
