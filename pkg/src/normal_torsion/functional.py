"""Total torsion, its first variation under SO(n) gauge fields, and gauge descent."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .disc_grid import DiscGrid, boundary_flux, divergence, extrapolate, gradient, integrate
from .geometry import Metric, metric, pairs, to_skew, torsion

# penalty weights of the descent objective (boundary flux, interior divergence)
FLUX_PENALTY = 300.0
DIV_PENALTY = 300.0


class GaugeError(ValueError):
    pass


def total_torsion(m: Metric, T, grid: DiscGrid):
    """sum_{s,t} int h^{ij} T_{s,i}^t T_{s,j}^t W du dv."""
    c = m.inverse * m.W
    dens = np.einsum("ijk,istk,jstk->k", c, T, T)
    return float(integrate(grid, dens))


def total_torsion_conformal(T, grid: DiscGrid):
    """2 sum_{s<t} int (T_{s,1}^t)^2 + (T_{s,2}^t)^2 du dv."""
    n = T.shape[1]
    dens = sum(T[0, s, t] ** 2 + T[1, s, t] ** 2 for s, t in pairs(n))
    return 2.0 * float(integrate(grid, dens)) if n > 1 else 0.0


def gauge_exp(a, n=None):
    """Pointwise exponential of the so(n) field with coordinates ``a`` (N, k)."""
    A = to_skew(np.asarray(a, dtype=float), n)
    n = A.shape[0]
    if n == 2:
        c, s = np.cos(A[0, 1]), np.sin(A[0, 1])
        return np.array([[c, s], [-s, c]])
    R = scipy.linalg.expm(np.moveaxis(A, -1, 0))
    return np.moveaxis(R, 0, -1)


def _check_rotation(R, tol=1e-10):
    n = R.shape[0]
    gram = np.einsum("stk,rtk->srk", R, R)
    dev = np.abs(gram - np.eye(n)[:, :, None]).max()
    det = np.linalg.det(np.moveaxis(R, -1, 0))
    if dev > tol or np.abs(det - 1.0).max() > tol:
        raise GaugeError(f"gauge field is not SO({n})-valued (orthogonality defect {dev:.2e})")


def apply_gauge(frame, R):
    """Rotate the frame: N~_s = sum_t r_st N_t."""
    _check_rotation(R)
    return np.einsum("stk,tck->sck", R, frame)


def transform_torsion(T, R, grid: DiscGrid):
    """Gauge transformation of the torsion: T~_l = R_{,l} R^t + R T_l R^t."""
    _check_rotation(R)
    dR = gradient(grid, R)
    out = np.stack(
        [
            np.einsum("stk,rtk->srk", dR[l], R)
            + np.einsum("sak,abk,rbk->srk", R, T[l], R)
            for l in (0, 1)
        ]
    )
    return 0.5 * (out - out.transpose(0, 2, 1, 3))


def first_variation(T, a, grid: DiscGrid):
    """4 sum_{s<t} [ oint a_st (T_{s,1}^t, T_{s,2}^t).nu ds - int a_st div(T_{s,.}^t) ].

    Derivative of the conformal total torsion along the gauge direction ``a``
    (N, k), split into boundary flux and interior divergence.
    """
    total = 0.0
    for m, (s, t) in enumerate(pairs(T.shape[1])):
        flux, _ = boundary_flux(grid, T[0, s, t], T[1, s, t])
        a_b = extrapolate(grid, a[m])
        total += float(np.sum(a_b * flux * grid.boundary_weights))
        total -= float(integrate(grid, a[m] * divergence(grid, T[0, s, t], T[1, s, t])))
    return 4.0 * total


def first_variation_volume(T, a, grid: DiscGrid):
    """The same derivative before integration by parts: 4 sum_{s<t} int grad a_st . T."""
    total = 0.0
    for m, (s, t) in enumerate(pairs(T.shape[1])):
        au, av = gradient(grid, a[m])
        total += float(integrate(grid, au * T[0, s, t] + av * T[1, s, t]))
    return 4.0 * total


def discrete_first_variation(frame, a, grid: DiscGrid, m: Metric | None = None):
    """Exact derivative of the discrete T_X along exp(eps A) N at eps = 0.

    Agrees with ``first_variation`` up to discretization error, and with the
    finite-difference quotient of the discrete functional up to O(eps).
    """
    grad = gauge_gradient(frame, grid, m, 0.0, 0.0)[3]
    return float(np.sum(grad * np.asarray(a, dtype=float)))


def el_residual(T, grid: DiscGrid):
    """RMS divergence (over B) and RMS normal flux (over the circle) per pair."""
    n = T.shape[1]
    interior, boundary = [], []
    for s, t in pairs(n):
        div = divergence(grid, T[0, s, t], T[1, s, t])
        interior.append(np.sqrt(integrate(grid, div**2) / np.pi))
        _, norm = boundary_flux(grid, T[0, s, t], T[1, s, t])
        boundary.append(norm / np.sqrt(2.0 * np.pi))
    interior, boundary = np.array(interior), np.array(boundary)
    return {
        "interior": interior,
        "boundary": boundary,
        "total": float(interior.sum() + boundary.sum()),
    }


# ----------------------------------------------------------------------
# discrete objective and its exact gauge gradient


def _metric_weights(grid, m):
    if m is None:
        return np.broadcast_to(np.eye(2)[:, :, None], (2, 2, grid.n_nodes))
    return m.inverse * m.W


def descent_objective(frame, grid: DiscGrid, m: Metric | None = None, penalty=FLUX_PENALTY,
                      div_penalty=DIV_PENALTY):
    """J = T_X + penalty sum ||T.nu||^2_{circle} + div_penalty sum ||div T||^2_B over pairs.

    Both penalties vanish on critical frames, so they do not move the
    continuum minimiser; they keep the discrete minimiser smooth.
    Returns ``(J, T_X, T)``.
    """
    T = torsion(frame, grid)
    c = _metric_weights(grid, m)
    TX = float(integrate(grid, np.einsum("ijk,istk,jstk->k", c, T, T)))
    J = TX
    for s, t in pairs(T.shape[1]):
        _, norm = boundary_flux(grid, T[0, s, t], T[1, s, t])
        div = divergence(grid, T[0, s, t], T[1, s, t])
        J += penalty * norm**2 + div_penalty * float(integrate(grid, div**2))
    return J, TX, T


def gauge_gradient(frame, grid: DiscGrid, m: Metric | None = None, penalty=FLUX_PENALTY,
                   div_penalty=DIV_PENALTY):
    """Exact gradient of ``descent_objective`` w.r.t. nodal gauge coordinates.

    For a gauge direction ``a`` (N, k) and N~ = exp(eps A) N,
    d/d eps J |_{eps=0} = sum(grad * a).  Returns ``(J, T_X, T, grad)``.
    """
    n = frame.shape[0]
    Du, Dv = grid.gradient_matrices
    E = grid.extrapolation_matrix
    w = grid.weights
    du, dv = gradient(grid, frame)
    P = np.stack([np.einsum("sck,tck->stk", d, frame) for d in (du, dv)])
    T = 0.5 * (P - P.transpose(0, 2, 1, 3))
    c = _metric_weights(grid, m)
    TX = float(np.einsum("ijk,istk,jstk,k->", c, T, T, w))
    B = 2.0 * w * np.einsum("ilk,istk->lstk", c, T)
    J = TX
    if penalty:
        nu = grid.cuts.points
        ds = grid.boundary_weights
        Tb = extrapolate(grid, T)  # (2, n, n, cuts)
        flux = Tb[0] * nu[:, 0] + Tb[1] * nu[:, 1]
        J += 0.5 * penalty * float(np.sum(flux**2 * ds))
        for l in (0, 1):
            src = penalty * ds * nu[:, l] * flux  # (n, n, cuts)
            B[l] += (E.T @ src.reshape(-1, grid.n_cuts).T).T.reshape(n, n, grid.n_nodes)
    if div_penalty:
        flat = T.reshape(2, -1, grid.n_nodes)
        div = (Du @ flat[0].T + Dv @ flat[1].T).T  # (n*n, k)
        J += 0.5 * div_penalty * float(np.sum(div**2 * w))
        wd = (div_penalty * w * div).T
        B[0] += (Du.T @ wd).T.reshape(n, n, -1)
        B[1] += (Dv.T @ wd).T.reshape(n, n, -1)
    G = np.zeros((n, n, grid.n_nodes))
    for l, D in enumerate((Du, Dv)):
        BN = np.einsum("stk,tck->sck", B[l], frame)
        Z = (D.T @ BN.reshape(-1, grid.n_nodes).T).T.reshape(BN.shape)
        G += np.einsum("sck,tck->stk", Z, frame)
        G += np.einsum("stk,sqk->tqk", B[l], P[l])
    grad = np.stack([G[s, t] - G[t, s] for s, t in pairs(n)])
    return J, TX, T, grad


def _edge_dirichlet(grid: DiscGrid):
    """Nearest-neighbour Dirichlet form sum_edges w_e ((a_i - a_j) / h)^2.

    Unlike D^t W D with central differences it has no checkerboard null space.
    """
    w = grid.weights
    rows, cols, vals, we = [], [], [], []
    e = 0
    for k in range(grid.n_nodes):
        for axis in (0, 1):
            nb = grid._neighbour(k, axis, 1)
            if nb >= 0:
                rows += [e, e]
                cols += [k, nb]
                vals += [1.0 / grid.h, -1.0 / grid.h]
                we.append(0.5 * (w[k] + w[nb]))
                e += 1
    G = sp.csr_matrix((vals, (rows, cols)), shape=(e, grid.n_nodes))
    return G.T @ sp.diags(we) @ G


def _preconditioner(grid: DiscGrid, penalty, div_penalty, shift=1.0, compact=0.01):
    """Hessian of the penalised objective at a parallel frame, linearised in the gauge.

    A small multiple of the compact Dirichlet form plus ``shift`` W removes the
    checkerboard and constant null modes.
    """
    key = ("gauge_precond", penalty, div_penalty, shift, compact)
    if key not in grid._cache:
        Du, Dv = grid.gradient_matrices
        W = sp.diags(grid.weights)
        A = 4.0 * (Du.T @ W @ Du + Dv.T @ W @ Dv) + 4.0 * compact * _edge_dirichlet(grid) + shift * W
        if penalty:
            nu = grid.cuts.points
            E = grid.extrapolation_matrix
            Q = sp.diags(nu[:, 0]) @ E @ Du + sp.diags(nu[:, 1]) @ E @ Dv
            A = A + 2.0 * penalty * (Q.T @ sp.diags(grid.boundary_weights) @ Q)
        if div_penalty:
            L = Du @ Du + Dv @ Dv
            A = A + 2.0 * div_penalty * (L.T @ W @ L)
        grid._cache[key] = spla.splu(A.tocsc())
    return grid._cache[key]


# ----------------------------------------------------------------------
# descent


@dataclass
class DescentReport:
    records: list = field(default_factory=list)
    reason: str = ""

    @property
    def iterations(self):
        return max(len(self.records) - 1, 0)

    @property
    def T_X(self):
        return [r["T_X"] for r in self.records]

    @property
    def final(self):
        return self.records[-1]

    def to_jsonl(self, digits=12):
        lines = []
        for r in self.records:
            rec = {k: (float(f"{v:.{digits}g}") if isinstance(v, float) else v) for k, v in r.items()}
            lines.append(json.dumps(rec))
        return "\n".join(lines) + "\n"


def _common_direction(g_tx, g_pen, lu):
    """Min-norm convex combination of the preconditioned T_X and penalty gradients.

    Whenever it is nonzero, it decreases both parts to first order.
    """
    p1 = np.stack([lu.solve(x) for x in g_tx])
    p2 = np.stack([lu.solve(x) for x in g_pen])
    a11, a12, a22 = np.sum(g_tx * p1), np.sum(g_pen * p1), np.sum(g_pen * p2)
    den = a11 - 2 * a12 + a22
    t = 0.0 if den <= 0 else float(np.clip((a11 - a12) / den, 0.0, 1.0))
    return (1 - t) * p1 + t * p2


def gauge_descent(X, F0, grid: DiscGrid, *, max_iters=2000, tol=1e-5, step=None,
                  penalty=FLUX_PENALTY, div_penalty=DIV_PENALTY, stall_window=20, stall_rtol=1e-12,
                  callback=None):
    """Descend the total torsion over SO(n) gauge rotations of ``F0``.

    Iterates F_{k+1} = exp(-tau_k Gamma_k) F_k.  Gamma_k is the exact gradient
    of the discrete objective (``descent_objective``) in the metric of its
    linearised Hessian, so that tau = 1 is close to a Newton step.  The step
    starts at ``step`` (default min(1, 0.1 / max|Gamma_0|)), later at twice
    the last accepted step, and is halved until the objective decreases
    (Armijo) without T_X increasing.  If that fails, one more search runs
    along a direction that decreases T_X and the penalties together.
    Terminates when the summed Euler-Lagrange residual is below ``tol``
    (reason "converged"), after ``max_iters`` ("max_iters"), when no step
    above 1e-12 is accepted ("line_search"), or when the objective has moved
    by less than ``stall_rtol`` (relative) over ``stall_window`` iterations
    ("stalled"); the last accepted frame is returned in every case.
    """
    m = metric(X, grid) if X is not None else None
    if m is not None and np.allclose(m.h12, 0.0) and np.allclose(m.h11, m.h22):
        m = None  # conformal: the functional does not see W
    n = F0.shape[0]
    report = DescentReport()
    frame = np.array(F0, dtype=float)
    if n < 2:
        report.records.append({"iter": 0, "T_X": 0.0, "residual_interior": 0.0,
                               "residual_boundary": 0.0, "step": 0.0})
        report.reason = "converged"
        return frame, report
    lu = _preconditioner(grid, penalty, div_penalty)

    def evaluate(fr):
        J, TX, T, g = gauge_gradient(fr, grid, m, penalty, div_penalty)
        return J, TX, T, g

    def search(direction, grad, tau, J, TX):
        slope = float(np.sum(grad * direction))
        if not np.isfinite(slope) or slope <= 0.0:
            return None
        while tau >= 1e-12:
            cand = apply_gauge(frame, gauge_exp(-tau * direction, n))
            out = evaluate(cand)
            if out[0] <= J - 1e-4 * tau * slope and out[1] <= TX:
                return cand, out, tau
            tau *= 0.5
        return None

    tau_prev = None
    J, TX, T, grad = evaluate(frame)
    J_hist = []
    for it in range(max_iters + 1):
        res = el_residual(T, grid)
        report.records.append({
            "iter": it,
            "T_X": TX,
            "residual_interior": float(res["interior"].sum()),
            "residual_boundary": float(res["boundary"].sum()),
            "step": 0.0 if it == 0 else float(tau_prev),
        })
        if callback is not None:
            callback(report.records[-1])
        if res["total"] < tol:
            report.reason = "converged"
            break
        if it == max_iters:
            report.reason = "max_iters"
            break
        J_hist.append(J)
        if len(J_hist) > stall_window and J_hist[-stall_window - 1] - J <= stall_rtol * max(J, 1.0):
            report.reason = "stalled"
            break
        Gam = np.stack([lu.solve(g) for g in grad])
        if tau_prev is None:
            gmax = float(np.abs(Gam).max())
            tau = step if step is not None else (min(1.0, 0.1 / gmax) if gmax > 0 else 1.0)
        else:
            tau = min(1.0, 2.0 * tau_prev)
        found = search(Gam, grad, tau, J, TX)
        if found is None:
            g_tx = gauge_gradient(frame, grid, m, 0.0, 0.0)[3]
            found = search(_common_direction(g_tx, grad - g_tx, lu), grad, 1.0, J, TX)
        if found is None:
            report.reason = "line_search"
            break
        frame, (J, TX, T, grad), tau_prev = found
    return frame, report
