"""Metric, normal frames, torsion coefficients and normal-bundle curvature.

Array conventions (``k`` runs over interior grid nodes):

* frame ``N``: ``(n, n + 2, k)``, row ``s`` is the unit normal N_s
* torsion ``T``: ``(2, n, n, k)``, ``T[i, s, t] = N_{s,u^i} . N_t`` (skew in s, t)
* second fundamental form ``L``: ``(n, 2, 2, k)``
* normal curvature ``S``: ``(n, n, k)`` holding S_{s,12}^t (skew)
* Grassmann-type vectors: ``(n(n-1)/2, k)`` in lexicographic pair order
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .disc_grid import DiscGrid, gradient


class ImmersionError(ValueError):
    pass


def pairs(n):
    """Index pairs (s, t), s < t, in lexicographic order (0-based)."""
    return list(combinations(range(n), 2))


def n_from_pairs(N):
    n = int(round((1 + np.sqrt(1 + 8 * N)) / 2))
    if n * (n - 1) // 2 != N:
        raise ValueError(f"{N} is not a triangular number n(n-1)/2")
    return n


def to_vector(S):
    """(n, n, k) skew field -> (N, k) Grassmann-type vector."""
    n = S.shape[0]
    return np.stack([S[s, t] for s, t in pairs(n)]) if n > 1 else np.zeros((0,) + S.shape[2:])


def to_skew(vec, n=None):
    """(N, k) Grassmann-type vector -> (n, n, k) skew field."""
    vec = np.asarray(vec)
    n = n_from_pairs(len(vec)) if n is None else n
    out = np.zeros((n, n) + vec.shape[1:], dtype=vec.dtype)
    for m, (s, t) in enumerate(pairs(n)):
        out[s, t] = vec[m]
        out[t, s] = -vec[m]
    return out


@dataclass(frozen=True)
class Metric:
    h11: np.ndarray
    h22: np.ndarray
    h12: np.ndarray

    @property
    def W(self):
        return np.sqrt(self.h11 * self.h22 - self.h12**2)

    @property
    def matrix(self):
        return np.array([[self.h11, self.h12], [self.h12, self.h22]])

    @property
    def inverse(self):
        det = self.h11 * self.h22 - self.h12**2
        return np.array([[self.h22, -self.h12], [-self.h12, self.h11]]) / det


def metric(X, grid: DiscGrid) -> Metric:
    """First fundamental form at the interior nodes from the analytic jet."""
    jet = X.jet(grid.u, grid.v)
    h11 = np.einsum("ck,ck->k", jet.Xu, jet.Xu)
    h22 = np.einsum("ck,ck->k", jet.Xv, jet.Xv)
    h12 = np.einsum("ck,ck->k", jet.Xu, jet.Xv)
    tr, det = h11 + h22, h11 * h22 - h12**2
    smin = np.sqrt(np.maximum(0.5 * (tr - np.sqrt(np.maximum(tr**2 - 4 * det, 0.0))), 0.0))
    bad = np.flatnonzero(smin <= 1e-8)
    if bad.size:
        k = bad[0]
        raise ImmersionError(
            f"rank condition fails at node {tuple(grid.ij[k])} (u={grid.u[k]:.6g}, v={grid.v[k]:.6g})"
        )
    return Metric(h11, h22, h12)


def check_conformal(m: Metric, tol=1e-8):
    W = m.W
    diag = float(np.max(np.abs(m.h11 - m.h22) / W))
    off = float(np.max(np.abs(m.h12) / W))
    return {"max_diag_defect": diag, "max_offdiag_defect": off, "conformal": diag < tol and off < tol}


def _tangent_basis(jet):
    t1 = jet.Xu / np.linalg.norm(jet.Xu, axis=0)
    t2 = jet.Xv - np.einsum("ck,ck->k", jet.Xv, t1) * t1
    t2 /= np.linalg.norm(t2, axis=0)
    return t1, t2


def _gram_schmidt(t1, t2, pivots, dim):
    """Orthonormalise e_{pivots[k, m]} against the tangent plane, per node.

    Returns the frame (n, dim, k) and the smallest pre-normalisation norm per node.
    """
    nk, n = pivots.shape
    frame = np.zeros((n, dim, nk))
    smallest = np.full(nk, np.inf)
    cols = np.arange(nk)
    for m in range(n):
        vec = np.zeros((dim, nk))
        vec[pivots[:, m], cols] = 1.0
        for b in [t1, t2] + [frame[q] for q in range(m)]:
            vec -= np.einsum("ck,ck->k", vec, b) * b
        norm = np.linalg.norm(vec, axis=0)
        smallest = np.minimum(smallest, norm)
        frame[m] = vec / np.where(norm > 0, norm, 1.0)
    return frame, smallest


def _rank_pivots(t1, t2, n):
    resid = 1.0 - t1**2 - t2**2  # squared residual norms of e_1..e_{n+2}
    keep = np.sort(np.argsort(resid, kind="stable")[2:])
    return keep, resid


def initial_frame(X, grid: DiscGrid, switch_tol=1e-2):
    """Gram-Schmidt normal frame with pivots frozen from the node nearest the origin.

    Standard basis vectors are projected off the tangent plane; the two with the
    smallest residual at the reference node are dropped.  If the inherited pivot
    set degenerates somewhere, a breadth-first sweep from the reference node
    re-pivots only where needed.
    """
    jet = X.jet(grid.u, grid.v)
    t1, t2 = _tangent_basis(jet)
    n, dim = X.n, X.dim
    ref = int(np.argmin(grid.u**2 + grid.v**2))
    keep, _ = _rank_pivots(t1[:, ref], t2[:, ref], n)
    pivots = np.tile(keep, (grid.n_nodes, 1))
    frame, smallest = _gram_schmidt(t1, t2, pivots, dim)
    if np.all(smallest >= switch_tol):
        return frame

    # sweep: inherit the parent's pivots, re-rank only where they degenerate
    seen = np.zeros(grid.n_nodes, dtype=bool)
    queue = deque([(ref, keep)])
    seen[ref] = True
    while queue:
        k, piv = queue.popleft()
        _, small = _gram_schmidt(t1[:, [k]], t2[:, [k]], piv[None, :], dim)
        if small[0] < switch_tol:
            piv, resid = _rank_pivots(t1[:, k], t2[:, k], n)
            if np.all(np.sqrt(np.maximum(resid, 0.0)) < 1e-8):
                raise ImmersionError(f"normal frame degenerates at node {tuple(grid.ij[k])}")
        pivots[k] = piv
        for axis in (0, 1):
            for step in (1, -1):
                nb = grid._neighbour(k, axis, step)
                if nb >= 0 and not seen[nb]:
                    seen[nb] = True
                    queue.append((nb, piv))
    frame, smallest = _gram_schmidt(t1, t2, pivots, dim)
    if np.any(smallest < 1e-8):
        k = int(np.argmin(smallest))
        raise ImmersionError(f"normal frame degenerates at node {tuple(grid.ij[k])}")
    return frame


def frame_defects(frame, X, grid: DiscGrid):
    """Max |N_s . X_{u^i}| and max |N_s . N_t - delta_st| over the nodes."""
    jet = X.jet(grid.u, grid.v)
    tang = max(np.abs(np.einsum("sck,ck->sk", frame, t)).max() for t in (jet.Xu, jet.Xv))
    gram = np.einsum("sck,tck->stk", frame, frame)
    ortho = np.abs(gram - np.eye(frame.shape[0])[:, :, None]).max()
    return float(tang), float(ortho)


def raw_torsion(frame, grid: DiscGrid):
    """Unprojected inner products N_{s,u^i} . N_t, shape (2, n, n, k)."""
    du, dv = gradient(grid, frame)
    return np.stack([np.einsum("sck,tck->stk", d, frame) for d in (du, dv)])


def torsion(frame, grid: DiscGrid):
    """Torsion coefficients, stored skew-symmetric."""
    P = raw_torsion(frame, grid)
    return 0.5 * (P - P.transpose(0, 2, 1, 3))


def second_fundamental(X, frame, grid: DiscGrid):
    """L[s, i, j] = X_{u^i u^j} . N_s from the analytic jet."""
    jet = X.jet(grid.u, grid.v)
    second = np.array([[jet.Xuu, jet.Xuv], [jet.Xuv, jet.Xvv]])  # (2, 2, dim, k)
    return np.einsum("ijck,sck->sijk", second, frame)


def normal_curvature_from_torsion(T, grid: DiscGrid):
    """S_{s,12}^t = d_v T_{s,1}^t - d_u T_{s,2}^t + [T_1, T_2]_{st}."""
    _, dv_T1 = gradient(grid, T[0])
    du_T2, _ = gradient(grid, T[1])
    comm = np.einsum("swk,wtk->stk", T[0], T[1]) - np.einsum("swk,wtk->stk", T[1], T[0])
    S = dv_T1 - du_T2 + comm
    return 0.5 * (S - S.transpose(1, 0, 2))


def normal_curvature_ricci(L, m: Metric):
    """Ricci route: S_{s,12}^t = (L_{s,1a} L_{t,2b} - L_{s,2a} L_{t,1b}) h^{ab}."""
    hinv = m.inverse
    S = np.einsum("sak,tbk,abk->stk", L[:, 0], L[:, 1], hinv) - np.einsum(
        "sak,tbk,abk->stk", L[:, 1], L[:, 0], hinv
    )
    return S


def mean_and_gauss(L, m: Metric):
    """|H|^2 and K from the second fundamental form (Gauss equation)."""
    hinv = m.inverse
    Hs = 0.5 * np.einsum("ijk,sijk->sk", hinv, L)
    H2 = np.sum(Hs**2, axis=0)
    det_h = m.h11 * m.h22 - m.h12**2
    K = np.sum(L[:, 0, 0] * L[:, 1, 1] - L[:, 0, 1] ** 2, axis=0) / det_h
    return H2, K


def ricci_bound_check(S, L, m: Metric, slack=0.0):
    """Check |S_{s,12}^t| <= 2 (|H|^2 - K) W at every node and pair."""
    H2, K = mean_and_gauss(L, m)
    rhs = 2.0 * (H2 - K) * m.W
    n = S.shape[0]
    lhs = np.max(np.abs(to_vector(S)), axis=0) if n > 1 else np.zeros_like(rhs)
    excess = float(np.max(lhs - rhs))
    return {
        "max_excess": excess,
        "max_lhs": float(lhs.max()),
        "min_rhs": float(rhs.min()),
        "holds": excess <= slack,
    }
