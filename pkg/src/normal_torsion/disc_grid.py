"""Finite-difference substrate on the closed unit disc.

Fields are stored as 1-D arrays over the interior nodes of a masked Cartesian
grid (``grid.n_nodes`` values, leading axes allowed).  Where a grid line leaves
the disc between an interior node and its neighbour, the crossing point with
the unit circle is recorded as a *cut*; boundary traces are arrays over cuts
(``grid.n_cuts`` values).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.spatial import cKDTree

# (axis, sign) for the four neighbour directions +u, -u, +v, -v
_DIRECTIONS = ((0, 1), (0, -1), (1, 1), (1, -1))

# cut fractions below this fall back to the trace-free stencil in ``gradient``
_MIN_TRACE_THETA = 0.1


class GridError(ValueError):
    pass


class PoissonConvergenceError(RuntimeError):
    """Raised when the linear solve misses its residual tolerance."""

    def __init__(self, message, residual_history):
        super().__init__(message)
        self.residual_history = list(residual_history)


@dataclass(frozen=True)
class Cuts:
    node: np.ndarray  # interior node index adjacent to the circle
    axis: np.ndarray  # 0 for u, 1 for v
    sign: np.ndarray  # +1 / -1 direction along the axis
    theta: np.ndarray  # fractional distance to the circle, in (0, 1]
    points: np.ndarray  # (n_cuts, 2) crossing points on the unit circle


def _stencil_weights(points, moments):
    """Weights w with sum_m w_m x_m**p == moments[p] for p = 0..len(points)-1."""
    x = np.asarray(points, dtype=float)
    V = np.vander(x, len(x), increasing=True).T
    return np.linalg.solve(V, np.asarray(moments, dtype=float))


# first derivative, exact to quadratics, leading error h^2 f'''/6 (same as central)
_D1_MOMENTS = (0.0, 1.0, 0.0, 1.0)


def _rect_disc_area(x0, x1, y0, y1, r=1.0):
    """Exact area of [x0,x1] x [y0,y1] intersected with the disc of radius r."""

    def s_int(x):
        x = np.clip(x, -r, r)
        return 0.5 * (x * np.sqrt(max(r * r - x * x, 0.0)) + r * r * np.arcsin(x / r))

    a, b = max(x0, -r), min(x1, r)
    if a >= b:
        return 0.0
    brk = {a, b}
    for y in (y0, y1):
        if abs(y) < r:
            c = np.sqrt(r * r - y * y)
            brk.update(t for t in (-c, c) if a < t < b)
    brk = sorted(brk)
    area = 0.0
    for lo, hi in zip(brk[:-1], brk[1:]):
        xm = 0.5 * (lo + hi)
        s = np.sqrt(max(r * r - xm * xm, 0.0))
        top_is_s = s < y1
        bot_is_s = -s > y0
        if min(y1, s) - max(y0, -s) <= 0.0:
            continue
        arc = s_int(hi) - s_int(lo)
        top = arc if top_is_s else y1 * (hi - lo)
        bot = -arc if bot_is_s else y0 * (hi - lo)
        area += top - bot
    return area


def _log_rect_integral(x0, x1, y0, y1):
    """Integral of log(x^2 + y^2) over a rectangle (closed form)."""

    def F(x, y):
        r2 = x * x + y * y
        out = 0.0
        if r2 > 0.0:
            out += x * y * (np.log(r2) - 3.0)
        if x != 0.0:
            out += x * x * np.arctan(y / x)
        if y != 0.0:
            out += y * y * np.arctan(x / y)
        return out

    return F(x1, y1) - F(x0, y1) - F(x1, y0) + F(x0, y0)


@dataclass(eq=False)
class DiscGrid:
    """Cartesian grid on [-1, 1]^2 masked to the open unit disc."""

    M: int
    h: float
    x: np.ndarray
    mask: np.ndarray
    index: np.ndarray
    ij: np.ndarray
    cuts: Cuts
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_nodes(self) -> int:
        return len(self.ij)

    @property
    def n_cuts(self) -> int:
        return len(self.cuts.node)

    @property
    def u(self) -> np.ndarray:
        return self.x[self.ij[:, 0]]

    @property
    def v(self) -> np.ndarray:
        return self.x[self.ij[:, 1]]

    @property
    def boundary_points(self) -> np.ndarray:
        return self.cuts.points

    def sample(self, func):
        """Evaluate ``func(u, v)`` at interior nodes and at cut points."""
        values = np.asarray(func(self.u, self.v), dtype=float)
        bp = self.cuts.points
        trace = np.asarray(func(bp[:, 0], bp[:, 1]), dtype=float)
        return values, trace

    def to_image(self, values):
        """Scatter node values into an (M, M) array, NaN outside the disc."""
        values = np.asarray(values)
        img = np.full(values.shape[:-1] + (self.M, self.M), np.nan, dtype=values.dtype)
        img[..., self.ij[:, 0], self.ij[:, 1]] = values
        return img

    # ------------------------------------------------------------------
    # neighbour bookkeeping

    def _neighbour(self, k, axis, step):
        i, j = self.ij[k]
        if axis == 0:
            i += step
        else:
            j += step
        if 0 <= i < self.M and 0 <= j < self.M:
            return int(self.index[i, j])
        return -1

    @cached_property
    def _cut_lookup(self):
        return {
            (int(k), int(a), int(s)): c
            for c, (k, a, s) in enumerate(zip(self.cuts.node, self.cuts.axis, self.cuts.sign))
        }

    # ------------------------------------------------------------------
    # operator matrices

    def _assemble_gradient(self, use_trace):
        n, nc = self.n_nodes, self.n_cuts
        mats = []
        for axis in (0, 1):
            rows, cols, vals = [], [], []
            brows, bcols, bvals = [], [], []
            for k in range(n):
                plus = self._neighbour(k, axis, 1)
                minus = self._neighbour(k, axis, -1)
                if plus >= 0 and minus >= 0:
                    rows += [k, k]
                    cols += [plus, minus]
                    vals += [0.5, -0.5]
                    continue
                s = 1 if plus < 0 else -1  # direction of the missing neighbour
                c = self._cut_lookup[(k, axis, s)]
                theta = self.cuts.theta[c]
                back = [self._neighbour(k, axis, -s * m) for m in (1, 2, 3)]
                if min(back[:2]) < 0:
                    raise GridError(f"node {tuple(self.ij[k])} lacks a one-sided stencil")
                if use_trace and theta >= _MIN_TRACE_THETA:
                    pts = [s * theta, 0.0, -s * 1.0, -s * 2.0]
                    w = _stencil_weights(pts, _D1_MOMENTS)
                    brows.append(k)
                    bcols.append(c)
                    bvals.append(w[0])
                    rows += [k, k, k]
                    cols += [k, back[0], back[1]]
                    vals += list(w[1:])
                elif back[2] >= 0:
                    pts = [0.0, -s * 1.0, -s * 2.0, -s * 3.0]
                    w = _stencil_weights(pts, _D1_MOMENTS)
                    rows += [k] * 4
                    cols += [k] + back
                    vals += list(w)
                else:
                    pts = [0.0, -s * 1.0, -s * 2.0]
                    w = _stencil_weights(pts, _D1_MOMENTS[:3])
                    rows += [k] * 3
                    cols += [k] + back[:2]
                    vals += list(w)
            D = sp.csr_matrix((np.array(vals) / self.h, (rows, cols)), shape=(n, n))
            B = sp.csr_matrix((np.array(bvals) / self.h, (brows, bcols)), shape=(n, nc))
            mats.append((D, B))
        return mats

    @cached_property
    def gradient_matrices(self):
        """(Du, Dv) acting on node values only; one-sided stencils at the circle."""
        (Du, _), (Dv, _) = self._assemble_gradient(use_trace=False)
        return Du, Dv

    @cached_property
    def gradient_trace_matrices(self):
        """((Du, Bu), (Dv, Bv)) so that f_u = Du f + Bu trace."""
        return self._assemble_gradient(use_trace=True)

    @cached_property
    def laplacian_matrices(self):
        """Shortley-Weller operator: Lap f = L f + Lb trace."""
        n, nc, h2 = self.n_nodes, self.n_cuts, self.h**2
        rows, cols, vals = [], [], []
        brows, bcols, bvals = [], [], []
        for k in range(n):
            for axis in (0, 1):
                ends = {}
                for s in (1, -1):
                    nb = self._neighbour(k, axis, s)
                    if nb >= 0:
                        ends[s] = (1.0, nb, False)
                    else:
                        c = self._cut_lookup[(k, axis, s)]
                        ends[s] = (self.cuts.theta[c], c, True)
                b, _, _ = ends[1]
                a, _, _ = ends[-1]
                for s, dist in ((1, b), (-1, a)):
                    coeff = 2.0 / (dist * (a + b) * h2)
                    _, target, is_cut = ends[s]
                    if is_cut:
                        brows.append(k)
                        bcols.append(target)
                        bvals.append(coeff)
                    else:
                        rows.append(k)
                        cols.append(target)
                        vals.append(coeff)
                rows.append(k)
                cols.append(k)
                vals.append(-2.0 / (a * b * h2))
        L = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
        Lb = sp.csr_matrix((bvals, (brows, bcols)), shape=(n, nc))
        return L, Lb

    @cached_property
    def laplacian_notrace_matrix(self):
        """Five-point Laplacian with one-sided second differences at the circle."""
        n, h2 = self.n_nodes, self.h**2
        rows, cols, vals = [], [], []
        for k in range(n):
            for axis in (0, 1):
                plus = self._neighbour(k, axis, 1)
                minus = self._neighbour(k, axis, -1)
                if plus >= 0 and minus >= 0:
                    rows += [k] * 3
                    cols += [plus, k, minus]
                    vals += [1.0 / h2, -2.0 / h2, 1.0 / h2]
                    continue
                s = 1 if plus < 0 else -1
                back = [self._neighbour(k, axis, -s * m) for m in (1, 2, 3)]
                if min(back) < 0:
                    raise GridError(f"node {tuple(self.ij[k])} lacks a one-sided stencil")
                rows += [k] * 4
                cols += [k] + back
                vals += [2.0 / h2, -5.0 / h2, 4.0 / h2, -1.0 / h2]
        return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))

    @cached_property
    def extrapolation_matrix(self):
        """Quadratic extrapolation of node values to the cut points."""
        nc = self.n_cuts
        rows, cols, vals = [], [], []
        for c in range(nc):
            k, axis, s, t = self.cuts.node[c], self.cuts.axis[c], self.cuts.sign[c], self.cuts.theta[c]
            back = [k] + [self._neighbour(k, axis, -s * m) for m in (1, 2)]
            lag = ((t + 1) * (t + 2) / 2.0, -t * (t + 2), t * (t + 1) / 2.0)
            rows += [c] * 3
            cols += back
            vals += list(lag)
        return sp.csr_matrix((vals, (rows, cols)), shape=(nc, self.n_nodes))

    @cached_property
    def _poisson_lu(self):
        L, _ = self.laplacian_matrices
        return spla.splu(L.tocsc())

    # ------------------------------------------------------------------
    # quadrature

    def quadrature_weights(self, radius=1.0):
        """Node weights for integrals over the disc of the given radius.

        Each grid cell is clipped exactly to the disc; clipped area of a cell
        whose centre lies outside the unit disc goes to the nearest interior
        node.
        """
        key = ("weights", float(radius))
        if key in self._cache:
            return self._cache[key]
        h, r = self.h, float(radius)
        weights = np.zeros(self.n_nodes)
        tree = cKDTree(np.column_stack([self.u, self.v]))
        half = 0.5 * h
        for i, xi in enumerate(self.x):
            for j, yj in enumerate(self.x):
                near = np.hypot(max(abs(xi) - half, 0.0), max(abs(yj) - half, 0.0))
                if near >= r:
                    continue
                far = np.hypot(abs(xi) + half, abs(yj) + half)
                area = h * h if far <= r else _rect_disc_area(xi - half, xi + half, yj - half, yj + half, r)
                if area <= 0.0:
                    continue
                k = self.index[i, j]
                if k < 0:
                    k = tree.query([xi, yj])[1]
                weights[k] += area
        self._cache[key] = weights
        return weights

    @cached_property
    def weights(self):
        return self.quadrature_weights(1.0)

    @cached_property
    def boundary_weights(self):
        """Arc-length weights at the cut points (periodic trapezoid in angle)."""
        ang = np.arctan2(self.cuts.points[:, 1], self.cuts.points[:, 0])
        order = np.argsort(ang, kind="stable")
        a = ang[order]
        gaps = np.diff(np.concatenate([a, [a[0] + 2 * np.pi]]))
        w_sorted = 0.5 * (gaps + np.roll(gaps, 1))
        w = np.empty_like(w_sorted)
        w[order] = w_sorted
        return w


def build_grid(M: int) -> DiscGrid:
    """Masked grid with M nodes per axis (M odd, M >= 9)."""
    if not isinstance(M, (int, np.integer)) or M < 9 or M % 2 == 0:
        raise GridError(f"M must be an odd integer >= 9, got {M!r}")
    M = int(M)
    h = 2.0 / (M - 1)
    x = np.linspace(-1.0, 1.0, M)
    x[(M - 1) // 2] = 0.0
    U, V = np.meshgrid(x, x, indexing="ij")
    mask = U**2 + V**2 < 1.0
    index = np.full((M, M), -1, dtype=int)
    ij = np.argwhere(mask)
    index[ij[:, 0], ij[:, 1]] = np.arange(len(ij))

    node, axis_l, sign_l, theta_l, pts = [], [], [], [], []
    for k, (i, j) in enumerate(ij):
        p = np.array([x[i], x[j]])
        for axis, s in _DIRECTIONS:
            ni, nj = (i + s, j) if axis == 0 else (i, j + s)
            if 0 <= ni < M and 0 <= nj < M and mask[ni, nj]:
                continue
            # solve |p + s t h e_axis| = 1 for t in (0, 1]
            along, other = p[axis], p[1 - axis]
            reach = np.sqrt(1.0 - other**2)
            theta = (reach - s * along) / h
            theta = min(max(theta, np.finfo(float).tiny), 1.0)
            q = p.copy()
            q[axis] = s * reach
            node.append(k)
            axis_l.append(axis)
            sign_l.append(s)
            theta_l.append(theta)
            pts.append(q)
    cuts = Cuts(
        node=np.array(node, dtype=int),
        axis=np.array(axis_l, dtype=int),
        sign=np.array(sign_l, dtype=int),
        theta=np.array(theta_l),
        points=np.array(pts),
    )
    grid = DiscGrid(M=M, h=h, x=x, mask=mask, index=index, ij=ij, cuts=cuts)
    for line in list(mask) + list(mask.T):
        if line.any() and line.sum() < 4:
            raise GridError("grid too coarse: a grid line holds fewer than 4 interior nodes")
    return grid


# ----------------------------------------------------------------------
# field operations


def gradient(grid: DiscGrid, f, trace=None):
    """Second-order gradient of node values ``f`` (shape (..., n_nodes)).

    With a boundary ``trace`` the stencils next to the circle reach the cut
    points; otherwise they are one-sided over interior nodes.  Both variants
    share the central stencil's leading error term, so the error field stays
    smooth and repeated differentiation keeps second order.
    """
    f = np.asarray(f, dtype=float)
    lead = f.shape[:-1]
    F = f.reshape(-1, grid.n_nodes).T
    if trace is None:
        Du, Dv = grid.gradient_matrices
        gu, gv = Du @ F, Dv @ F
    else:
        (Du, Bu), (Dv, Bv) = grid.gradient_trace_matrices
        Tr = np.broadcast_to(np.asarray(trace, dtype=float), lead + (grid.n_cuts,)).reshape(-1, grid.n_cuts).T
        gu, gv = Du @ F + Bu @ Tr, Dv @ F + Bv @ Tr
    return gu.T.reshape(f.shape), gv.T.reshape(f.shape)


def divergence(grid: DiscGrid, Vu, Vv):
    du, _ = gradient(grid, Vu)
    _, dv = gradient(grid, Vv)
    return du + dv


def laplacian(grid: DiscGrid, f, trace=None):
    """Shortley-Weller Laplacian when a trace is given, one-sided otherwise."""
    f = np.asarray(f, dtype=float)
    F = f.reshape(-1, grid.n_nodes).T
    if trace is None:
        out = grid.laplacian_notrace_matrix @ F
    else:
        L, Lb = grid.laplacian_matrices
        lead = f.shape[:-1]
        Tr = np.broadcast_to(np.asarray(trace, dtype=float), lead + (grid.n_cuts,)).reshape(-1, grid.n_cuts).T
        out = L @ F + Lb @ Tr
    return out.T.reshape(f.shape)


def integrate(grid: DiscGrid, f, radius=1.0):
    """Quadrature over the disc (or the concentric disc of ``radius``)."""
    return np.asarray(f, dtype=float) @ grid.quadrature_weights(radius)


def extrapolate(grid: DiscGrid, f):
    """Values of node field ``f`` extrapolated to the cut points."""
    f = np.asarray(f, dtype=float)
    F = f.reshape(-1, grid.n_nodes).T
    out = grid.extrapolation_matrix @ F
    return out.T.reshape(f.shape[:-1] + (grid.n_cuts,))


def boundary_flux(grid: DiscGrid, Vu, Vv, trace_u=None, trace_v=None):
    """Normal component V . nu at the boundary points and its L2(dB) norm.

    Node fields are extrapolated to the circle unless traces are supplied.
    Leading axes are kept; the norm is taken over the last axis only.
    """
    bu = extrapolate(grid, Vu) if trace_u is None else np.asarray(trace_u, dtype=float)
    bv = extrapolate(grid, Vv) if trace_v is None else np.asarray(trace_v, dtype=float)
    nu = grid.cuts.points
    flux = bu * nu[:, 0] + bv * nu[:, 1]
    norm = np.sqrt((flux**2) @ grid.boundary_weights)
    return flux, norm


def integrate_boundary(grid: DiscGrid, g):
    return np.asarray(g, dtype=float) @ grid.boundary_weights


def solve_poisson(grid: DiscGrid, rhs, trace=0.0, *, method="direct", tol=1e-10, maxiter=None):
    """Solve Lap u = rhs in the disc with u = trace at the cut points.

    ``method="direct"`` uses a sparse LU factorisation cached on the grid;
    ``"bicgstab"`` runs the Krylov solver up to ``20 M^2`` iterations.  Both
    check the relative residual against ``tol``.
    """
    rhs = np.asarray(rhs, dtype=float)
    lead = rhs.shape[:-1]
    R = rhs.reshape(-1, grid.n_nodes)
    Tr = np.broadcast_to(np.asarray(trace, dtype=float), lead + (grid.n_cuts,)).reshape(-1, grid.n_cuts)
    L, Lb = grid.laplacian_matrices
    B = R - (Lb @ Tr.T).T
    out = np.empty_like(B)
    for m, b in enumerate(B):
        history = []
        if method == "direct":
            x = grid._poisson_lu.solve(b)
        elif method == "bicgstab":
            maxiter = maxiter or 20 * grid.M**2
            bnorm = np.linalg.norm(b) or 1.0

            def record(xk):
                history.append(np.linalg.norm(b - L @ xk) / bnorm)

            x, info = spla.bicgstab(L, b, rtol=tol, atol=0.0, maxiter=maxiter, callback=record)
            if info != 0:
                raise PoissonConvergenceError(f"bicgstab stopped with info={info}", history)
        else:
            raise ValueError(f"unknown method {method!r}")
        bnorm = np.linalg.norm(b)
        res = np.linalg.norm(L @ x - b) / (bnorm if bnorm > 0 else 1.0)
        history.append(res)
        if not np.isfinite(res) or res > max(tol, 1e-10) * 10:
            raise PoissonConvergenceError(f"relative residual {res:.3e} above tolerance", history)
        out[m] = x
    return out.reshape(rhs.shape)


# ----------------------------------------------------------------------
# Green's function and complex derivatives


def green_function(zeta, w):
    """Dirichlet Green's function of the Laplacian in the unit disc.

    ``zeta`` and ``w`` are complex (or length-2 real pairs); the value is
    (1/2pi) log|(zeta - w) / (1 - conj(w) zeta)| and is non-positive in B.
    """
    zeta = _as_complex(zeta)
    w = _as_complex(w)
    d = np.abs(zeta - w)
    if np.any(d == 0.0):
        raise ValueError("Green's function is singular at coincident points")
    return (np.log(d) - np.log(np.abs(1.0 - np.conj(w) * zeta))) / (2.0 * np.pi)


def _as_complex(z):
    z = np.asarray(z)
    if np.iscomplexobj(z):
        return z
    if z.shape and z.shape[-1] == 2:
        return z[..., 0] + 1j * z[..., 1]
    return z.astype(complex)


def green_abs_integral(grid: DiscGrid, w):
    """Quadrature of |phi(.; w)| over the disc.

    The log singularity is handled by integrating log|zeta - w| exactly over
    the 3x3 block of cells around w; the smooth part is sampled at nodes.
    """
    wc = complex(_as_complex(w))
    h = grid.h
    z = grid.u + 1j * grid.v
    smooth = np.log(np.abs(1.0 - np.conj(wc) * z)) / (2.0 * np.pi)
    ci = int(round((wc.real + 1.0) / h))
    cj = int(round((wc.imag + 1.0) / h))
    block = []
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            i, j = ci + di, cj + dj
            if 0 <= i < grid.M and 0 <= j < grid.M and grid.index[i, j] >= 0:
                k = grid.index[i, j]
                if np.isclose(grid.weights[k], h * h, rtol=1e-12):
                    block.append(k)
    in_block = np.zeros(grid.n_nodes, dtype=bool)
    in_block[block] = True
    d = np.abs(z - wc)
    sing = np.zeros(grid.n_nodes)
    sing[~in_block] = np.log(d[~in_block]) / (2.0 * np.pi)
    total = -(integrate(grid, np.where(in_block, 0.0, sing)) - integrate(grid, smooth))
    half = 0.5 * h
    for k in block:
        x0, y0 = grid.u[k] - wc.real, grid.v[k] - wc.imag
        exact = 0.5 * _log_rect_integral(x0 - half, x0 + half, y0 - half, y0 + half)
        total -= exact / (2.0 * np.pi)
    return total


def wirtinger(grid: DiscGrid, f, conjugate=False, trace=None):
    """f_w = f_u - i f_v, or f_wbar = f_u + i f_v with ``conjugate=True``.

    No factor 1/2, so that f_{w wbar} equals the Laplacian.
    """
    f = np.asarray(f)
    tr = None if trace is None else np.asarray(trace)
    re_u, re_v = gradient(grid, f.real, None if tr is None else tr.real)
    if np.iscomplexobj(f):
        im_u, im_v = gradient(grid, f.imag, None if tr is None else tr.imag)
    else:
        im_u = im_v = np.zeros_like(re_u)
    fu = re_u + 1j * im_u
    fv = re_v + 1j * im_v
    return fu + 1j * fv if conjugate else fu - 1j * fv
