"""Spline collocation for second-order elliptic problems in non-divergence form.

The operator is ``L u = a11 u_xx + 2 a12 u_xy + a22 u_yy + b1 u_x + b2 u_y + c0 u``
and the problem ``L u = f`` in the domain, ``u = g`` on its boundary.  The
Poisson problem ``-Δu = f`` is ``L = Δ`` with right-hand side ``-f``.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from . import bform, lsq
from .constraints import SplineSpace, boundary_matrix, smoothness_matrix
from .fit import Spline
from .functions import Manufactured
from .mesh import OUTSIDE, Triangulation, locate_many, refine_uniform

logger = logging.getLogger(__name__)


class EllipticityWarning(RuntimeWarning):
    pass


def _const(v):
    return lambda x, y: np.full(np.shape(x), float(v))


def _as_func(v):
    return v if callable(v) else _const(v)


@dataclass
class EllipticProblem:
    f: Callable
    g: Callable
    a11: Callable | float = 1.0
    a12: Callable | float = 0.0
    a22: Callable | float = 1.0
    b1: Callable | float = 0.0
    b2: Callable | float = 0.0
    c0: Callable | float = 0.0
    name: str = ""

    def coefficient(self, key):
        return _as_func(getattr(self, key))

    def check_ellipticity(self, tri: Triangulation, n: int = 100, seed: int = 0) -> bool:
        rng = np.random.default_rng(seed)
        t = rng.integers(0, tri.n_triangles, n)
        b = rng.dirichlet(np.ones(3), n)
        p = np.einsum("nk,nkj->nj", b, tri.vertices[tri.triangles[t]])
        x, y = p[:, 0], p[:, 1]
        det = self.coefficient("a11")(x, y) * self.coefficient("a22")(x, y) - self.coefficient("a12")(x, y) ** 2
        ok = bool(np.all(det > 0))
        if not ok:
            warnings.warn("coefficient matrix is not elliptic at sampled points", EllipticityWarning, stacklevel=2)
        return ok


def poisson_problem(exact: Manufactured, name: str = "") -> EllipticProblem:
    """``-Δu = f`` with ``f = -Δu_exact`` and ``g = u_exact``."""
    return EllipticProblem(f=lambda x, y: exact.lap(x, y), g=exact.u, name=name)


def poisson_rhs_problem(f: Callable, g: Callable, name: str = "") -> EllipticProblem:
    """``-Δu = f`` in the domain, ``u = g`` on the boundary."""
    return EllipticProblem(f=lambda x, y: -np.asarray(f(x, y), dtype=float), g=g, name=name)


def manufactured_problem(exact: Manufactured, name: str = "", **coefficients) -> EllipticProblem:
    """``L u = f`` with ``f = L u_exact`` for constant or callable coefficients."""
    if exact.uxx is None:
        raise ValueError("exact solution lacks second derivatives")
    prob = EllipticProblem(f=None, g=exact.u, name=name, **coefficients)
    parts = {
        "a11": exact.uxx, "a12": exact.uxy, "a22": exact.uyy,
        "b1": exact.ux, "b2": exact.uy, "c0": exact.u,
    }

    def f(x, y):
        out = np.zeros(np.shape(x))
        for key, du in parts.items():
            w = 2.0 if key == "a12" else 1.0
            out = out + w * prob.coefficient(key)(x, y) * du(x, y)
        return out

    prob.f = f
    return prob


def collocation_points(space: SplineSpace, dprime: int | None = None):
    """Interior domain points of degree ``dprime`` over all triangles, each once.

    Returns ``(points, triangle, bary)``; a point shared by several triangles
    is assigned to the lowest-index one.
    """
    D = space.d if dprime is None else int(dprime)
    if D < 1:
        raise ValueError("collocation degree must be >= 1")
    tri = space.tri
    table = space.edge_table
    boundary_vertices = set(table.edges[~table.interior].ravel().tolist())
    boundary_edges = {tuple(e) for e in table.edges[~table.interior].tolist()}
    idx = bform.multi_indices(D)
    seen = set()
    pts, owners, barys = [], [], []
    for t in range(tri.n_triangles):
        tv = [int(v) for v in tri.triangles[t]]
        P = bform.domain_points(D, tri.vertices[tv])
        for alpha, p in zip(idx.tolist(), P):
            support = [(tv[k], alpha[k]) for k in range(3) if alpha[k] > 0]
            key = tuple(sorted(support))
            if key in seen:
                continue
            seen.add(key)
            verts = [v for v, _ in support]
            if len(verts) == 1 and verts[0] in boundary_vertices:
                continue
            if len(verts) == 2 and tuple(sorted(verts)) in boundary_edges:
                continue
            pts.append(p)
            owners.append(t)
            barys.append(np.asarray(alpha, dtype=float) / D)
    return np.array(pts).reshape(-1, 2), np.array(owners, dtype=np.int64), np.array(barys).reshape(-1, 3)


_ORDERS = {"a11": (2, 0), "a12": (1, 1), "a22": (0, 2), "b1": (1, 0), "b2": (0, 1), "c0": (0, 0)}


def operator_rows(space: SplineSpace, problem: EllipticProblem, owners, barys, pts) -> sp.csr_matrix:
    """Rows of the differential operator applied to every basis function."""
    m = space.local_dim
    n = len(pts)
    data = np.zeros((n, m))
    for t in np.unique(owners):
        sel = np.flatnonzero(owners == t)
        tv = space.tri.triangle_vertices(t)
        rows = bform.derivative_rows(space.d, tv, barys[sel], list(_ORDERS.values()))
        x, y = pts[sel, 0], pts[sel, 1]
        for key, order in _ORDERS.items():
            coef = problem.coefficient(key)(x, y)
            if key == "a12":
                coef = 2.0 * coef
            if np.all(coef == 0):
                continue
            data[sel] += coef[:, None] * rows[order]
    cols = owners[:, None] * m + np.arange(m)[None, :]
    return sp.csr_matrix((data.ravel(), (np.repeat(np.arange(n), m), cols.ravel())), shape=(n, space.n_coeffs))


def assemble_collocation(space: SplineSpace, problem: EllipticProblem, dprime: int | None = None):
    """Collocation matrix ``K`` (operator at interior domain points) and rhs ``f``."""
    problem.check_ellipticity(space.tri)
    pts, owners, barys = collocation_points(space, dprime)
    K = operator_rows(space, problem, owners, barys, pts)
    f = np.asarray(problem.f(pts[:, 0], pts[:, 1]), dtype=float) * np.ones(len(pts))
    return K, f, pts


def residual_norm(space: SplineSpace, c, problem: EllipticProblem, degree: int | None = None) -> float:
    """``||L s - f||_{L2}`` by per-triangle Gauss quadrature."""
    q = 2 * space.d if degree is None else degree
    nodes, w = bform.triangle_quadrature(q)
    areas = space.tri.areas()
    total = 0.0
    for t in range(space.tri.n_triangles):
        tv = space.tri.triangle_vertices(t)
        pts = nodes @ tv
        owners = np.full(len(pts), t)
        row = operator_rows(space, problem, owners, nodes, pts)
        r = row @ c - problem.f(pts[:, 0], pts[:, 1])
        total += areas[t] * float(w @ r**2)
    return float(np.sqrt(total))


def solve_elliptic(
    space: SplineSpace,
    problem: EllipticProblem,
    dprime: int | None = None,
    samples_per_edge: int | None = None,
    config: lsq.SolverConfig | None = None,
):
    """Collocation solve: ``min ||K c - f||^2`` s.t. ``B c = G``, ``H c = 0``."""
    K, f, _ = assemble_collocation(space, problem, dprime)
    if K.shape[0] == 0:
        raise ValueError("no interior collocation points; raise dprime or refine the mesh")
    qp = lsq.QuadraticProgram(space.n_coeffs)
    qp.add_term(K, f)
    qp.add_equality(boundary_matrix(space, problem.g, samples_per_edge))
    qp.add_equality(smoothness_matrix(space))
    rep = lsq.solve(qp, config)
    rep.epsilon1 = residual_norm(space, rep.c, problem)
    return Spline(space, rep.c, rep), rep


# ------------------------------------------------------------- error norms

def grid_points_in_domain(tri: Triangulation, grid_n: int):
    lo, hi = tri.bounding_box()
    xs = np.linspace(lo[0], hi[0], grid_n)
    ys = np.linspace(lo[1], hi[1], grid_n)
    X, Y = np.meshgrid(xs, ys)
    pts = np.column_stack([X.ravel(), Y.ravel()])
    idx, bary = locate_many(tri, pts)
    keep = idx != OUTSIDE
    return pts[keep], idx[keep], bary[keep]


def grid_errors(s: Spline, u: Callable, grid_n: int = 501):
    """RMSE and max error on the in-domain points of a ``grid_n`` square grid."""
    pts, idx, bary = grid_points_in_domain(s.space.tri, grid_n)
    vals = np.empty(len(pts))
    for t in np.unique(idx):
        sel = np.flatnonzero(idx == t)
        vals[sel] = s.space.evaluate_on_triangle(s.c, t, bary[sel])
    err = vals - u(pts[:, 0], pts[:, 1])
    return float(np.sqrt(np.mean(err**2))), float(np.max(np.abs(err)))


def l2_errors(s: Spline, exact: Manufactured, degree: int | None = None):
    """``||u - s||_{L2}`` and ``||grad(u - s)||_{L2}`` by Gauss quadrature."""
    q = 2 * s.space.d if degree is None else degree
    nodes, w = bform.triangle_quadrature(q)
    areas = s.space.tri.areas()
    e0 = e1 = 0.0
    for t in range(s.space.tri.n_triangles):
        pts = nodes @ s.space.tri.triangle_vertices(t)
        x, y = pts[:, 0], pts[:, 1]
        v = s.space.evaluate_on_triangle(s.c, t, nodes)
        vx = s.space.evaluate_on_triangle(s.c, t, nodes, (1, 0))
        vy = s.space.evaluate_on_triangle(s.c, t, nodes, (0, 1))
        e0 += areas[t] * float(w @ (v - exact.u(x, y)) ** 2)
        e1 += areas[t] * float(w @ ((vx - exact.ux(x, y)) ** 2 + (vy - exact.uy(x, y)) ** 2))
    return float(np.sqrt(e0)), float(np.sqrt(e1))


@dataclass
class ConvergenceRow:
    mesh_size: float
    L2_error: float
    grad_L2_error: float
    RMSE: float
    max_error: float
    epsilon1: float
    n_triangles: int = 0

    FIELDS = ("mesh_size", "n_triangles", "L2_error", "grad_L2_error", "RMSE", "max_error", "epsilon1")

    def as_csv(self) -> str:
        return ",".join(f"{getattr(self, k):.17g}" if k != "n_triangles" else str(self.n_triangles) for k in self.FIELDS)


@dataclass
class ConvergenceResult:
    rows: list = field(default_factory=list)
    L2_rate: float | str = "EXACT"
    grad_rate: float | str = "EXACT"

    def as_csv(self) -> str:
        out = [",".join(ConvergenceRow.FIELDS)] + [r.as_csv() for r in self.rows]
        out.append(f"# L2_rate={self.L2_rate}")
        out.append(f"# grad_rate={self.grad_rate}")
        return "\n".join(out) + "\n"


EXACT_TOL = 1e-9


def fitted_rate(h, err):
    """Least-squares slope of ``log err`` against ``log h``; ``EXACT`` at round-off level."""
    h = np.asarray(h, dtype=float)
    err = np.asarray(err, dtype=float)
    if np.all(err < EXACT_TOL):
        return "EXACT"
    slope, _ = np.polyfit(np.log(h), np.log(err), 1)
    return float(slope)


def convergence_study(
    exact: Manufactured,
    tri0: Triangulation,
    d: int,
    r: int,
    levels: int = 3,
    problem: EllipticProblem | None = None,
    dprime: int | None = None,
    grid_n: int = 101,
    config: lsq.SolverConfig | None = None,
) -> ConvergenceResult:
    """Solve on ``levels`` successive uniform refinements and fit error rates."""
    if levels < 3:
        raise ValueError("need at least 3 levels")
    problem = problem or poisson_problem(exact)
    rows = []
    tri = tri0
    for lev in range(levels):
        if lev > 0:
            tri = refine_uniform(tri)
        space = SplineSpace(tri, d, r)
        s, rep = solve_elliptic(space, problem, dprime, config=config)
        l2, h1 = l2_errors(s, exact)
        rmse, mx = grid_errors(s, exact.u, grid_n)
        rows.append(ConvergenceRow(tri.mesh_size(), l2, h1, rmse, mx, rep.epsilon1, tri.n_triangles))
        logger.info("level %d: h=%.4g L2=%.3e H1=%.3e", lev, rows[-1].mesh_size, l2, h1)
    h = [row.mesh_size for row in rows]
    return ConvergenceResult(
        rows,
        fitted_rate(h, [row.L2_error for row in rows]),
        fitted_rate(h, [row.grad_L2_error for row in rows]),
    )
