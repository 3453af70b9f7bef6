"""Scattered-data fitting with smooth splines, level-set curves and contours."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import lsq
from .constraints import SplineSpace, edge_jumps, interpolation_matrix, smoothness_matrix
from .mesh import OUTSIDE, locate_many

SMOOTH_TOL = 1e-8


@dataclass
class Spline:
    space: SplineSpace
    c: np.ndarray
    report: lsq.SolveReport | None = None

    @property
    def smoothness_residual(self) -> float:
        return smoothness_matrix(self.space).violation(self.c)

    @property
    def certified(self) -> bool:
        return self.smoothness_residual <= SMOOTH_TOL

    def __call__(self, x, y=None, order=(0, 0)):
        pts = np.column_stack([np.ravel(x), np.ravel(y)]) if y is not None else np.atleast_2d(x)
        return self.space.evaluate(self.c, pts, order)

    def energy(self) -> float:
        return lsq.thin_plate_energy(self.space, self.c)

    def max_jump(self, n_points: int = 20, max_order=None) -> float:
        return edge_jumps(self.space, self.c, n_points, max_order)

    def to_csv(self, path) -> None:
        """Write ``tri,a1,a2,a3,coef`` rows in canonical order to a path or text stream."""
        from . import bform

        idx = bform.multi_indices(self.space.d).tolist()
        m = len(idx)
        lines = ["tri,a1,a2,a3,coef\n"]
        for t in range(self.space.tri.n_triangles):
            lines += [f"{t},{a1},{a2},{a3},{self.c[t * m + k]:.17g}\n" for k, (a1, a2, a3) in enumerate(idx)]
        _write_lines(lines, path)


def read_coefficients(path, space: SplineSpace) -> np.ndarray:
    from . import bform

    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    c = np.zeros(space.n_coeffs)
    m = space.local_dim
    for t, a1, a2, a3, v in data:
        c[int(t) * m + bform.index_of((int(a1), int(a2), int(a3)))] = v
    return c


class PenalizedFitter:
    """``min sum |s(p_i) - z_i|^2 + lam E(s)`` subject to ``H c = 0``.

    The design is factorized once; :meth:`fit` accepts one data vector or a
    matrix with one column per data set.
    """

    def __init__(self, space: SplineSpace, points, lam: float = 1.0, config: lsq.SolverConfig | None = None):
        if lam < 0:
            raise ValueError("lambda must be nonnegative")
        self.space = space
        self.points = np.atleast_2d(np.asarray(points, dtype=float))
        if len(self.points) == 0:
            raise ValueError("need at least one data point")
        self.lam = float(lam)
        self.config = config or lsq.SolverConfig()
        self.A = space.basis_matrix(self.points)
        self.H = smoothness_matrix(space)
        Q = self.A.T @ self.A
        if lam > 0:
            Q = Q + lam * lsq.energy_matrix(space)
        self._solver = lsq.ConstrainedSolver(Q, self.H.matrix, self.config)

    def fit_coefficients(self, values) -> np.ndarray:
        z = np.asarray(values, dtype=float)
        c, _ = self._solver.solve(self.A.T @ z, np.zeros(self.H.n_rows))
        return c

    def fit(self, values) -> Spline:
        c = self.fit_coefficients(values)
        return Spline(self.space, c)


def fit_penalized(space: SplineSpace, points, values, lam: float = 1.0, config=None) -> Spline:
    """Penalized least-squares spline fit (thin-plate penalty, exact smoothness)."""
    qp = lsq.QuadraticProgram(space.n_coeffs)
    qp.add_term(space.basis_matrix(points), values)
    if lam > 0:
        qp.set_energy(lsq.energy_matrix(space), lam)
    qp.add_equality(smoothness_matrix(space))
    rep = lsq.solve(qp, config)
    return Spline(space, rep.c, rep)


def interpolate_min_energy(space: SplineSpace, points, values, config=None) -> Spline:
    """Minimal thin-plate energy spline through the given values."""
    qp = lsq.QuadraticProgram(space.n_coeffs)
    qp.set_energy(lsq.energy_matrix(space), 1.0)
    qp.add_equality(interpolation_matrix(space, points, values))
    qp.add_equality(smoothness_matrix(space))
    try:
        rep = lsq.solve(qp, config)
    except lsq.InfeasibleError as exc:
        raise lsq.InfeasibleError(f"interpolation conditions are inconsistent: {exc}") from exc
    return Spline(space, rep.c, rep)


@dataclass
class LevelSetProblem:
    """Point cloud (target 1), outer boundary (target 0), hole boundaries (target 2)."""

    cloud: np.ndarray
    outer: np.ndarray
    holes: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    lam: float = 1e-3

    CLOUD_VALUE = 1.0
    OUTER_VALUE = 0.0
    HOLE_VALUE = 2.0

    def data(self):
        cloud = np.atleast_2d(np.asarray(self.cloud, dtype=float)).reshape(-1, 2)
        outer = np.atleast_2d(np.asarray(self.outer, dtype=float)).reshape(-1, 2)
        holes = np.atleast_2d(np.asarray(self.holes, dtype=float)).reshape(-1, 2)
        pts = np.vstack([cloud, outer, holes])
        z = np.concatenate(
            [
                np.full(len(cloud), self.CLOUD_VALUE),
                np.full(len(outer), self.OUTER_VALUE),
                np.full(len(holes), self.HOLE_VALUE),
            ]
        )
        return pts, z


def solve_levelset(problem: LevelSetProblem, space: SplineSpace, config=None) -> Spline:
    """Penalized fit whose level-1 set is the sought curve."""
    if len(problem.cloud) == 0 or len(problem.outer) == 0:
        raise ValueError("cloud and outer boundary must be nonempty")
    pts, z = problem.data()
    return fit_penalized(space, pts, z, problem.lam, config)


def grid_axes(space: SplineSpace, grid_n: int):
    lo, hi = space.tri.bounding_box()
    return np.linspace(lo[0], hi[0], grid_n), np.linspace(lo[1], hi[1], grid_n)


def sample_grid(s: Spline, grid_n: int, order=(0, 0)) -> np.ndarray:
    """Spline values on a ``grid_n`` x ``grid_n`` grid over the mesh bounding box.

    Entry ``[j, i]`` holds the value at ``(x_i, y_j)``; NaN marks points outside.
    """
    if grid_n < 2:
        raise ValueError("grid_n must be >= 2")
    xs, ys = grid_axes(s.space, grid_n)
    X, Y = np.meshgrid(xs, ys)
    vals = s.space.evaluate(s.c, np.column_stack([X.ravel(), Y.ravel()]), order)
    return vals.reshape(grid_n, grid_n)


def extract_contour(s: Spline, level: float, grid_n: int = 256) -> list:
    """Level curves by marching squares on a dense sampling of the spline.

    Cells with a corner outside the mesh are skipped. Returns a list of
    (K, 2) arrays of ``(x, y)`` points; closed curves repeat their first point.
    """
    from skimage import measure

    if grid_n < 16:
        raise ValueError("grid_n must be >= 16")
    Z = sample_grid(s, grid_n)
    inside = np.isfinite(Z)
    if not inside.any():
        return []
    zmin, zmax = np.nanmin(Z), np.nanmax(Z)
    if level < zmin or level > zmax:
        return []
    filled = np.where(inside, Z, zmin - 1.0)
    xs, ys = grid_axes(s.space, grid_n)
    curves = measure.find_contours(filled, level, mask=inside, positive_orientation="high")
    out = []
    for cv in curves:
        # rows index y, columns index x
        x = np.interp(cv[:, 1], np.arange(grid_n), xs)
        y = np.interp(cv[:, 0], np.arange(grid_n), ys)
        out.append(np.column_stack([x, y]))
    return out


def _write_lines(lines, path) -> None:
    if hasattr(path, "write"):
        path.writelines(lines)
    else:
        with open(path, "w") as fh:
            fh.writelines(lines)


def write_contours(curves, path) -> None:
    """``curve_id,x,y`` rows to a path or text stream."""
    lines = ["curve_id,x,y\n"]
    for k, cv in enumerate(curves):
        lines += [f"{k},{x:.17g},{y:.17g}\n" for x, y in cv]
    _write_lines(lines, path)


def write_grid(Z, path) -> None:
    """One CSV row per grid row; points outside the domain are ``NaN``."""
    _write_lines([",".join("NaN" if not np.isfinite(v) else f"{v:.17g}" for v in row) + "\n" for row in Z], path)


def circle_points(n: int, radius: float = 0.3, center=(0.5, 0.5)) -> np.ndarray:
    th = 2 * np.pi * np.arange(n) / n
    return np.column_stack([center[0] + radius * np.cos(th), center[1] + radius * np.sin(th)])


def square_boundary_points(n_per_side: int, lo=0.0, hi=1.0) -> np.ndarray:
    s = np.linspace(lo, hi, n_per_side + 1)[:-1]
    return np.vstack(
        [
            np.column_stack([s, np.full_like(s, lo)]),
            np.column_stack([np.full_like(s, hi), s]),
            np.column_stack([s[::-1] + (hi - lo) / n_per_side, np.full_like(s, hi)]),
            np.column_stack([np.full_like(s, lo), s[::-1] + (hi - lo) / n_per_side]),
        ]
    )


def hausdorff(curve_points, reference_points) -> float:
    from scipy.spatial import cKDTree

    a = np.asarray(curve_points)
    b = np.asarray(reference_points)
    return float(max(cKDTree(b).query(a)[0].max(), cKDTree(a).query(b)[0].max()))


def locate_inside(space: SplineSpace, points) -> np.ndarray:
    idx, _ = locate_many(space.tri, points)
    return idx != OUTSIDE
