"""Spline spaces over a triangulation and their linear constraint blocks.

Coefficients of a (discontinuous) spline live in one global vector,
triangle-major: triangle ``t`` owns entries ``t*m .. (t+1)*m - 1`` with
``m = C(d+2, 2)`` in canonical multi-index order.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.sparse as sp

from . import bform
from .mesh import OUTSIDE, EdgeTable, Triangulation, locate_many


class Label(str, Enum):
    SMOOTHNESS = "SMOOTHNESS"
    INTERP = "INTERP"
    BOUNDARY = "BOUNDARY"
    OTHER = "OTHER"


class OutsideDomainError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SplineSpace:
    """``S^r_d`` over ``tri``; ``r = -1`` means no smoothness at all."""

    tri: Triangulation
    d: int
    r: int

    def __post_init__(self):
        if self.d < 1 or self.d > bform.MAX_DEGREE:
            raise ValueError(f"degree must be in [1, {bform.MAX_DEGREE}]")
        if self.r < -1:
            raise ValueError("smoothness must be >= -1")
        if self.r > self.d:
            raise ValueError(f"smoothness r={self.r} exceeds degree d={self.d}")

    @property
    def edge_table(self) -> EdgeTable:
        return self.tri.edge_table

    @property
    def local_dim(self) -> int:
        return bform.dim(self.d)

    @property
    def n_coeffs(self) -> int:
        return self.tri.n_triangles * self.local_dim

    def block(self, t: int) -> slice:
        m = self.local_dim
        return slice(t * m, (t + 1) * m)

    def local_index(self, t: int, exps: dict) -> int:
        """Column of the coefficient of triangle ``t`` with exponents keyed by vertex id."""
        tv = self.tri.triangles[t]
        alpha = [exps.get(int(v), 0) for v in tv]
        return t * self.local_dim + bform.index_of(alpha)

    # ------------------------------------------------------------ evaluation

    def basis_matrix(self, points, tol: float = 1e-12, order=(0, 0)):
        """Sparse (N x n_coeffs) matrix of basis values (or a partial derivative).

        Raises :class:`OutsideDomainError` if a point is outside the mesh.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        idx, bary = locate_many(self.tri, pts, tol)
        if np.any(idx == OUTSIDE):
            bad = pts[np.flatnonzero(idx == OUTSIDE)[0]]
            raise OutsideDomainError(f"point {tuple(bad)} lies outside the triangulation")
        return self._rows_at(idx, bary, order)

    def _rows_at(self, idx, bary, order=(0, 0)):
        m = self.local_dim
        n = len(idx)
        data = np.empty((n, m))
        k = sum(order)
        for t in np.unique(idx):
            sel = np.flatnonzero(idx == t)
            if k == 0:
                data[sel] = bform.basis_rows(self.d, bary[sel])
            elif k > self.d:
                data[sel] = 0.0
            else:
                L = bform.derivative_operator(self.d, self.tri.triangle_vertices(t), order)
                data[sel] = bform.basis_rows(self.d - k, bary[sel]) @ L
        cols = idx[:, None] * m + np.arange(m)[None, :]
        rows = np.repeat(np.arange(n), m)
        return sp.csr_matrix((data.ravel(), (rows, cols.ravel())), shape=(n, self.n_coeffs))

    def evaluate(self, c, points, order=(0, 0), tol: float = 1e-12) -> np.ndarray:
        """Values (or partials) of the spline with coefficients ``c``; NaN outside."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        c = np.asarray(c, dtype=float)
        idx, bary = locate_many(self.tri, pts, tol)
        out = np.full(len(pts), np.nan)
        k = sum(order)
        for t in np.unique(idx[idx != OUTSIDE]):
            sel = np.flatnonzero(idx == t)
            ct = c[self.block(t)]
            if k == 0:
                out[sel] = bform.basis_rows(self.d, bary[sel]) @ ct
            elif k > self.d:
                out[sel] = 0.0
            else:
                L = bform.derivative_operator(self.d, self.tri.triangle_vertices(t), order)
                out[sel] = bform.basis_rows(self.d - k, bary[sel]) @ (L @ ct)
        return out

    def evaluate_on_triangle(self, c, t: int, bary, order=(0, 0)) -> np.ndarray:
        ct = np.asarray(c, dtype=float)[self.block(t)]
        k = sum(order)
        if k == 0:
            return bform.basis_rows(self.d, bary) @ ct
        if k > self.d:
            return np.zeros(len(np.atleast_2d(bary)))
        L = bform.derivative_operator(self.d, self.tri.triangle_vertices(t), order)
        return bform.basis_rows(self.d - k, bary) @ (L @ ct)

    def interpolate(self, func) -> np.ndarray:
        """Coefficients of the piecewise degree-d interpolant of ``func(x, y)`` at domain points."""
        c = np.empty(self.n_coeffs)
        for t in range(self.tri.n_triangles):
            c[self.block(t)] = bform.interpolation_coefficients(self.d, self.tri.triangle_vertices(t), func)
        return c


@dataclass
class ConstraintBlock:
    """Sparse linear system piece ``matrix @ c = rhs``."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    label: Label = Label.OTHER

    @property
    def n_rows(self) -> int:
        return self.matrix.shape[0]

    def residual(self, c) -> np.ndarray:
        return self.matrix @ c - self.rhs

    def violation(self, c) -> float:
        if self.n_rows == 0:
            return 0.0
        return float(np.max(np.abs(self.residual(c))))

    def triplets(self):
        coo = self.matrix.tocoo()
        return coo.row, coo.col, coo.data

    def to_matrix_market(self, path, rhs_path=None) -> None:
        import scipy.io

        scipy.io.mmwrite(str(path), self.matrix.tocoo(), precision=17)
        if rhs_path is not None:
            scipy.io.mmwrite(str(rhs_path), self.rhs.reshape(-1, 1), precision=17)


def stack_blocks(blocks, n_cols: int, label=Label.OTHER) -> ConstraintBlock:
    blocks = [b for b in blocks if b is not None and b.n_rows > 0]
    if not blocks:
        return ConstraintBlock(sp.csr_matrix((0, n_cols)), np.zeros(0), label)
    return ConstraintBlock(
        sp.vstack([b.matrix for b in blocks]).tocsr(),
        np.concatenate([b.rhs for b in blocks]),
        label,
    )


def _edge_frames(space: SplineSpace, e: int):
    """Vertices (v1, v2, v3, v4) of the two triangles around interior edge ``e``.

    ``T = <v1, v2, v3>`` is the lower-index triangle with ``v1`` opposite the
    edge, and ``T~ = <v4, v3, v2>`` is its neighbour.
    """
    table = space.edge_table
    tri = space.tri
    t, tt = int(table.left[e]), int(table.right[e])
    a, b = (int(x) for x in table.edges[e])
    tv = [int(x) for x in tri.triangles[t]]
    i = next(k for k in range(3) if tv[k] not in (a, b))
    v1, v2, v3 = tv[i], tv[(i + 1) % 3], tv[(i + 2) % 3]
    v4 = next(int(x) for x in tri.triangles[tt] if int(x) not in (a, b))
    return t, tt, (v1, v2, v3, v4)


def smoothness_matrix(space: SplineSpace) -> ConstraintBlock:
    """Stack the cross-edge C^n conditions, n = 0..r, over all interior edges.

    For ``T = <v1,v2,v3>`` and ``T~ = <v4,v3,v2>`` and exponents
    ``p + q = d - n`` on ``(v2, v3)``::

        c~[v4^n v2^p v3^q] = sum_{|g|=n} c[v1^g1 v2^(p+g2) v3^(q+g3)] B^n_g(b(v4))

    where ``b(v4)`` are the barycentric coordinates of ``v4`` in ``T``.
    """
    d, r = space.d, space.r
    if r > d:
        raise ValueError("r > d")
    rows, cols, vals = [], [], []
    row = 0
    if r >= 0:
        table = space.edge_table
        V = space.tri.vertices
        for e in np.flatnonzero(table.interior):
            t, tt, (v1, v2, v3, v4) = _edge_frames(space, int(e))
            lam = bform.barycentric(V[[v1, v2, v3]], V[v4])
            for n in range(r + 1):
                gam = bform.multi_indices(n)
                weights = bform.basis_rows(n, lam) if n > 0 else np.ones(1)
                for p in range(d - n, -1, -1):
                    q = d - n - p
                    rows.append(row)
                    cols.append(space.local_index(tt, {v4: n, v2: p, v3: q}))
                    vals.append(1.0)
                    for g, w in zip(gam.tolist(), weights):
                        if w == 0.0:
                            continue
                        rows.append(row)
                        cols.append(space.local_index(t, {v1: g[0], v2: p + g[1], v3: q + g[2]}))
                        vals.append(-float(w))
                    row += 1
    H = sp.csr_matrix((vals, (rows, cols)), shape=(row, space.n_coeffs))
    H.sum_duplicates()
    return ConstraintBlock(H, np.zeros(row), Label.SMOOTHNESS)


def interpolation_matrix(space: SplineSpace, points, values) -> ConstraintBlock:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    vals = np.asarray(values, dtype=float).ravel()
    if len(vals) != len(pts):
        raise ValueError("points and values differ in length")
    return ConstraintBlock(space.basis_matrix(pts), vals, Label.INTERP)


def boundary_points(space: SplineSpace, samples_per_edge=None):
    """Equally spaced samples on every boundary edge, shared vertices kept once.

    Returns ``(points, triangles, bary)``.
    """
    m = space.d + 1 if samples_per_edge is None else int(samples_per_edge)
    if m < space.d + 1:
        raise ValueError("samples_per_edge must be >= d + 1")
    table = space.edge_table
    tri = space.tri
    seen = set()
    pts, owners, barys = [], [], []
    s = np.linspace(0.0, 1.0, m)
    for e in np.flatnonzero(~table.interior):
        a, b = (int(x) for x in table.edges[e])
        t = int(table.left[e])
        tv = tri.triangle_vertices(t)
        for j, sj in enumerate(s):
            if j == 0 or j == m - 1:
                vid = a if j == 0 else b
                if vid in seen:
                    continue
                seen.add(vid)
            p = (1 - sj) * tri.vertices[a] + sj * tri.vertices[b]
            pts.append(p)
            owners.append(t)
            barys.append(bform.barycentric(tv, p))
    return np.array(pts).reshape(-1, 2), np.array(owners, dtype=np.int64), np.array(barys).reshape(-1, 3)


def boundary_matrix(space: SplineSpace, g, samples_per_edge=None) -> ConstraintBlock:
    """Rows forcing ``s = g`` at equally spaced points of every boundary edge."""
    pts, owners, barys = boundary_points(space, samples_per_edge)
    M = space._rows_at(owners, barys)
    rhs = np.asarray(g(pts[:, 0], pts[:, 1]), dtype=float) * np.ones(len(pts))
    return ConstraintBlock(M, rhs, Label.BOUNDARY)


def edge_jumps(space: SplineSpace, c, n_points: int = 20, max_order=None, seed: int = 0) -> float:
    """Largest jump of any partial derivative up to ``max_order`` across interior edges.

    Samples ``n_points`` random points strictly inside each interior edge and
    compares the two one-sided polynomials.
    """
    order_max = space.r if max_order is None else max_order
    if order_max < 0:
        return 0.0
    rng = np.random.default_rng(seed)
    table = space.edge_table
    V = space.tri.vertices
    worst = 0.0
    orders = [(i, k - i) for k in range(order_max + 1) for i in range(k + 1)]
    for e in np.flatnonzero(table.interior):
        a, b = table.edges[e]
        s = rng.uniform(0.02, 0.98, n_points)
        pts = (1 - s)[:, None] * V[a] + s[:, None] * V[b]
        t1, t2 = int(table.left[e]), int(table.right[e])
        b1 = bform.barycentric(space.tri.triangle_vertices(t1), pts)
        b2 = bform.barycentric(space.tri.triangle_vertices(t2), pts)
        for order in orders:
            j = space.evaluate_on_triangle(c, t1, b1, order) - space.evaluate_on_triangle(c, t2, b2, order)
            worst = max(worst, float(np.max(np.abs(j))))
    return worst
