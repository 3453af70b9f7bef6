"""Bernstein-Bezier polynomials on a single triangle.

Multi-indices ``(a1, a2, a3)`` with ``a1 + a2 + a3 = d`` are kept in one
canonical order: lexicographically decreasing on ``(a1, a2)``.  For ``d = 2``
this is ``200, 110, 101, 020, 011, 002``.
"""

from __future__ import annotations

from functools import lru_cache
from math import comb, factorial

import numpy as np

MAX_DEGREE = 18


class DegenerateTriangleError(ValueError):
    pass


def dim(d: int) -> int:
    """Number of Bernstein polynomials of degree ``d``, C(d+2, 2)."""
    return (d + 1) * (d + 2) // 2


@lru_cache(maxsize=None)
def _indices(d):
    out = [(i, j, d - i - j) for i in range(d, -1, -1) for j in range(d - i, -1, -1)]
    arr = np.array(out, dtype=np.int64).reshape(-1, 3)
    arr.setflags(write=False)
    return arr


def multi_indices(d: int) -> np.ndarray:
    """Canonical multi-indices of degree ``d``, shape (C(d+2,2), 3)."""
    if d < 0:
        raise ValueError(f"degree must be nonnegative, got {d}")
    return _indices(d)


@lru_cache(maxsize=None)
def _position(d):
    return {tuple(int(x) for x in a): k for k, a in enumerate(_indices(d))}


def index_of(alpha) -> int:
    """Position of a multi-index in canonical order."""
    a1, a2, a3 = (int(x) for x in alpha)
    d = a1 + a2 + a3
    # rows with larger a1 come first: sum_{i>a1} (d-i+1)
    before = sum(d - i + 1 for i in range(a1 + 1, d + 1))
    return before + (d - a1 - a2)


@lru_cache(maxsize=None)
def _multinomials(d):
    idx = _indices(d)
    c = np.array([factorial(d) // (factorial(a) * factorial(b) * factorial(g)) for a, b, g in idx], dtype=float)
    c.setflags(write=False)
    return c


def barycentric(tri_vertices, p) -> np.ndarray:
    """Barycentric coordinates of ``p`` (or an (N, 2) array of points)."""
    v = np.asarray(tri_vertices, dtype=float)
    A = np.array([[1.0, 1.0, 1.0], v[:, 0], v[:, 1]])
    det = np.linalg.det(A)
    scale = max(np.ptp(v[:, 0]), np.ptp(v[:, 1])) ** 2
    if abs(det) <= 1e-14 * scale:
        raise DegenerateTriangleError("triangle has zero area")
    pts = np.asarray(p, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    rhs = np.vstack([np.ones(len(pts)), pts[:, 0], pts[:, 1]])
    b = np.linalg.solve(A, rhs).T
    return b[0] if single else b


def domain_points(d: int, tri_vertices) -> np.ndarray:
    """Points ``(a1 v1 + a2 v2 + a3 v3) / d`` in canonical order."""
    if d < 1:
        raise ValueError("domain points need d >= 1")
    v = np.asarray(tri_vertices, dtype=float)
    return multi_indices(d) @ v / d


def basis_rows(d: int, bary) -> np.ndarray:
    """Values of all ``B^d_alpha`` at one or many barycentric points.

    Returns shape (C(d+2,2),) for a single point and (N, C(d+2,2)) otherwise.
    """
    b = np.asarray(bary, dtype=float)
    single = b.ndim == 1
    b = np.atleast_2d(b)
    idx = multi_indices(d)
    # powers table: pw[k][:, e] = b_k ** e
    pw = [b[:, k : k + 1] ** np.arange(d + 1)[None, :] for k in range(3)]
    rows = _multinomials(d)[None, :] * pw[0][:, idx[:, 0]] * pw[1][:, idx[:, 1]] * pw[2][:, idx[:, 2]]
    return rows[0] if single else rows


eval_basis_row = basis_rows


def de_casteljau(coeffs, bary) -> float:
    """Evaluate a B-form polynomial by repeated convex combination."""
    c = np.asarray(coeffs, dtype=float)
    n = len(c)
    d = int(round((np.sqrt(8 * n + 1) - 3) / 2))
    if dim(d) != n:
        raise ValueError(f"coefficient length {n} is not C(d+2,2)")
    b1, b2, b3 = (float(x) for x in bary)
    cur = {tuple(a): c[k] for k, a in enumerate(multi_indices(d).tolist())}
    for m in range(d, 0, -1):
        cur = {
            (i, j, m - 1 - i - j): b1 * cur[(i + 1, j, m - 1 - i - j)]
            + b2 * cur[(i, j + 1, m - 1 - i - j)]
            + b3 * cur[(i, j, m - i - j)]
            for i in range(m - 1, -1, -1)
            for j in range(m - 1 - i, -1, -1)
        }
    return float(cur[(0, 0, 0)])


eval_bform = de_casteljau


def bernstein_sum(coeffs, bary) -> np.ndarray:
    """Explicit sum ``sum c_alpha B_alpha(b)``; vectorized over points."""
    c = np.asarray(coeffs, dtype=float)
    d = int(round((np.sqrt(8 * len(c) + 1) - 3) / 2))
    return basis_rows(d, bary) @ c


@lru_cache(maxsize=None)
def _shift_table(d):
    # for each beta with |beta| = d-1, positions of beta+e1, beta+e2, beta+e3 in degree d
    low = _indices(d - 1)
    pos = _position(d)
    tab = np.array(
        [[pos[(a + 1, b, g)], pos[(a, b + 1, g)], pos[(a, b, g + 1)]] for a, b, g in low.tolist()],
        dtype=np.int64,
    ).reshape(-1, 3)
    tab.setflags(write=False)
    return tab


def directional_reduction(d: int, a) -> np.ndarray:
    """Matrix (C(d+1,2) x C(d+2,2)) of the degree-lowering step along ``a``.

    For directional coordinates ``a`` (summing to 0 for a direction vector),
    the derivative of ``sum c_alpha B^d_alpha`` is
    ``d * sum_beta (R c)_beta B^{d-1}_beta``.
    """
    tab = _shift_table(d)
    R = np.zeros((len(tab), dim(d)))
    rows = np.arange(len(tab))
    for k in range(3):
        np.add.at(R, (rows, tab[:, k]), a[k])
    return R


def bary_gradients(tri_vertices) -> np.ndarray:
    """Cartesian gradients of the three barycentric coordinates, shape (3, 2).

    Row ``k`` holds ``(db_k/dx, db_k/dy)``; column 0 gives the directional
    coordinates of the unit x-direction.
    """
    v = np.asarray(tri_vertices, dtype=float)
    A = np.array([[1.0, 1.0, 1.0], v[:, 0], v[:, 1]])
    det = np.linalg.det(A)
    scale = max(np.ptp(v[:, 0]), np.ptp(v[:, 1])) ** 2
    if abs(det) <= 1e-14 * scale:
        raise DegenerateTriangleError("triangle has zero area")
    Ainv = np.linalg.inv(A)
    return Ainv[:, 1:]


def derivative_operator(d: int, tri_vertices, order) -> np.ndarray:
    """Map local coefficients to B-form coefficients (degree d-k) of a partial.

    ``order = (px, py)`` with ``px + py = k <= 2``.  The result ``L`` satisfies
    ``D^order s = sum_beta (L c)_beta B^{d-k}_beta``.
    """
    px, py = order
    k = px + py
    if k > d:
        return np.zeros((1, dim(d)))
    G = bary_gradients(tri_vertices)
    dirs = [G[:, 0]] * px + [G[:, 1]] * py
    L = np.eye(dim(d))
    deg = d
    for a in dirs:
        L = deg * directional_reduction(deg, a) @ L
        deg -= 1
    return L


def derivative_rows(d: int, tri_vertices, bary, orders) -> dict:
    """Rows mapping local coefficients to Cartesian partials at ``bary``.

    ``orders`` is a list of ``(px, py)`` with total order <= 2.  Returns a
    dict keyed by order; each value has shape (C(d+2,2),) for one point or
    (N, C(d+2,2)) for many.
    """
    out = {}
    for order in orders:
        order = (int(order[0]), int(order[1]))
        if sum(order) > 2 or min(order) < 0:
            raise ValueError(f"unsupported derivative order {order}")
        k = sum(order)
        if k > d:
            b = np.atleast_2d(np.asarray(bary, dtype=float))
            rows = np.zeros((len(b), dim(d)))
            out[order] = rows[0] if np.asarray(bary).ndim == 1 else rows
            continue
        L = derivative_operator(d, tri_vertices, order)
        out[order] = basis_rows(d - k, bary) @ L
    return out


def product_integral_matrix(d: int, tri_vertices) -> np.ndarray:
    """Exact Gram matrix ``int_T B^d_alpha B^d_beta``."""
    v = np.asarray(tri_vertices, dtype=float)
    area = 0.5 * abs((v[1, 0] - v[0, 0]) * (v[2, 1] - v[0, 1]) - (v[2, 0] - v[0, 0]) * (v[1, 1] - v[0, 1]))
    return area * _reference_gram(d)


@lru_cache(maxsize=None)
def _reference_gram(d):
    idx = _indices(d).tolist()
    n = len(idx)
    denom = comb(2 * d, d) * comb(2 * d + 2, 2)
    M = np.empty((n, n))
    for i, a in enumerate(idx):
        for j, b in enumerate(idx):
            M[i, j] = comb(a[0] + b[0], a[0]) * comb(a[1] + b[1], a[1]) * comb(a[2] + b[2], a[2]) / denom
    M.setflags(write=False)
    return M


def interpolation_coefficients(d: int, tri_vertices, func) -> np.ndarray:
    """B-coefficients of the degree-d interpolant of ``func(x, y)`` at domain points."""
    pts = domain_points(d, tri_vertices)
    V = basis_rows(d, barycentric(tri_vertices, pts))
    return np.linalg.solve(V, func(pts[:, 0], pts[:, 1]))


# -------------------------------------------------------------- quadrature

@lru_cache(maxsize=None)
def _duffy_rule(degree):
    n = degree // 2 + 1
    x, w = np.polynomial.legendre.leggauss(n + 1)
    # collapsed square -> reference triangle (0,0),(1,0),(0,1)
    u = 0.5 * (x + 1.0)
    wu = 0.5 * w
    U, V = np.meshgrid(u, u, indexing="ij")
    WU, WV = np.meshgrid(wu, wu, indexing="ij")
    xs = U.ravel()
    ys = (V * (1.0 - U)).ravel()
    ws = 2.0 * (WU * WV * (1.0 - U)).ravel()
    bary = np.column_stack([1.0 - xs - ys, xs, ys])
    bary.setflags(write=False)
    ws.setflags(write=False)
    return bary, ws


def triangle_quadrature(degree: int):
    """Collapsed Gauss-Legendre rule on the reference triangle.

    Returns barycentric nodes (N, 3) and weights summing to 1 (multiply by
    the triangle area). Exact for polynomials of total degree ``degree``.
    """
    return _duffy_rule(int(degree))
