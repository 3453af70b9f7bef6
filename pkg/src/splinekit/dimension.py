"""Dimension of S^r_d: Schumaker's lower/upper bounds and an exact rank count."""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

import numpy as np

from .constraints import SplineSpace, smoothness_matrix

MAX_RANK_COLUMNS = 20000


@dataclass
class DimensionReport:
    D: int
    sigma: list = field(default_factory=list)
    sigma_tilde: list = field(default_factory=list)
    lower: int = 0
    upper: int = 0
    rank_dim: int | None = None
    n_interior_edges: int = 0
    n_interior_vertices: int = 0

    def as_text(self) -> str:
        lines = [
            f"D={self.D}",
            f"E_I={self.n_interior_edges}",
            f"V_I={self.n_interior_vertices}",
            f"sigma={','.join(str(s) for s in self.sigma)}",
            f"sigma_tilde={','.join(str(s) for s in self.sigma_tilde)}",
            f"L={self.lower}",
            f"U={self.upper}",
        ]
        if self.rank_dim is not None:
            lines.append(f"rank_dim={self.rank_dim}")
        return "\n".join(lines) + "\n"


def _sigma(d, r, m):
    return sum(max(r + j + 1 - j * m, 0) for j in range(1, d - r + 1))


def _edge_angle(V, a, b):
    dx, dy = V[b] - V[a]
    return float(np.arctan2(dy, dx) % np.pi)


def _count_slopes(angles, tol):
    distinct = []
    for ang in sorted(angles):
        if not any(min(abs(ang - s), np.pi - abs(ang - s)) < tol for s in distinct):
            distinct.append(ang)
    return len(distinct)


def slope_counts(space: SplineSpace, slope_tol: float = 1e-9):
    """``(m_v, m~_v)`` for every interior vertex in increasing index order.

    ``m~_v`` counts distinct slopes among edges at ``v`` whose other endpoint
    is not an interior vertex processed earlier.
    """
    table = space.edge_table
    V = space.tri.vertices
    inner = np.flatnonzero(table.interior_vertices)
    done = set()
    m, mt = [], []
    for v in inner.tolist():
        all_angles, fresh = [], []
        for e in table.vertex_edges[v]:
            a, b = (int(x) for x in table.edges[e])
            w = b if a == v else a
            ang = _edge_angle(V, v, w)
            all_angles.append(ang)
            if w not in done:
                fresh.append(ang)
        m.append(_count_slopes(all_angles, slope_tol))
        mt.append(_count_slopes(fresh, slope_tol))
        done.add(v)
    return inner, m, mt


def schumaker_bounds(space: SplineSpace, slope_tol: float = 1e-9) -> DimensionReport:
    d, r = space.d, space.r
    if r < 0 or r > d:
        raise ValueError(f"bounds need 0 <= r <= d, got r={r}, d={d}")
    table = space.edge_table
    EI = table.n_interior_edges
    VI = table.n_interior_vertices
    D = comb(d + 2, 2) + comb(d - r + 1, 2) * EI - (comb(d + 2, 2) - comb(r + 2, 2)) * VI
    _, m, mt = slope_counts(space, slope_tol)
    sigma = [_sigma(d, r, k) for k in m]
    sigma_t = [_sigma(d, r, k) for k in mt]
    return DimensionReport(
        D=D,
        sigma=sigma,
        sigma_tilde=sigma_t,
        lower=D + sum(sigma),
        upper=D + sum(sigma_t),
        n_interior_edges=EI,
        n_interior_vertices=VI,
    )


def dim_via_rank(space: SplineSpace, rtol: float = 1e-9) -> int:
    """Exact dimension as the nullity of the smoothness matrix (dense SVD)."""
    n = space.n_coeffs
    if n > MAX_RANK_COLUMNS:
        raise ValueError(f"{n} coefficients exceed the rank-oracle guard of {MAX_RANK_COLUMNS}")
    H = smoothness_matrix(space).matrix
    if H.shape[0] == 0:
        return n
    s = np.linalg.svd(H.toarray(), compute_uv=False)
    rank = int(np.sum(s > rtol * s[0]))
    return n - rank


def dimension_report(space: SplineSpace, with_rank: bool = True, slope_tol: float = 1e-9) -> DimensionReport:
    rep = schumaker_bounds(space, slope_tol)
    if with_rank:
        rep.rank_dim = dim_via_rank(space)
    return rep
