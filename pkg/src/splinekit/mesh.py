"""Planar triangulations: storage, text I/O, adjacency, point location, refinement."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

#: inside test tolerance on barycentric coordinates
INSIDE_TOL = 1e-12

#: sentinel returned by :func:`locate` for points outside the mesh
OUTSIDE = -1


class MeshError(ValueError):
    """Raised for unreadable, degenerate or non-conforming meshes."""


def _signed_areas(vertices, triangles):
    p = vertices[triangles]
    return 0.5 * (
        (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
        - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1])
    )


@dataclass(frozen=True)
class EdgeTable:
    """Edge adjacency of a triangulation.

    Attributes
    ----------
    edges : ndarray (E, 2)
        Vertex pairs, stored with ``v_a < v_b``, sorted lexicographically.
    left, right : ndarray (E,)
        Incident triangles. ``right`` is ``-1`` for boundary edges. ``left``
        is the lower triangle index.
    interior : ndarray of bool (E,)
    vertex_edges : list of list of int
        Incident edge indices for every vertex.
    interior_vertices : ndarray of bool (V,)
    """

    edges: np.ndarray
    left: np.ndarray
    right: np.ndarray
    interior: np.ndarray
    vertex_edges: list
    interior_vertices: np.ndarray

    @property
    def n_interior_edges(self) -> int:
        return int(self.interior.sum())

    @property
    def n_interior_vertices(self) -> int:
        return int(self.interior_vertices.sum())

    def edge_index(self, a: int, b: int) -> int:
        lo, hi = min(a, b), max(a, b)
        for e in self.vertex_edges[lo]:
            if self.edges[e, 1] == hi:
                return e
        raise KeyError((a, b))


@dataclass(frozen=True, eq=False)
class Triangulation:
    """A conforming triangulation with counter-clockwise triangles.

    Construct through :func:`make_triangulation` (or :func:`load_mesh`),
    which validates and reorients the input.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_loops: list = field(default_factory=list)
    _edge_table: list = field(default_factory=list, repr=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def edge_table(self) -> EdgeTable:
        if not self._edge_table:
            self._edge_table.append(build_edge_table(self))
        return self._edge_table[0]

    def triangle_vertices(self, t: int) -> np.ndarray:
        return self.vertices[self.triangles[t]]

    def areas(self) -> np.ndarray:
        return _signed_areas(self.vertices, self.triangles)

    def area(self) -> float:
        return float(self.areas().sum())

    def mesh_size(self) -> float:
        """Longest edge length, the usual ``|Δ|``."""
        p = self.vertices[self.triangles]
        lengths = np.linalg.norm(p - np.roll(p, -1, axis=1), axis=2)
        return float(lengths.max())

    def bounding_box(self):
        lo = self.vertices.min(axis=0)
        hi = self.vertices.max(axis=0)
        return lo, hi


def make_triangulation(vertices, triangles, check_conformity: bool = True) -> Triangulation:
    """Validate raw arrays and build a :class:`Triangulation`.

    Triangles given clockwise are reoriented. Raises :class:`MeshError` on
    bad indices, non-finite coordinates, zero-area or overlapping triangles.
    """
    v = np.array(vertices, dtype=float).reshape(-1, 2)
    t = np.array(triangles, dtype=np.int64).reshape(-1, 3)
    if not np.all(np.isfinite(v)):
        raise MeshError("non-finite vertex coordinates")
    if len(t) == 0:
        raise MeshError("mesh has no triangles")
    if t.min() < 0 or t.max() >= len(v):
        raise MeshError("triangle index out of range")
    if np.any((t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2]) | (t[:, 0] == t[:, 2])):
        raise MeshError("triangle with repeated vertex")
    area = _signed_areas(v, t)
    scale = max(np.ptp(v[:, 0]), np.ptp(v[:, 1]), 1e-300) ** 2
    if np.any(np.abs(area) <= 1e-14 * scale):
        bad = int(np.argmax(np.abs(area) <= 1e-14 * scale))
        raise MeshError(f"degenerate triangle {bad}")
    cw = area < 0
    if cw.any():
        t[cw] = t[cw][:, [0, 2, 1]]
    tri = Triangulation(v, t)
    table = build_edge_table(tri)
    if check_conformity:
        _check_conforming(v, t, table)
    loops = _boundary_loops(tri, table)
    out = Triangulation(v, t, loops)
    out._edge_table.append(table)
    return out


def load_mesh(path) -> Triangulation:
    """Read the count-prefixed text format.

    Line 1 holds ``V T``, then ``V`` lines ``x y`` and ``T`` lines ``i j k``
    with 0-based indices. Lines starting with ``#`` are ignored.
    """
    lines = []
    for raw in Path(path).read_text().splitlines():
        s = raw.strip()
        if s and not s.startswith("#"):
            lines.append(s)
    try:
        nv, nt = (int(x) for x in lines[0].split())
        verts = [[float(x) for x in ln.split()] for ln in lines[1 : 1 + nv]]
        tris = [[int(x) for x in ln.split()] for ln in lines[1 + nv : 1 + nv + nt]]
    except (IndexError, ValueError) as exc:
        raise MeshError(f"cannot parse mesh file {path}: {exc}") from exc
    if len(verts) != nv or len(tris) != nt:
        raise MeshError(f"{path}: expected {nv} vertices and {nt} triangles")
    if any(len(p) != 2 for p in verts) or any(len(q) != 3 for q in tris):
        raise MeshError(f"{path}: malformed vertex or triangle line")
    return make_triangulation(verts, tris)


def save_mesh(tri: Triangulation, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"{tri.n_vertices} {tri.n_triangles}\n")
        for x, y in tri.vertices:
            fh.write(f"{x:.17g} {y:.17g}\n")
        for i, j, k in tri.triangles:
            fh.write(f"{i} {j} {k}\n")


def build_edge_table(tri: Triangulation) -> EdgeTable:
    t = tri.triangles
    pairs = np.concatenate([t[:, [1, 2]], t[:, [2, 0]], t[:, [0, 1]]])
    owner = np.tile(np.arange(len(t)), 3)
    pairs = np.sort(pairs, axis=1)
    edges, inverse, counts = np.unique(pairs, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.ravel()
    if np.any(counts > 2):
        raise MeshError("edge shared by more than two triangles")
    left = np.full(len(edges), -1, dtype=np.int64)
    right = np.full(len(edges), -1, dtype=np.int64)
    for e, tr in sorted(zip(inverse, owner), key=lambda p: (p[0], p[1])):
        if left[e] < 0:
            left[e] = tr
        else:
            right[e] = tr
    interior = right >= 0
    vertex_edges = [[] for _ in range(tri.n_vertices)]
    for e, (a, b) in enumerate(edges):
        vertex_edges[a].append(e)
        vertex_edges[b].append(e)
    on_boundary = np.zeros(tri.n_vertices, dtype=bool)
    on_boundary[edges[~interior].ravel()] = True
    used = np.zeros(tri.n_vertices, dtype=bool)
    used[t.ravel()] = True
    return EdgeTable(edges, left, right, interior, vertex_edges, used & ~on_boundary)


def _boundary_loops(tri, table):
    # boundary edges oriented as in their (CCW) triangle
    nxt = {}
    for e in np.flatnonzero(~table.interior):
        a, b = table.edges[e]
        tv = list(tri.triangles[table.left[e]])
        i = tv.index(a)
        if tv[(i + 1) % 3] != b:
            a, b = b, a
        nxt.setdefault(int(a), []).append(int(b))
    loops = []
    seen = set()
    for start in sorted(nxt):
        for first in nxt[start]:
            if (start, first) in seen:
                continue
            loop = [start]
            a, b = start, first
            while b is not None:
                seen.add((a, b))
                if b == start:
                    break
                loop.append(b)
                a, b = b, next((c for c in nxt.get(b, []) if (b, c) not in seen), None)
            loops.append(loop)
    if len(loops) > 1:
        def signed(loop):
            p = tri.vertices[loop]
            return 0.5 * np.sum(p[:, 0] * np.roll(p[:, 1], -1) - np.roll(p[:, 0], -1) * p[:, 1])

        loops.sort(key=lambda lp: -signed(lp))
    return loops


def _check_conforming(v, t, table):
    """Reject overlapping interiors and hanging vertices (brute force with bbox prefilter)."""
    p = v[t]
    lo = p.min(axis=1)
    hi = p.max(axis=1)
    scale = max(np.ptp(v[:, 0]), np.ptp(v[:, 1]))
    eps = 1e-12 * scale
    for i in range(len(t)):
        cand = np.flatnonzero(
            np.all(lo[i + 1 :] < hi[i] - eps, axis=1) & np.all(hi[i + 1 :] > lo[i] + eps, axis=1)
        ) + i + 1
        for j in cand:
            if _interiors_overlap(p[i], p[j], eps):
                raise MeshError(f"triangles {i} and {int(j)} overlap")
    # a vertex lying inside an edge it does not belong to is a hanging node
    for e, (a, b) in enumerate(table.edges):
        pa, pb = v[a], v[b]
        d = pb - pa
        L2 = d @ d
        box_lo = np.minimum(pa, pb) - eps
        box_hi = np.maximum(pa, pb) + eps
        near = np.flatnonzero(np.all((v >= box_lo) & (v <= box_hi), axis=1))
        for c in near:
            if c == a or c == b:
                continue
            w = v[c] - pa
            cross = d[0] * w[1] - d[1] * w[0]
            s = (w @ d) / L2
            if abs(cross) <= eps * np.sqrt(L2) and 0 < s < 1:
                raise MeshError(f"vertex {int(c)} lies on edge ({int(a)}, {int(b)})")


def _interiors_overlap(P, Q, eps):
    # separating axis test; touching along an edge or vertex is not an overlap
    for poly in (P, Q):
        for k in range(3):
            a, b = poly[k], poly[(k + 1) % 3]
            n = np.array([b[1] - a[1], a[0] - b[0]])
            n /= np.linalg.norm(n)
            sp = P @ n
            sq = Q @ n
            if sp.max() <= sq.min() + eps or sq.max() <= sp.min() + eps:
                return False
    return True


def barycentric_all(tri: Triangulation, points) -> np.ndarray:
    """Barycentric coordinates of every point w.r.t. every triangle, shape (N, T, 3)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    p = tri.vertices[tri.triangles]
    v0 = p[:, 0]
    e1 = p[:, 1] - v0
    e2 = p[:, 2] - v0
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    w = pts[:, None, :] - v0[None]
    b2 = (w[..., 0] * e2[:, 1] - w[..., 1] * e2[:, 0]) / det
    b3 = (e1[:, 0] * w[..., 1] - e1[:, 1] * w[..., 0]) / det
    return np.stack([1.0 - b2 - b3, b2, b3], axis=-1)


def locate_many(tri: Triangulation, points, tol: float = INSIDE_TOL):
    """Vectorized point location.

    Returns
    -------
    tri_index : ndarray of int (N,)
        Containing triangle, lowest index on ties, :data:`OUTSIDE` otherwise.
    bary : ndarray (N, 3)
        Barycentric coordinates in that triangle (NaN when outside).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = len(pts)
    idx = np.full(n, OUTSIDE, dtype=np.int64)
    bary = np.full((n, 3), np.nan)
    p = tri.vertices[tri.triangles]
    lo = p.min(axis=1) - 1e-9
    hi = p.max(axis=1) + 1e-9
    for t in range(tri.n_triangles):
        todo = np.flatnonzero(idx == OUTSIDE)
        if len(todo) == 0:
            break
        q = pts[todo]
        box = np.all((q >= lo[t]) & (q <= hi[t]), axis=1)
        if not box.any():
            continue
        todo = todo[box]
        b = _bary_single(p[t], pts[todo])
        inside = np.all(b >= -tol, axis=1)
        idx[todo[inside]] = t
        bary[todo[inside]] = b[inside]
    return idx, bary


def _bary_single(tv, pts):
    v0 = tv[0]
    e1 = tv[1] - v0
    e2 = tv[2] - v0
    det = e1[0] * e2[1] - e1[1] * e2[0]
    w = pts - v0
    b2 = (w[:, 0] * e2[1] - w[:, 1] * e2[0]) / det
    b3 = (e1[0] * w[:, 1] - e1[1] * w[:, 0]) / det
    return np.column_stack([1.0 - b2 - b3, b2, b3])


def locate(tri: Triangulation, p, tol: float = INSIDE_TOL):
    """Locate a single point.

    Returns ``(triangle, (b1, b2, b3))`` or :data:`OUTSIDE`.
    """
    idx, bary = locate_many(tri, np.asarray(p, dtype=float)[None, :], tol)
    if idx[0] == OUTSIDE:
        return OUTSIDE
    return int(idx[0]), tuple(float(b) for b in bary[0])


def refine_uniform(tri: Triangulation) -> Triangulation:
    """Split every triangle into four similar children through edge midpoints.

    New vertices are appended after the old ones in edge-table order.
    """
    table = tri.edge_table
    nv = tri.n_vertices
    mids = 0.5 * (tri.vertices[table.edges[:, 0]] + tri.vertices[table.edges[:, 1]])
    verts = np.vstack([tri.vertices, mids])
    lookup = {(int(a), int(b)): nv + e for e, (a, b) in enumerate(table.edges)}

    def mid(a, b):
        return lookup[(a, b) if a < b else (b, a)]

    new = []
    for a, b, c in tri.triangles.tolist():
        ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
        new += [(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)]
    return make_triangulation(verts, new, check_conformity=False)


def triangle_angles(tri: Triangulation) -> np.ndarray:
    """Interior angles, shape (T, 3); angle k sits at local vertex k."""
    p = tri.vertices[tri.triangles]
    out = np.empty((tri.n_triangles, 3))
    for k in range(3):
        u = p[:, (k + 1) % 3] - p[:, k]
        w = p[:, (k + 2) % 3] - p[:, k]
        cross = np.abs(u[:, 0] * w[:, 1] - u[:, 1] * w[:, 0])
        dot = np.sum(u * w, axis=1)
        out[:, k] = np.arctan2(cross, dot)
    return out


def min_angle(tri: Triangulation) -> float:
    return float(triangle_angles(tri).min())


# ---------------------------------------------------------------- generators

def square_grid(k: int, x0=0.0, y0=0.0, size=1.0) -> Triangulation:
    """``k`` x ``k`` squares, each cut by its lower-left to upper-right diagonal.

    ``square_grid(4)`` has 25 vertices and 32 triangles.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    s = np.linspace(0.0, 1.0, k + 1)
    X, Y = np.meshgrid(s, s)  # vertex (i, j) -> j*(k+1) + i
    verts = np.column_stack([x0 + size * X.ravel(), y0 + size * Y.ravel()])
    tris = []
    for j in range(k):
        for i in range(k):
            a = j * (k + 1) + i
            b, c, d = a + 1, a + k + 2, a + k + 1
            tris += [(a, b, c), (a, c, d)]
    return make_triangulation(verts, tris, check_conformity=False)


def single_triangle() -> Triangulation:
    return make_triangulation([(0, 0), (1, 0), (0, 1)], [(0, 1, 2)])


def two_triangle_square() -> Triangulation:
    return square_grid(1)


def center_fan() -> Triangulation:
    """Unit square split by both diagonals (one interior vertex, four triangles)."""
    verts = [(0, 0), (1, 0), (1, 1), (0, 1), (0.5, 0.5)]
    return make_triangulation(verts, [(0, 1, 4), (1, 2, 4), (2, 3, 4), (3, 0, 4)])


def l_shape(k: int = 2) -> Triangulation:
    """L-shaped domain [0,1]^2 minus [0.5,1]^2, from a 2k x 2k grid."""
    full = square_grid(2 * k)
    c = full.vertices[full.triangles].mean(axis=1)
    keep = ~((c[:, 0] > 0.5) & (c[:, 1] > 0.5))
    used = np.unique(full.triangles[keep])
    remap = -np.ones(full.n_vertices, dtype=np.int64)
    remap[used] = np.arange(len(used))
    return make_triangulation(full.vertices[used], remap[full.triangles[keep]], check_conformity=False)


def perturbed_delaunay(n_points: int, seed: int, jitter_corners: bool = False) -> Triangulation:
    """Delaunay mesh of the unit-square corners plus random interior points."""
    from scipy.spatial import Delaunay

    rng = np.random.default_rng(seed)
    corners = np.array([(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)])
    inner = 0.08 + 0.84 * rng.random((max(n_points - 4, 1), 2))
    pts = np.vstack([corners, inner])
    dt = Delaunay(pts)
    return make_triangulation(pts, dt.simplices)


def perturb_interior(tri: Triangulation, amount: float, seed: int) -> Triangulation:
    """Move interior vertices by a uniform random offset of at most ``amount``."""
    rng = np.random.default_rng(seed)
    v = tri.vertices.copy()
    inner = tri.edge_table.interior_vertices
    v[inner] += amount * (2 * rng.random((int(inner.sum()), 2)) - 1)
    return make_triangulation(v, tri.triangles)


BUILTIN_MESHES = {
    "single_triangle": lambda k=None: single_triangle(),
    "two_triangle_square": lambda k=None: two_triangle_square(),
    "square_grid": lambda k=4: square_grid(int(k)),
    "center_fan": lambda k=None: center_fan(),
    "l_shape": lambda k=2: l_shape(int(k)),
}


def builtin_mesh(name: str, param=None) -> Triangulation:
    """Deterministic named meshes; ``square_grid(4)`` is the 32-triangle square."""
    if name not in BUILTIN_MESHES:
        raise KeyError(f"unknown built-in mesh {name!r}; choose from {sorted(BUILTIN_MESHES)}")
    if param is None:
        return BUILTIN_MESHES[name]()
    return BUILTIN_MESHES[name](param)
