from math import comb

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from splinekit import mesh
from splinekit.constraints import SplineSpace
from splinekit.dimension import dim_via_rank, dimension_report, schumaker_bounds, slope_counts


@pytest.mark.parametrize("d,r", [(1, 0), (3, 1), (5, 2), (4, -1)])
def test_single_triangle(d, r):
    space = SplineSpace(mesh.single_triangle(), d, r)
    if r >= 0:
        rep = schumaker_bounds(space)
        assert rep.lower == rep.upper == comb(d + 2, 2)
    assert dim_via_rank(space) == comb(d + 2, 2)


def test_two_triangle_linear():
    space = SplineSpace(mesh.two_triangle_square(), 1, 1)
    rep = dimension_report(space)
    # hand evaluation: 3 + C(1,2)*1 - (3 - 3)*0
    assert rep.D == 3 and rep.lower == rep.upper == 3 == rep.rank_dim
    text = rep.as_text()
    assert "L=3\n" in text and "U=3\n" in text


def test_center_fan_sigma():
    tri = mesh.center_fan()
    space = SplineSpace(tri, 2, 1)
    _, m, mt = slope_counts(space)
    assert m == [2]
    rep = dimension_report(space)
    assert rep.sigma == [1]
    # hand evaluation: 6 + C(2,2) E_I - (6 - 3) V_I + sigma
    assert rep.lower == 6 + 1 * 4 - 3 * 1 + 1 == rep.rank_dim


def test_linear_c0_counts_vertices():
    for tri in (mesh.square_grid(3), mesh.l_shape(2), mesh.center_fan(), mesh.perturbed_delaunay(12, 1), mesh.perturbed_delaunay(20, 7)):
        assert dim_via_rank(SplineSpace(tri, 1, 0)) == tri.n_vertices


def test_discontinuous_space():
    tri = mesh.square_grid(2)
    assert dim_via_rank(SplineSpace(tri, 3, -1)) == tri.n_triangles * 10


def test_rank_guard():
    big = SplineSpace(mesh.square_grid(16), 8, 1)
    with pytest.raises(ValueError):
        dim_via_rank(big)


def test_bad_r():
    with pytest.raises(ValueError):
        schumaker_bounds(SplineSpace(mesh.single_triangle(), 2, -1))


@settings(max_examples=12, deadline=None)
@given(st.integers(6, 18), st.integers(0, 10_000), st.sampled_from([(1, 0), (2, 1), (3, 1), (4, 1), (5, 1), (5, 2)]))
def test_bounds_bracket_rank(n, seed, dr):
    d, r = dr
    space = SplineSpace(mesh.perturbed_delaunay(n, seed), d, r)
    rep = dimension_report(space)
    assert rep.lower <= rep.rank_dim <= rep.upper
    if d >= 3 * r + 2:
        assert rep.rank_dim == rep.lower


def test_grid_bounds_bracket_rank():
    for k in (2, 3, 4):
        for d, r in ((3, 1), (4, 2), (5, 1)):
            rep = dimension_report(SplineSpace(mesh.square_grid(k), d, r))
            assert rep.lower <= rep.rank_dim <= rep.upper


def test_bounds_invariant_under_rigid_motion(rng):
    tri = mesh.perturbed_delaunay(15, 4)
    th = 0.7
    R = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
    moved = mesh.make_triangulation(tri.vertices @ R.T + [3.0, -2.0], tri.triangles)
    for d, r in ((3, 1), (5, 2)):
        a = schumaker_bounds(SplineSpace(tri, d, r))
        b = schumaker_bounds(SplineSpace(moved, d, r))
        assert (a.lower, a.upper) == (b.lower, b.upper)
    # grid edges sit exactly at slope 0/pi boundaries; a rotation must not change slope counts
    g = mesh.square_grid(3)
    rot = mesh.make_triangulation(g.vertices @ R.T, g.triangles)
    assert slope_counts(SplineSpace(g, 2, 1))[1:] == slope_counts(SplineSpace(rot, 2, 1))[1:]
