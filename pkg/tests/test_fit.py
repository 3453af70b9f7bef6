import io

import numpy as np
import pytest

from splinekit import fit, lsq, mesh
from splinekit.constraints import SplineSpace, smoothness_matrix
from splinekit.functions import TARGETS

from conftest import poly_values, random_poly


@pytest.mark.parametrize("d,r", [(3, 1), (5, 1)])
def test_polynomial_reproduction(rng, grid32, d, r):
    space = SplineSpace(grid32, d, r)
    coef = random_poly(rng, d)
    P = rng.random((1500, 2))
    s = fit.fit_penalized(space, P, poly_values(coef, P[:, 0], P[:, 1]), lam=0.0)
    assert s.certified
    xs = np.linspace(0, 1, 200)
    X, Y = np.meshgrid(xs, xs)
    err = s(np.column_stack([X.ravel(), Y.ravel()])) - poly_values(coef, X.ravel(), Y.ravel())
    assert np.abs(err).max() < 1e-8


@pytest.mark.filterwarnings("ignore::splinekit.lsq.IllPosedWarning")
def test_energy_non_increasing_in_lambda(rng, s15):
    P = rng.random((60, 2))
    z = np.sin(5 * P[:, 0]) + P[:, 1] ** 2
    energies = [fit.fit_penalized(s15, P, z, lam).energy() for lam in (1e-4, 1e-2, 1.0, 1e2, 1e4, 1e8)]
    for a, b in zip(energies, energies[1:]):
        assert b <= a * (1 + 1e-8) + 1e-12
    # very large lambda approaches the minimal-energy (linear) least-squares fit
    assert energies[-1] < 1e-6


def test_constant_data(rng, s15):
    P = rng.random((40, 2))
    s = fit.fit_penalized(s15, P, np.full(40, 5.0))
    Q = rng.random((200, 2))
    np.testing.assert_allclose(s(Q), 5.0, atol=1e-9)
    assert s.energy() < 1e-12


def test_fitted_splines_are_smooth(rng, s15):
    P = rng.random((300, 2))
    s = fit.fit_penalized(s15, P, TARGETS["f6"](P[:, 0], P[:, 1]))
    assert s.smoothness_residual <= 1e-8
    assert s.max_jump() < 1e-8


def test_rmse_decreases_with_nested_samples(rng, s15):
    P = rng.random((8000, 2))
    f = TARGETS["f3"]
    Q = rng.random((4000, 2))
    errs = []
    for n in (500, 1000, 2000, 4000, 8000):
        s = fit.fit_penalized(s15, P[:n], f(P[:n, 0], P[:n, 1]), lam=1e-6)
        errs.append(np.sqrt(np.mean((s(Q) - f(Q[:, 0], Q[:, 1])) ** 2)))
    for a, b in zip(errs, errs[1:]):
        assert b <= a * 1.05


def test_min_energy_linear(rng, s15):
    P = rng.random((12, 2))
    s = fit.interpolate_min_energy(s15, P, 2 * P[:, 0] - P[:, 1] + 0.5)
    Q = rng.random((100, 2))
    np.testing.assert_allclose(s(Q), 2 * Q[:, 0] - Q[:, 1] + 0.5, atol=1e-8)
    assert s.energy() < 1e-10


def test_min_energy_corners_and_centre():
    space = SplineSpace(mesh.square_grid(2), 5, 1)
    P = np.array([[0, 0], [1, 0], [1, 1], [0, 1], [0.5, 0.5]], dtype=float)
    z = np.array([0, 0, 0, 0, 1.0])
    s = fit.interpolate_min_energy(space, P, z)
    assert s.energy() > 1e-3
    assert np.abs(s(P) - z).max() < 1e-9


def test_min_energy_single_point(s15):
    # the minimizer is not unique (any linear function through the point has zero energy)
    with pytest.warns(lsq.IllPosedWarning):
        s = fit.interpolate_min_energy(s15, [(0.3, 0.7)], [4.0])
    assert s.energy() < 1e-10
    assert abs(s([(0.3, 0.7)])[0] - 4.0) < 1e-9


def test_min_energy_inconsistent_raises(s15):
    with pytest.raises(lsq.InfeasibleError):
        fit.interpolate_min_energy(s15, [(0.3, 0.7), (0.3, 0.7)], [0.0, 1.0])


def test_levelset_circle():
    space = SplineSpace(mesh.square_grid(4), 5, 1)
    prob = fit.LevelSetProblem(fit.circle_points(100), fit.square_boundary_points(25))
    s = fit.solve_levelset(prob, space)
    curves = fit.extract_contour(s, 1.0, 256)
    assert len(curves) >= 1
    # reference: a dense sampling of the true circle
    assert fit.hausdorff(np.vstack(curves), fit.circle_points(4000)) < 0.02


def test_levelset_empty_holes_equals_two_set_fit():
    space = SplineSpace(mesh.square_grid(2), 4, 1)
    cloud, outer = fit.circle_points(40), fit.square_boundary_points(10)
    a = fit.solve_levelset(fit.LevelSetProblem(cloud, outer), space)
    pts = np.vstack([cloud, outer])
    b = fit.fit_penalized(space, pts, np.r_[np.ones(40), np.zeros(len(outer))], 1e-3)
    np.testing.assert_allclose(a.c, b.c, atol=1e-12)
    with pytest.raises(ValueError):
        fit.solve_levelset(fit.LevelSetProblem(np.zeros((0, 2)), outer), space)


def test_levelset_hole_sign_change():
    # a hole boundary (target 2) inside the cloud: the level-1 set must separate it from the outer boundary
    space = SplineSpace(mesh.square_grid(4), 5, 1)
    hole = fit.circle_points(40, radius=0.1)
    prob = fit.LevelSetProblem(fit.circle_points(100), fit.square_boundary_points(25), hole)
    s = fit.solve_levelset(prob, space)
    for th in np.linspace(0, 2 * np.pi, 16, endpoint=False):
        u = np.array([np.cos(th), np.sin(th)])
        inner = s([0.5 + 0.1 * u])[0] - 1.0
        outer = s([0.5 + 0.49 * u])[0] - 1.0
        assert inner > 0 > outer


def test_contour_quarter_circle():
    space = SplineSpace(mesh.square_grid(2), 2, 1)
    s = fit.Spline(space, space.interpolate(lambda x, y: x**2 + y**2))
    n = 128
    curves = fit.extract_contour(s, 0.25, n)
    assert len(curves) == 1
    r = np.linalg.norm(curves[0], axis=1)
    assert np.abs(r - 0.5).max() < 2 / n
    assert fit.extract_contour(s, 5.0, n) == []


def test_contour_of_linear_is_straight_line():
    space = SplineSpace(mesh.square_grid(2), 1, 0)
    s = fit.Spline(space, space.interpolate(lambda x, y: x + 2 * y))
    for level in (0.3, 1.1, 2.5):
        curves = fit.extract_contour(s, level, 64)
        assert len(curves) == 1
        p = curves[0]
        assert np.abs(p[:, 0] + 2 * p[:, 1] - level).max() < 1e-9


def test_contour_points_within_lipschitz_bound(rng, s15):
    P = rng.random((400, 2))
    s = fit.fit_penalized(s15, P, TARGETS["f1"](P[:, 0], P[:, 1]))
    n = 100
    curves = fit.extract_contour(s, 0.5, n)
    pts = np.vstack(curves)
    gx = np.abs(fit.sample_grid(s, 4 * n, (1, 0)))
    gy = np.abs(fit.sample_grid(s, 4 * n, (0, 1)))
    lip = np.nanmax(np.hypot(gx, gy))
    assert np.abs(s(pts) - 0.5).max() <= lip * np.sqrt(2) / (n - 1)


def test_contour_on_l_shape_has_no_phantoms():
    tri = mesh.l_shape(2)
    space = SplineSpace(tri, 1, 0)
    s = fit.Spline(space, space.interpolate(lambda x, y: x))
    # the upper-right quadrant is missing; x = 0.75 must not continue into it
    (cv,) = fit.extract_contour(s, 0.75, 64)
    assert np.abs(cv[:, 0] - 0.75).max() < 1e-9 and cv[:, 1].max() <= 0.5
    (cv,) = fit.extract_contour(s, 0.25, 64)
    assert cv[:, 1].min() == 0.0 and cv[:, 1].max() == 1.0
    with pytest.raises(ValueError):
        fit.extract_contour(s, 0.5, 8)


def test_sample_grid(rng, grid32):
    space = SplineSpace(grid32, 2, 1)
    const = fit.Spline(space, space.interpolate(lambda x, y: 3.0 + 0 * x))
    np.testing.assert_allclose(fit.sample_grid(const, 17), 3.0, atol=1e-14)
    Lsp = SplineSpace(mesh.l_shape(2), 2, 1)
    Z = fit.sample_grid(fit.Spline(Lsp, np.zeros(Lsp.n_coeffs)), 21)
    assert np.isnan(Z).any() and np.isfinite(Z).any()
    # the sampled RMSE is the same evaluator as direct evaluation
    P = rng.random((100, 2))
    s = fit.fit_penalized(space, P, np.cos(P[:, 0]))
    Zs = fit.sample_grid(s, 33)
    xs, ys = fit.grid_axes(space, 33)
    X, Y = np.meshgrid(xs, ys)
    direct = s(np.column_stack([X.ravel(), Y.ravel()])).reshape(33, 33)
    a = np.sqrt(np.mean((Zs - np.cos(X)) ** 2))
    b = np.sqrt(np.mean((direct - np.cos(X)) ** 2))
    assert abs(a - b) < 1e-14
    with pytest.raises(ValueError):
        fit.sample_grid(s, 1)


def test_denoising(rng, s15):
    f = TARGETS["f6"]
    reductions = []
    for trial in range(5):
        P = rng.random((1000, 2))
        clean = f(P[:, 0], P[:, 1])
        noisy = clean + rng.normal(0, 0.05, len(P))
        s = fit.fit_penalized(s15, P, noisy)
        before = np.sqrt(np.mean((noisy - clean) ** 2))
        after = np.sqrt(np.mean((s(P) - clean) ** 2))
        reductions.append(1 - after / before)
    assert np.mean(reductions) >= 0.30


def test_csv_round_trip(tmp_path, rng, s15):
    c = rng.normal(size=s15.n_coeffs)
    s = fit.Spline(s15, c)
    s.to_csv(tmp_path / "c.csv")
    np.testing.assert_array_equal(fit.read_coefficients(tmp_path / "c.csv", s15), c)
    buf = io.StringIO()
    s.to_csv(buf)
    assert buf.getvalue() == (tmp_path / "c.csv").read_text()
    buf = io.StringIO()
    fit.write_contours([np.array([[0.0, 1.0], [0.5, 0.25]])], buf)
    assert buf.getvalue().splitlines() == ["curve_id,x,y", "0,0,1", "0,0.5,0.25"]


def test_penalized_fitter_multi_rhs(rng, s15):
    P = rng.random((200, 2))
    Z = np.column_stack([np.sin(P[:, 0]), P[:, 1] ** 2])
    F = fit.PenalizedFitter(s15, P, 1.0)
    C = F.fit_coefficients(Z)
    for j in range(2):
        np.testing.assert_allclose(C[:, j], fit.fit_penalized(s15, P, Z[:, j]).c, atol=1e-12)
    assert np.abs(smoothness_matrix(s15).matrix @ C).max() < 1e-8
