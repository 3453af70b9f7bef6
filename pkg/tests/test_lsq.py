import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse as sp

from splinekit import lsq, mesh
from splinekit.constraints import ConstraintBlock, SplineSpace, interpolation_matrix, smoothness_matrix


def eq(M, g):
    return ConstraintBlock(sp.csr_matrix(np.atleast_2d(M)), np.atleast_1d(np.asarray(g, dtype=float)))


def test_square_system(rng):
    A = rng.normal(size=(6, 6)) + 6 * np.eye(6)
    f = rng.normal(size=6)
    rep = lsq.solve(lsq.QuadraticProgram(6).add_term(A, f))
    np.testing.assert_allclose(rep.c, np.linalg.solve(A, f), atol=1e-12)


def test_lagrange_closed_form():
    qp = lsq.QuadraticProgram(2).add_term(np.eye(2), np.zeros(2)).add_equality(eq([[1.0, 1.0]], [2.0]))
    for method in ("auglag", "kkt"):
        rep = lsq.solve(qp, lsq.SolverConfig(method=method))
        np.testing.assert_allclose(rep.c, [1.0, 1.0], atol=1e-10)
        assert rep.constraint_violation < 1e-10


def test_unconstrained_matches_dense_lstsq(rng):
    for n in (5, 50, 200):
        A = rng.normal(size=(2 * n, n))
        f = rng.normal(size=2 * n)
        rep = lsq.solve(lsq.QuadraticProgram(n).add_term(A, f))
        ref, *_ = np.linalg.lstsq(A, f, rcond=None)
        np.testing.assert_allclose(rep.c, ref, atol=1e-9)


def test_weights_and_energy(rng):
    n = 8
    A1, A2 = rng.normal(size=(10, n)), rng.normal(size=(4, n))
    f1, f2 = rng.normal(size=10), rng.normal(size=4)
    E = np.diag(np.arange(1.0, n + 1))
    qp = lsq.QuadraticProgram(n).add_term(A1, f1, 2.0).add_term(A2, f2, 0.5).set_energy(E, 0.3)
    c = lsq.solve(qp).c
    Q = 2.0 * A1.T @ A1 + 0.5 * A2.T @ A2 + 0.3 * E
    np.testing.assert_allclose(c, np.linalg.solve(Q, 2.0 * A1.T @ f1 + 0.5 * A2.T @ f2), atol=1e-10)
    with pytest.raises(ValueError):
        qp.set_energy(E, -1.0)
    with pytest.raises(ValueError):
        qp.add_term(A1, f1, -1.0)


def _feasible_directions(C, k, rng):
    N = sla.null_space(C.toarray() if sp.issparse(C) else C)
    return N @ rng.normal(size=(N.shape[1], k))


def test_optimality_under_feasible_perturbation(rng, grid32):
    space = SplineSpace(grid32, 3, 1)
    P = rng.random((200, 2))
    z = np.sin(3 * P[:, 0]) * P[:, 1]
    qp = lsq.QuadraticProgram(space.n_coeffs).add_term(space.basis_matrix(P), z)
    qp.set_energy(lsq.energy_matrix(space), 1e-2)
    qp.add_equality(smoothness_matrix(space))
    rep = lsq.solve(qp)
    base = qp.objective(rep.c)
    dirs = _feasible_directions(smoothness_matrix(space).matrix, 50, rng)
    dirs /= np.linalg.norm(dirs, axis=0)
    for k in range(50):
        assert qp.objective(rep.c + 1e-3 * dirs[:, k]) >= base - 1e-10


def test_unique_from_other_multipliers(rng, grid32):
    space = SplineSpace(grid32, 5, 1)
    P = rng.random((400, 2))
    qp = lsq.QuadraticProgram(space.n_coeffs).add_term(space.basis_matrix(P), np.exp(P[:, 0] - P[:, 1]))
    H = smoothness_matrix(space)
    qp.add_equality(H)
    a = lsq.solve(qp).c
    b = lsq.solve(qp, y0=rng.normal(size=H.n_rows)).c
    np.testing.assert_allclose(a, b, atol=1e-8)


def test_min_energy_interpolation_of_linear(rng, grid32):
    space = SplineSpace(grid32, 5, 1)
    P = rng.random((10, 2))
    g = lambda x, y: 1.0 + 2.0 * x - 0.5 * y
    qp = lsq.QuadraticProgram(space.n_coeffs).set_energy(lsq.energy_matrix(space), 1.0)
    qp.add_equality(interpolation_matrix(space, P, g(P[:, 0], P[:, 1])))
    qp.add_equality(smoothness_matrix(space))
    c = lsq.solve(qp).c
    Q = rng.random((100, 2))
    np.testing.assert_allclose(space.evaluate(c, Q), g(Q[:, 0], Q[:, 1]), atol=1e-8)


def test_kkt_and_auglag_match_null_space_oracle(rng, grid32):
    # oracle: least squares directly on A N, N spanning null(H); no normal equations involved
    space = SplineSpace(grid32, 4, 1)
    P = rng.random((300, 2))
    A = space.basis_matrix(P)
    z = np.cos(4 * P[:, 0]) + P[:, 1] ** 3
    H = smoothness_matrix(space)
    qp = lsq.QuadraticProgram(space.n_coeffs).add_term(A, z).add_equality(H)
    N = sla.null_space(H.matrix.toarray(), rcond=1e-10)
    x, *_ = np.linalg.lstsq(A @ N, z, rcond=None)
    ref = N @ x
    for method in ("auglag", "kkt"):
        rep = lsq.solve(qp, lsq.SolverConfig(method=method))
        assert abs(qp.objective(rep.c) - qp.objective(ref)) <= 1e-9 * qp.objective(ref)
        # coefficient accuracy is limited by cond(A N)^2 * eps ~ 1e-7 for normal-equation solvers
        np.testing.assert_allclose(rep.c, ref, atol=1e-6)
        assert rep.constraint_violation < 1e-8


def test_infeasible_constraints_raise():
    qp = lsq.QuadraticProgram(2).add_term(np.eye(2), np.zeros(2))
    qp.add_equality(eq([[1.0, 0.0], [1.0, 0.0]], [0.0, 1.0]))
    with pytest.raises(lsq.InfeasibleError):
        lsq.solve(qp)


def test_rank_deficient_inner_system_warns():
    # energy alone is singular on linear functions; one interpolation point leaves a 2-dim family
    space = SplineSpace(mesh.two_triangle_square(), 2, 1)
    qp = lsq.QuadraticProgram(space.n_coeffs).set_energy(lsq.energy_matrix(space), 1.0)
    qp.add_equality(interpolation_matrix(space, [(0.3, 0.3)], [2.0]))
    qp.add_equality(smoothness_matrix(space))
    with pytest.warns(lsq.IllPosedWarning):
        rep = lsq.solve(qp)
    assert rep.constraint_violation < 1e-8
    assert rep.c @ (lsq.energy_matrix(space) @ rep.c) < 1e-10


def test_multiple_right_hand_sides(rng, grid32):
    space = SplineSpace(grid32, 3, 1)
    P = rng.random((150, 2))
    A = space.basis_matrix(P)
    H = smoothness_matrix(space)
    solver = lsq.ConstrainedSolver(A.T @ A, H.matrix)
    Z = rng.normal(size=(150, 3))
    C, _ = solver.solve(A.T @ Z, np.zeros(H.n_rows))
    for j in range(3):
        cj, _ = solver.solve(A.T @ Z[:, j], np.zeros(H.n_rows))
        np.testing.assert_allclose(C[:, j], cj, atol=1e-12)


def test_energy_examples():
    for tri in (mesh.two_triangle_square(), mesh.square_grid(4)):
        space = SplineSpace(tri, 5, 1)
        E = lsq.energy_matrix(space)
        assert abs(E - E.T).max() < 1e-12
        lin = space.interpolate(lambda x, y: 3 * x - y + 1)
        assert abs(lsq.thin_plate_energy(space, lin)) < 1e-12
        # the assembled matrix loses the cancellation, so only round-off level there
        assert abs(lin @ E @ lin) < 1e-9
        sq = space.interpolate(lambda x, y: x**2)
        assert abs(lsq.thin_plate_energy(space, sq) - 4.0) < 1e-10
        xy = space.interpolate(lambda x, y: x * y)
        assert abs(lsq.thin_plate_energy(space, xy) - 2.0) < 1e-10


def test_energy_forms_agree(rng):
    space = SplineSpace(mesh.perturbed_delaunay(12, 5), 6, 1)
    E = lsq.energy_matrix(space)
    for _ in range(3):
        c = rng.normal(size=space.n_coeffs)
        assert abs(lsq.thin_plate_energy(space, c) - c @ E @ c) < 1e-12 * (c @ E @ c)
    assert lsq.thin_plate_energy(SplineSpace(mesh.square_grid(2), 1, 0), np.ones(24)) == 0.0


def test_energy_matches_quadrature(rng):
    # independent oracle: integrate the squared second partials by Gauss quadrature
    from splinekit import bform

    tri = mesh.perturbed_delaunay(8, 2)
    space = SplineSpace(tri, 4, 0)
    c = rng.normal(size=space.n_coeffs)
    nodes, w = bform.triangle_quadrature(8)
    total = 0.0
    for t in range(tri.n_triangles):
        vals = {o: space.evaluate_on_triangle(c, t, nodes, o) for o in ((2, 0), (1, 1), (0, 2))}
        total += tri.areas()[t] * w @ (vals[(2, 0)] ** 2 + 2 * vals[(1, 1)] ** 2 + vals[(0, 2)] ** 2)
    assert abs(c @ lsq.energy_matrix(space) @ c - total) < 1e-9 * total


def test_report_text():
    rep = lsq.solve(lsq.QuadraticProgram(1).add_term(np.eye(1), [1.0]))
    text = rep.as_text()
    assert "method=auglag" in text and "constraint_violation=0\n" in text
