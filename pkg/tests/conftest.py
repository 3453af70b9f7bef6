import numpy as np
import pytest

from splinekit import constraints, mesh


@pytest.fixture(scope="session")
def grid32():
    return mesh.square_grid(4)


@pytest.fixture(scope="session")
def s15(grid32):
    return constraints.SplineSpace(grid32, 5, 1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def poly_values(coef, x, y):
    """Evaluate sum coef[(i, j)] x^i y^j."""
    return sum(c * x**i * y**j for (i, j), c in coef.items())


def random_poly(rng, degree):
    return {(i, j): rng.normal() for i in range(degree + 1) for j in range(degree + 1 - i)}


def tri_area(v):
    v = np.asarray(v, dtype=float)
    return 0.5 * ((v[1, 0] - v[0, 0]) * (v[2, 1] - v[0, 1]) - (v[2, 0] - v[0, 0]) * (v[1, 1] - v[0, 1]))


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[k])
