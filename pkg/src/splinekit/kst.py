"""Kolmogorov superposition pipeline in two variables.

Inner functions ``phi_q`` (q = 0..4) feed K-polynomials and KB splines

    KB_{n,i}(x, y) = sum_q B_{n,i}(lam_1 phi_q(x) + lam_2 phi_q(y)),

which are noisy; penalized least squares in S^2_8 over the 32-triangle square
turns them into smooth LKB splines, used as a basis for discrete least squares.
"""

from __future__ import annotations

import logging
import os
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.interpolate import BSpline

from . import functions, lsq
from .constraints import SplineSpace
from .fit import PenalizedFitter, Spline
from .mesh import square_grid

logger = logging.getLogger(__name__)

DIM = 2
N_TERMS = 2 * DIM + 1
GAMMA = 2 * DIM + 2
DEFAULT_RESOLUTION = 8
# digit weight ratio; any value below 1/GAMMA keeps the digit expansion strictly increasing
DEFAULT_RHO = 0.06
DEFAULT_LAMBDA = (0.55, 0.55 * (np.sqrt(2.0) - 1.0))
LKB_DEGREE = 8
LKB_SMOOTHNESS = 2
LKB_MESH = 4  # square_grid(4): 32 triangles, 25 vertices
TEST_GRID = 1001
_CHUNK = 100_000


class DomainError(ValueError):
    """Point outside the unit square."""


class RankWarning(RuntimeWarning):
    pass


def _check_unit_square(P):
    if np.any(P < 0.0) or np.any(P > 1.0) or not np.all(np.isfinite(P)):
        raise DomainError("points must lie in [0, 1]^2")


def _as_points(x) -> np.ndarray:
    return np.atleast_2d(np.asarray(x, dtype=float)).reshape(-1, 2)


def unit_grid(n: int) -> np.ndarray:
    """``n**2`` points of the uniform grid on [0,1]^2, x varying fastest."""
    g = np.linspace(0.0, 1.0, n)
    X, Y = np.meshgrid(g, g)
    return np.column_stack([X.ravel(), Y.ravel()])


# ------------------------------------------------------------- inner functions

def _digit_table(resolution: int, rho: float, q: int) -> np.ndarray:
    """``psi(j / 6^R + q / 5)`` for ``j = 0..6^R``, exact integer digit extraction.

    ``psi(u) = floor(u) + sum_{r<=R} digit_r(u) rho^r`` with base-6 digits of
    the fractional part; the shift ``q / 5`` has no finite base-6 expansion, so
    the shifted tables are genuinely different staircases.
    """
    M = GAMMA**resolution
    j = np.arange(M + 1, dtype=np.int64)
    N = N_TERMS * j + q * M  # u = N / (5 M)
    val = (N // (N_TERMS * M)).astype(float)
    for r in range(1, resolution + 1):
        val += ((N // (N_TERMS * GAMMA ** (resolution - r))) % GAMMA) * rho**r
    return val


@dataclass(frozen=True, eq=False)
class InnerFunctions:
    """Tabulated monotone ``phi_q`` on ``j / 6^R`` with linear interpolation."""

    lam: np.ndarray
    knots: np.ndarray
    phi: np.ndarray  # (5, 6^R + 1)
    resolution: int
    rho: float
    dim_d: int = DIM

    def __call__(self, q: int, t) -> np.ndarray:
        return np.interp(t, self.knots, self.phi[q])

    def arguments(self, points) -> np.ndarray:
        """Inner sums ``lam . phi_q(x)`` for every q: shape ``(5, N)``."""
        P = _as_points(points)
        out = np.empty((N_TERMS, len(P)))
        for q in range(N_TERMS):
            out[q] = self.lam[0] * self(q, P[:, 0]) + self.lam[1] * self(q, P[:, 1])
        return out


def build_inner_functions(
    resolution: int = DEFAULT_RESOLUTION, rho: float = DEFAULT_RHO, lam=DEFAULT_LAMBDA
) -> InnerFunctions:
    """Truncated base-6 digit construction of the five shifted inner functions."""
    if resolution < 3:
        raise ValueError("resolution must be >= 3")
    if not 0.0 < rho < 1.0 / GAMMA:
        raise ValueError(f"rho must lie in (0, 1/{GAMMA}) for strict monotonicity")
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (DIM,) or np.any(lam <= 0) or np.any(lam > 1) or lam.sum() > 1.0:
        raise ValueError("need 0 < lam_p <= 1 with sum(lam) <= 1")
    # sup of psi on [0, 2): normalizing by it keeps phi_q in [0, 1] for every resolution
    scale = 1.0 + (GAMMA - 1) * rho / (1.0 - rho)
    phi = np.array([_digit_table(resolution, rho, q) for q in range(N_TERMS)]) / scale
    knots = np.arange(GAMMA**resolution + 1) / GAMMA**resolution
    return InnerFunctions(lam=lam, knots=knots, phi=phi, resolution=int(resolution), rho=float(rho))


def k_polynomial(inner: InnerFunctions, n: int, x) -> np.ndarray | float:
    """``Kp_n(x) = sum_q (lam . phi_q(x))^n``."""
    if n < 0:
        raise ValueError("n must be >= 0")
    P = _as_points(x)
    _check_unit_square(P)
    vals = np.sum(inner.arguments(P) ** n, axis=0)
    return float(vals[0]) if np.ndim(x) == 1 else vals


# --------------------------------------------------------------- KB splines

@dataclass(frozen=True, eq=False)
class KBBasis:
    """``2n`` KB splines of degree ``k`` built on clamped uniform knots over [0, 2]."""

    inner: InnerFunctions
    n: int
    k: int = 3

    def __post_init__(self):
        if self.k < 0 or self.n < 1 or self.size < self.k + 1:
            raise ValueError(f"need 2n >= k + 1 basis functions (n={self.n}, k={self.k})")

    @property
    def size(self) -> int:
        return DIM * self.n

    @property
    def knots(self) -> np.ndarray:
        k = self.k
        inner = np.linspace(0.0, float(DIM), self.size - k + 1)
        return np.concatenate([np.zeros(k), inner, np.full(k, float(DIM))])

    def design(self, points) -> np.ndarray:
        """Dense ``(N, 2n)`` matrix of all KB splines at the points."""
        P = _as_points(points)
        _check_unit_square(P)
        args = self.inner.arguments(P)
        t = self.knots
        out = np.zeros((len(P), self.size))
        for q in range(N_TERMS):
            out += BSpline.design_matrix(args[q], t, self.k).toarray()
        return out


def kb_eval(basis: KBBasis, i: int, x) -> np.ndarray | float:
    if not 0 <= i < basis.size:
        raise IndexError(f"basis index {i} outside 0..{basis.size - 1}")
    vals = basis.design(x)[:, i]
    return float(vals[0]) if np.ndim(x) == 1 else vals


# -------------------------------------------------------------- LKB splines

def lkb_space() -> SplineSpace:
    return SplineSpace(square_grid(LKB_MESH), LKB_DEGREE, LKB_SMOOTHNESS)


@dataclass(eq=False)
class LKBBasis:
    """Smoothed KB splines; column ``i`` of ``coeffs`` is the B-form of LKB_i."""

    kb: KBBasis
    space: SplineSpace
    coeffs: np.ndarray
    lam: float = 1.0
    grid_n: int = 101

    @property
    def size(self) -> int:
        return self.coeffs.shape[1]

    @property
    def smoothed(self) -> list:
        return [Spline(self.space, self.coeffs[:, i]) for i in range(self.size)]

    def evaluate(self, points) -> np.ndarray:
        """``(N, 2n)`` values of every LKB spline."""
        return self.space.basis_matrix(_as_points(points)) @ self.coeffs

    def save(self, directory) -> None:
        """Write ``config.txt`` (key=value) and ``coefficients.csv``."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        inner = self.kb.inner
        cfg = {
            "n": self.kb.n,
            "k": self.kb.k,
            "resolution": inner.resolution,
            "rho": f"{inner.rho:.17g}",
            "lambda1": f"{inner.lam[0]:.17g}",
            "lambda2": f"{inner.lam[1]:.17g}",
            "penalty": f"{self.lam:.17g}",
            "grid_n": self.grid_n,
            "degree": self.space.d,
            "smoothness": self.space.r,
            "mesh": f"square_grid:{LKB_MESH}",
        }
        (d / "config.txt").write_text("".join(f"{k}={v}\n" for k, v in cfg.items()))
        np.savetxt(d / "coefficients.csv", self.coeffs, fmt="%.17g", delimiter=",")


def load_lkb(directory) -> LKBBasis:
    d = Path(directory)
    cfg = dict(line.split("=", 1) for line in (d / "config.txt").read_text().split())
    inner = build_inner_functions(
        int(cfg["resolution"]), float(cfg["rho"]), (float(cfg["lambda1"]), float(cfg["lambda2"]))
    )
    kb = KBBasis(inner, int(cfg["n"]), int(cfg["k"]))
    coeffs = np.loadtxt(d / "coefficients.csv", delimiter=",", ndmin=2)
    space = lkb_space()
    if coeffs.shape != (space.n_coeffs, kb.size):
        raise ValueError(f"coefficient table has shape {coeffs.shape}, expected {(space.n_coeffs, kb.size)}")
    return LKBBasis(kb, space, coeffs, float(cfg["penalty"]), int(cfg["grid_n"]))


def lkb_build(
    kb: KBBasis,
    grid_n: int = 101,
    lam: float = 1.0,
    config: lsq.SolverConfig | None = None,
    workers: int | None = None,
    chunk: int = 256,
) -> LKBBasis:
    """Penalized least-squares smoothing of every KB spline sampled on a ``grid_n^2`` grid.

    One factorization serves all basis functions; fixed column chunks are
    solved independently (optionally on ``workers`` threads), so the result
    does not depend on the schedule.
    """
    space = lkb_space()
    P = unit_grid(grid_n)
    fitter = PenalizedFitter(space, P, lam, config)
    design = kb.design(P)
    starts = list(range(0, kb.size, chunk))

    def work(s):
        return fitter.fit_coefficients(design[:, s : s + chunk])

    workers = workers or int(os.environ.get("SPLINEKIT_THREADS", "1"))
    if workers > 1 and len(starts) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(work, starts))
    else:
        parts = [work(s) for s in starts]
    return LKBBasis(kb, space, np.hstack(parts), float(lam), int(grid_n))


# ------------------------------------------------------------- DLS fitting

@dataclass
class DLSResult:
    coeffs: np.ndarray
    rmse_train: float
    rmse_test: float
    rank: int = 0


def _train_matrix(lkb: LKBBasis, grid_n: int):
    P = unit_grid(grid_n)
    return P, lkb.evaluate(P)


def grid_rmse(space: SplineSpace, C: np.ndarray, funcs: list, grid_n: int = TEST_GRID) -> np.ndarray:
    """RMSE of the splines with coefficient columns ``C`` against ``funcs`` on a ``grid_n^2`` grid."""
    C = np.atleast_2d(np.asarray(C).T).T
    P = unit_grid(grid_n)
    sq = np.zeros(C.shape[1])
    for s in range(0, len(P), _CHUNK):
        Q = P[s : s + _CHUNK]
        vals = space.basis_matrix(Q) @ C
        for j, f in enumerate(funcs):
            sq[j] += float(np.sum((vals[:, j] - f(Q[:, 0], Q[:, 1])) ** 2))
    return np.sqrt(sq / len(P))


def dls_fit_many(lkb: LKBBasis, targets: list, grid_n: int = 101, test_n: int = TEST_GRID) -> list:
    """Discrete least squares of several targets on one LKB basis.

    LKB splines that vanish on the training grid (their KB spline's support
    is never reached by the inner sums) are left out with coefficient 0.
    """
    P, L = _train_matrix(lkb, grid_n)
    active = np.flatnonzero(np.max(np.abs(L), axis=0) > 0)
    F = np.column_stack([np.asarray(f(P[:, 0], P[:, 1]), dtype=float) * np.ones(len(P)) for f in targets])
    sol, _, rank, _ = np.linalg.lstsq(L[:, active], F, rcond=None)
    if rank < len(active):
        warnings.warn(
            f"LKB basis is numerically dependent: rank {rank} of {len(active)} active functions",
            RankWarning,
            stacklevel=2,
        )
    A = np.zeros((lkb.size, len(targets)))
    A[active] = sol
    train = np.sqrt(np.mean((L @ A - F) ** 2, axis=0))
    test = grid_rmse(lkb.space, lkb.coeffs @ A, targets, test_n)
    return [DLSResult(A[:, j], float(train[j]), float(test[j]), int(rank)) for j in range(len(targets))]


def dls_fit(lkb: LKBBasis, f: Callable, grid_n: int = 101, test_n: int = TEST_GRID):
    """Returns ``(coefficients, rmse_train, rmse_test)``."""
    res = dls_fit_many(lkb, [f], grid_n, test_n)[0]
    return res.coeffs, res.rmse_train, res.rmse_test


# --------------------------------------------------------------- benchmark

@dataclass
class BenchmarkTable:
    sizes: list
    names: list
    test: dict = field(default_factory=dict)  # name -> list over sizes
    train: dict = field(default_factory=dict)

    def as_csv(self, which: str = "test") -> str:
        table = self.test if which == "test" else self.train
        lines = ["function," + ",".join(f"n={n}" for n in self.sizes)]
        lines += [name + "," + ",".join(f"{v:.17g}" for v in table[name]) for name in self.names]
        return "\n".join(lines) + "\n"


def benchmark_suite(
    sizes=(10, 100, 1000),
    names=None,
    inner: InnerFunctions | None = None,
    k: int = 3,
    grid_n: int = 101,
    test_n: int = TEST_GRID,
    lam: float = 1.0,
    workers: int | None = None,
) -> BenchmarkTable:
    """DLS RMSEs of the ten benchmark functions for each basis size ``2n``."""
    names = list(names or functions.BENCHMARK)
    inner = inner or build_inner_functions()
    funcs = [functions.target(nm) for nm in names]
    table = BenchmarkTable(list(sizes), names, {nm: [] for nm in names}, {nm: [] for nm in names})
    for n in sizes:
        lkb = lkb_build(KBBasis(inner, int(n), k), grid_n, lam, workers=workers)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RankWarning)
            results = dls_fit_many(lkb, funcs, grid_n, test_n)
        for nm, res in zip(names, results):
            table.test[nm].append(res.rmse_test)
            table.train[nm].append(res.rmse_train)
        logger.info("n=%d done", n)
    return table
