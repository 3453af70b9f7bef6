"""Equality-constrained, energy-penalized least squares over spline coefficients.

The problem

    min  sum_k w_k ||A_k c - f_k||^2 + lam * c^T E c   s.t.  C c = g

is solved by an augmented Lagrangian iteration: one sparse factorization of
``Q + mu C^T C`` (``Q`` the objective Hessian) followed by at most three
multiplier updates.  A dense KKT solve is available as a fallback for small
problems.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import bform
from .constraints import ConstraintBlock, SplineSpace, stack_blocks

logger = logging.getLogger(__name__)


class InfeasibleError(RuntimeError):
    """Equality constraints could not be met to the infeasibility tolerance."""


class IllPosedWarning(RuntimeWarning):
    pass


@dataclass
class SolverConfig:
    penalty: float = 1e6
    max_iter: int = 3
    rank_tol: float = 1e-9
    accept_tol: float = 1e-8
    infeasible_tol: float = 1e-4
    method: str = "auglag"  # or "kkt"


@dataclass
class ObjectiveTerm:
    A: sp.spmatrix
    f: np.ndarray
    weight: float = 1.0


@dataclass
class QuadraticProgram:
    n: int
    terms: list = field(default_factory=list)
    energy: sp.spmatrix | None = None
    lam: float = 0.0
    equalities: list = field(default_factory=list)

    def add_term(self, A, f, weight: float = 1.0) -> "QuadraticProgram":
        A = sp.csr_matrix(A)
        if A.shape[1] != self.n:
            raise ValueError(f"term has {A.shape[1]} columns, expected {self.n}")
        if weight < 0:
            raise ValueError("weights must be nonnegative")
        self.terms.append(ObjectiveTerm(A, np.asarray(f, dtype=float).ravel(), float(weight)))
        return self

    def add_equality(self, block: ConstraintBlock) -> "QuadraticProgram":
        if block.matrix.shape[1] != self.n:
            raise ValueError("constraint column count mismatch")
        self.equalities.append(block)
        return self

    def set_energy(self, E, lam: float) -> "QuadraticProgram":
        if lam < 0:
            raise ValueError("lambda must be nonnegative")
        self.energy = sp.csr_matrix(E)
        self.lam = float(lam)
        return self

    def objective(self, c) -> float:
        val = sum(t.weight * float(np.sum((t.A @ c - t.f) ** 2)) for t in self.terms)
        if self.energy is not None and self.lam > 0:
            val += self.lam * float(c @ (self.energy @ c))
        return val

    def hessian(self) -> sp.csr_matrix:
        Q = sp.csr_matrix((self.n, self.n))
        for t in self.terms:
            Q = Q + t.weight * (t.A.T @ t.A)
        if self.energy is not None and self.lam > 0:
            Q = Q + self.lam * self.energy
        return sp.csr_matrix(Q)

    def linear_part(self) -> np.ndarray:
        b = np.zeros(self.n)
        for t in self.terms:
            b += t.weight * (t.A.T @ t.f)
        return b


@dataclass
class SolveReport:
    c: np.ndarray
    residuals: list
    constraint_violation: float
    iterations: int
    method: str = "auglag"
    epsilon1: float | None = None
    objective: float = 0.0

    def as_text(self) -> str:
        lines = [
            f"method={self.method}",
            f"iterations={self.iterations}",
            f"objective={self.objective:.17g}",
            f"constraint_violation={self.constraint_violation:.17g}",
        ]
        lines += [f"residual_{k}={r:.17g}" for k, r in enumerate(self.residuals)]
        if self.epsilon1 is not None:
            lines.append(f"epsilon1={self.epsilon1:.17g}")
        return "\n".join(lines) + "\n"


class ConstrainedSolver:
    """Factorized solver for a fixed Hessian and constraint matrix.

    The right-hand sides (objective data and constraint values) may change
    between calls, which makes repeated fits with one design matrix cheap.
    """

    def __init__(self, Q, C, config: SolverConfig | None = None, y0=None):
        self.config = config or SolverConfig()
        self.Q = sp.csc_matrix(Q)
        self.C = sp.csr_matrix(C)
        n = self.Q.shape[0]
        qscale = sp.linalg.norm(self.Q) if self.Q.nnz else 1.0
        CtC = (self.C.T @ self.C).tocsc()
        cscale = sp.linalg.norm(CtC) if CtC.nnz else 1.0
        self.mu = self.config.penalty * max(qscale, 1e-300) / max(cscale, 1e-300)
        self.n = n
        self._y0 = y0
        self._lu = None
        self._dense = None
        M = (self.Q + self.mu * CtC).tocsc()
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("error", spla.MatrixRankWarning)
                self._lu = spla.splu(M, permc_spec="COLAMD")
            diag = np.abs(self._lu.U.diagonal())
            if diag.min() <= self.config.rank_tol * 1e-6 * diag.max():
                raise RuntimeError("near-singular pivot")
        except (RuntimeError, spla.MatrixRankWarning):
            warnings.warn(
                "inner system is rank deficient; using a minimum-norm dense solve",
                IllPosedWarning,
                stacklevel=3,
            )
            self._lu = None
            Md = M.toarray()
            self._dense = np.linalg.pinv(Md, rcond=self.config.rank_tol * 1e-3, hermitian=True)

    def _inner(self, rhs):
        if self._lu is not None:
            return self._lu.solve(rhs)
        return self._dense @ rhs

    def solve(self, b, g):
        """Minimize ``c^T Q c - 2 b^T c`` subject to ``C c = g``.

        Returns ``(c, iterations)``.
        """
        cfg = self.config
        b = np.asarray(b, dtype=float)
        g = np.asarray(g, dtype=float)
        m = self.C.shape[0]
        if b.ndim == 2 and g.ndim == 1:
            g = np.repeat(g[:, None], b.shape[1], axis=1)
        if m == 0:
            return self._inner(b), 1
        y = np.zeros((m,) + b.shape[1:]) if self._y0 is None else np.array(self._y0, dtype=float)
        Ct = self.C.T
        c = np.zeros(b.shape)
        it = 0
        # Multiplier iteration for  Q c + C^T y / 2 = b,  C c = g,  written as
        # residual corrections so that later sweeps also undo the rounding of
        # the ill-conditioned penalized solve.
        for it in range(1, cfg.max_iter + 1):
            r_stat = b - self.Q @ c - 0.5 * (Ct @ y)
            r_cons = g - self.C @ c
            delta = self._inner(r_stat + self.mu * (Ct @ r_cons))
            c = c + delta
            y = y + 2.0 * self.mu * (self.C @ c - g)
            if np.max(np.abs(delta)) <= 1e-15 * max(1.0, float(np.max(np.abs(c)))):
                break
        return c, it


def solve(qp: QuadraticProgram, config: SolverConfig | None = None, y0=None) -> SolveReport:
    """Minimize the quadratic program under its stacked equality constraints."""
    cfg = config or SolverConfig()
    cons = stack_blocks(qp.equalities, qp.n)
    Q = qp.hessian()
    b = qp.linear_part()
    if cfg.method == "kkt":
        c = kkt_solve(Q, b, cons.matrix, cons.rhs, cfg.rank_tol)
        iters = 1
    else:
        solver = ConstrainedSolver(Q, cons.matrix, cfg, y0=y0)
        c, iters = solver.solve(b, cons.rhs)
    return _report(qp, cons, c, iters, cfg)


def _report(qp, cons, c, iters, cfg):
    viol = cons.violation(c)
    residuals = [float(np.linalg.norm(t.A @ c - t.f)) for t in qp.terms]
    rep = SolveReport(
        c=c,
        residuals=residuals,
        constraint_violation=viol,
        iterations=iters,
        method=cfg.method,
        objective=qp.objective(c),
    )
    scale = max(1.0, float(np.max(np.abs(cons.rhs)))) if cons.n_rows else 1.0
    if viol > cfg.infeasible_tol * scale:
        raise InfeasibleError(f"constraint violation {viol:.3e} after {iters} iterations")
    if viol > cfg.accept_tol * scale:
        logger.warning("constraint violation %.3e above acceptance tolerance", viol)
    return rep


def kkt_solve(Q, b, C, g, rank_tol: float = 1e-9) -> np.ndarray:
    """Dense direct solve of the equality-constrained problem.

    Uses the null-space form of the KKT system: a particular solution of
    ``C c = g`` plus the minimizer over ``null(C)``.  This avoids the
    indefinite saddle-point matrix, whose conditioning is much worse.
    """
    Q = sp.csr_matrix(Q).toarray()
    b = np.asarray(b, dtype=float)
    if C is None or C.shape[0] == 0:
        sol, *_ = sla.lstsq(Q, b, cond=rank_tol * 1e-3, lapack_driver="gelsd")
        return sol
    C = sp.csr_matrix(C).toarray()
    cp, *_ = sla.lstsq(C, g, cond=rank_tol, lapack_driver="gelsd")
    N = sla.null_space(C, rcond=rank_tol)
    if N.shape[1] == 0:
        return cp
    R = N.T @ Q @ N
    x, *_ = sla.lstsq(R, N.T @ (b - Q @ cp), cond=rank_tol * 1e-3, lapack_driver="gelsd")
    return cp + N @ x


# ---------------------------------------------------------------- energy

def thin_plate_energy(space: SplineSpace, c) -> float:
    """``int s_xx^2 + 2 s_xy^2 + s_yy^2`` from the derivative coefficients.

    Equal to ``c @ energy_matrix(space) @ c`` in exact arithmetic, but the
    second-derivative B-coefficients are formed first, so a linear spline
    gives round-off squared rather than round-off.
    """
    d = space.d
    if d < 2:
        return 0.0
    c = np.asarray(c, dtype=float)
    m = space.local_dim
    total = 0.0
    for t in range(space.tri.n_triangles):
        tv = space.tri.triangle_vertices(t)
        G = bform.product_integral_matrix(d - 2, tv)
        ct = c[t * m : (t + 1) * m]
        for order, w in (((2, 0), 1.0), ((1, 1), 2.0), ((0, 2), 1.0)):
            g = bform.derivative_operator(d, tv, order) @ ct
            total += w * float(g @ G @ g)
    return total


def energy_matrix(space: SplineSpace) -> sp.csr_matrix:
    """Block-diagonal matrix of the thin-plate energy ``int s_xx^2 + 2 s_xy^2 + s_yy^2``."""
    d = space.d
    m = space.local_dim
    if d < 2:
        return sp.csr_matrix((space.n_coeffs, space.n_coeffs))
    blocks = []
    for t in range(space.tri.n_triangles):
        tv = space.tri.triangle_vertices(t)
        G = bform.product_integral_matrix(d - 2, tv)
        Lxx = bform.derivative_operator(d, tv, (2, 0))
        Lxy = bform.derivative_operator(d, tv, (1, 1))
        Lyy = bform.derivative_operator(d, tv, (0, 2))
        Et = Lxx.T @ G @ Lxx + 2.0 * Lxy.T @ G @ Lxy + Lyy.T @ G @ Lyy
        blocks.append(0.5 * (Et + Et.T))
    E = sp.block_diag(blocks, format="csr")
    assert E.shape == (space.n_coeffs, space.n_coeffs) and m > 0
    return E
