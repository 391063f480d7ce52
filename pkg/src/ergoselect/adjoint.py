"""Discrete adjoint densities: transpose of the scheme Jacobian with a Dirac source.

Because the adjoint is the exact transpose of the linearized scheme, the weak
form ``h^d <sigma, J phi> = lam phi(x0)`` holds for every grid function to
linear-solver accuracy, and ``phi = 1`` gives the weighted mass identity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import MonotonicityViolation, NegativityViolation, SingularSystemError
from .grid import GridField, PeriodicGrid, fourier_test_functions
from .scheme import Discretization, ProblemSpec

NEGATIVITY_TOL = 1e-9
MONOTONE_TOL = 1e-13
DIRECT_LIMIT = 10**6


def assemble_jacobian(problem: ProblemSpec, u: GridField, lam: float, eta: float = 0.0) -> sp.csr_matrix:
    """Exact Jacobian of the residual at ``u``; checked to be an M-matrix pattern."""
    J = Discretization(problem, eta).jacobian(u.values, lam)
    off = J - sp.diags(J.diagonal())
    if off.nnz and off.max() > MONOTONE_TOL:
        raise MonotonicityViolation(f"positive off-diagonal entry {off.max():.3e}")
    if np.any(J.diagonal() <= 0):
        raise MonotonicityViolation("nonpositive diagonal entry")
    return J


@dataclass
class AdjointSolution:
    sigma: GridField
    x0_index: int
    lam: float
    eta: float
    mass: float
    weighted_mass: float
    linear_residual: float
    m0: float | None = None
    m1: float | None = None

    def mass_within_bounds(self, tol: float = 1e-9) -> bool:
        if self.m0 is None or self.m1 is None:
            return True
        return self.m0 - tol <= self.mass <= self.m1 + tol

    def to_dict(self) -> dict:
        return {
            "x0_index": self.x0_index,
            "lambda": self.lam,
            "eta": self.eta,
            "mass": self.mass,
            "weighted_mass": self.weighted_mass,
            "linear_residual": self.linear_residual,
            "min_sigma": self.sigma.min(),
            "m0": self.m0,
            "m1": self.m1,
        }


def mass_bounds(problem: ProblemSpec, R: float) -> tuple[float, float]:
    """``(1 / max d_r f, 1 / min d_r f)`` over the torus and ``|r| <= R``."""
    grid = problem.grid
    pts = grid.points.reshape(-1, grid.dim)
    s = np.asarray(problem.discount.weight(pts), dtype=float) * np.ones(len(pts))
    rs = np.linspace(-R, R, 41) if R > 0 else np.zeros(1)
    df = np.array([problem.discount.df_of(s, r) for r in rs])
    return 1.0 / float(df.max()), 1.0 / float(df.min())


class AdjointSolver:
    """Factor ``J^T`` once and back-solve for many Dirac sources.

    The factorization is read-only after construction, so one instance can
    serve concurrent back-solves.
    """

    def __init__(self, J: sp.spmatrix, lam: float, grid: PeriodicGrid, eta: float = 0.0,
                 bounds: tuple[float, float] | None = None):
        self.J = sp.csr_matrix(J)
        self.lam = float(lam)
        self.eta = float(eta)
        self.grid = grid
        self.bounds = bounds
        self._row_sums = np.asarray(self.J.sum(axis=1)).ravel()
        JT = self.J.T.tocsc()
        if grid.size <= DIRECT_LIMIT:
            try:
                self._lu = spla.splu(JT)
            except RuntimeError as exc:
                raise SingularSystemError(str(exc)) from exc
            self._solve = self._lu.solve
        else:
            self._JT = JT
            self._solve = self._iterative

    def _iterative(self, b):
        x, info = spla.bicgstab(self._JT, b, rtol=1e-12, maxiter=10 * self.grid.size)
        if info != 0:
            raise SingularSystemError(f"iterative adjoint solve failed (info={info})")
        return x

    def dirac(self, x0_index: int) -> np.ndarray:
        b = np.zeros(self.grid.size)
        b[x0_index] = self.lam / self.grid.cell_volume
        return b

    def solve_rhs(self, b: np.ndarray) -> np.ndarray:
        return self._solve(np.asarray(b, dtype=float))

    def solve(self, x0_index: int, check: bool = True) -> AdjointSolution:
        b = self.dirac(x0_index)
        sigma = self.solve_rhs(b)
        lin_res = float(np.max(np.abs(self.J.T @ sigma - b))) / max(float(np.max(np.abs(b))), 1.0)
        if check and sigma.min() < -NEGATIVITY_TOL:
            raise NegativityViolation(f"min sigma = {sigma.min():.3e}")
        vol = self.grid.cell_volume
        mass = vol * float(sigma.sum())
        weighted = vol * float(sigma @ self._row_sums) / self.lam
        m0, m1 = self.bounds if self.bounds is not None else (None, None)
        return AdjointSolution(GridField(self.grid, sigma), int(x0_index), self.lam, self.eta,
                               mass, weighted, lin_res, m0, m1)


def solve_adjoint(J, x0_index: int, lam: float, grid: PeriodicGrid, eta: float = 0.0,
                  bounds: tuple[float, float] | None = None) -> AdjointSolution:
    """Solve ``J^T sigma = lam / h^d e_{x0}``."""
    return AdjointSolver(J, lam, grid, eta, bounds).solve(x0_index)


def adjoint_for(problem: ProblemSpec, report, x0_index: int) -> tuple[AdjointSolution, sp.csr_matrix]:
    """Assemble at a converged solve and return the adjoint with mass bounds."""
    J = assemble_jacobian(problem, report.u, report.lam, report.eta)
    bounds = mass_bounds(problem, report.lambda_u_sup)
    return solve_adjoint(J, x0_index, report.lam, problem.grid, report.eta, bounds), J


# --------------------------------------------------------------------------
# duality certificate

def random_smooth_fields(grid: PeriodicGrid, count: int = 5, seed: int = 0, max_mode: int = 4) -> list[GridField]:
    """Seeded random trigonometric polynomials, normalized to sup-norm one on the grid."""
    rng = np.random.default_rng(seed)
    coords = grid.coords()
    out = []
    for _ in range(count):
        vals = np.zeros(grid.shape)
        for _ in range(6):
            k = rng.integers(0, max_mode + 1, size=grid.dim)
            phase = rng.uniform(0, 2 * np.pi)
            arg = 2 * np.pi * sum(ki * c for ki, c in zip(k, coords)) + phase
            vals += rng.normal() * np.cos(arg)
        vals /= np.max(np.abs(vals))
        out.append(grid.field(vals))
    return out


@dataclass
class DualityCertificate:
    max_defect: float
    tolerance: float
    n_trials: int
    defects: list[float] = field(repr=False, default_factory=list)

    @property
    def passed(self) -> bool:
        return self.max_defect <= self.tolerance

    def to_dict(self) -> dict:
        return {"max_defect": self.max_defect, "tolerance": self.tolerance,
                "n_trials": self.n_trials, "passed": self.passed}


def duality_certificate(adjoint: AdjointSolution, J, trial_fields=None, rel_tol: float = 1e-9,
                        max_mode: int = 3, seed: int = 0) -> DualityCertificate:
    """Largest ``|h^d <sigma, J phi> - lam phi(x0)|`` over the trial fields."""
    grid = adjoint.sigma.grid
    if trial_fields is None:
        trial_fields = [t.phi for t in fourier_test_functions(grid, max_mode)]
        trial_fields += random_smooth_fields(grid, 5, seed)
    sigma = adjoint.sigma.flat()
    defects, scale = [], 0.0
    for phi in trial_fields:
        vals = phi.flat() if isinstance(phi, GridField) else np.ravel(phi)
        lhs = grid.cell_volume * float(sigma @ (J @ vals))
        defects.append(abs(lhs - adjoint.lam * vals[adjoint.x0_index]))
        scale = max(scale, float(np.max(np.abs(vals))))
    max_def = max(defects) if defects else 0.0
    return DualityCertificate(max_def, rel_tol * scale, len(defects), defects)
