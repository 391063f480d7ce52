"""Engquist-Osher monotone scheme for the perturbed discounted equation.

The discrete residual at node ``i`` is

    f(x_i, lam u_i) + W(x_i) + 1/2 sum_k [max(D-_k u, 0)^2 + min(D+_k u, 0)^2]
        + lam V(x_i) - eta^2 Lap_h u - sum_k a_k D^2_k u - c_H

and its Jacobian is assembled exactly. Off-diagonal entries are nonpositive
and every row sums to ``lam * d_r f(x_i, lam u_i)``, so the Jacobian is a
strictly diagonally dominant M-matrix whenever ``lam > 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .grid import GridField, PeriodicGrid
from .models import (
    Diffusion,
    Discount,
    LinearDiscount,
    MechanicalHamiltonian,
    Potential,
    constant_potential,
)


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """Data of one instance of the perturbed discounted equation.

    ``lambda_max`` is the configured discount ceiling; solves above it are refused.
    """

    hamiltonian: MechanicalHamiltonian
    grid: PeriodicGrid
    diffusion: Diffusion | None = None
    discount: Discount = field(default_factory=LinearDiscount)
    potential: Potential | None = None
    c_H: float = 0.0
    lambda_max: float = 0.5

    def __post_init__(self):
        dim = self.grid.dim
        if self.diffusion is None:
            object.__setattr__(self, "diffusion", Diffusion.zero(dim))
        if self.potential is None:
            object.__setattr__(self, "potential", constant_potential(0.0, dim))
        if self.hamiltonian.dim != dim or self.diffusion.dim != dim:
            raise ValueError("hamiltonian, diffusion and grid dimensions differ")
        if not np.isfinite(self.c_H):
            raise ValueError("c_H must be finite")

    def replace(self, **changes) -> ProblemSpec:
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {
            "hamiltonian": self.hamiltonian.to_dict(),
            "diffusion": self.diffusion.to_dict(),
            "discount": self.discount.to_dict(),
            "potential": self.potential.to_dict(),
            "c_H": self.c_H,
            "grid": {"dim": self.grid.dim, "n": self.grid.n},
            "lambda_max": self.lambda_max,
        }


def numerical_hamiltonian(spec: MechanicalHamiltonian, x, p_minus, p_plus) -> np.ndarray:
    """Engquist-Osher flux ``W(x) + 1/2 sum_k [max(p-_k,0)^2 + min(p+_k,0)^2]``."""
    from .models import as_points

    pm = as_points(p_minus, spec.dim)
    pp = as_points(p_plus, spec.dim)
    kinetic = 0.5 * np.sum(np.maximum(pm, 0.0) ** 2 + np.minimum(pp, 0.0) ** 2, axis=-1)
    return spec.W(x) + kinetic


class Discretization:
    """Grid samples of all coefficients for one (problem, eta) pair."""

    def __init__(self, problem: ProblemSpec, eta: float = 0.0):
        if eta < 0:
            raise ValueError("eta must be nonnegative")
        grid = problem.grid
        pts = grid.points
        self.problem = problem
        self.grid = grid
        self.eta = float(eta)
        self.W = np.asarray(problem.hamiltonian.W(pts), dtype=float) * np.ones(grid.shape)
        self.V = np.asarray(problem.potential(pts), dtype=float) * np.ones(grid.shape)
        self.s = np.asarray(problem.discount.weight(pts), dtype=float) * np.ones(grid.shape)
        self.a = [np.asarray(c, dtype=float) for c in problem.diffusion.coefficients(pts)]
        self.c = float(problem.c_H)
        self._index = np.arange(grid.size).reshape(grid.shape)

    def _diffs(self, u: np.ndarray):
        h = self.grid.h
        out = []
        for axis in range(self.grid.dim):
            up = np.roll(u, -1, axis=axis)
            um = np.roll(u, 1, axis=axis)
            out.append(((u - um) / h, (up - u) / h, (up - 2.0 * u + um) / h**2))
        return out

    def residual(self, u: np.ndarray, lam: float) -> np.ndarray:
        disc = self.problem.discount
        eta2 = self.eta**2
        F = disc.f_of(self.s, lam * u) + self.W + lam * self.V - self.c
        for axis, (dm, dp, d2) in enumerate(self._diffs(u)):
            F = F + 0.5 * (np.maximum(dm, 0.0) ** 2 + np.minimum(dp, 0.0) ** 2)
            F = F - (eta2 + self.a[axis]) * d2
        return F

    def jacobian(self, u: np.ndarray, lam: float) -> sp.csr_matrix:
        h = self.grid.h
        eta2 = self.eta**2
        idx = self._index
        diag = lam * self.problem.discount.df_of(self.s, lam * u) * np.ones(self.grid.shape)
        rows, cols, vals = [], [], []
        for axis, (dm, dp, _) in enumerate(self._diffs(u)):
            qm = np.maximum(dm, 0.0)
            qp = np.minimum(dp, 0.0)
            nu = (eta2 + self.a[axis]) / h**2
            diag = diag + qm / h - qp / h + 2.0 * nu
            rows += [idx.ravel(), idx.ravel()]
            cols += [np.roll(idx, 1, axis=axis).ravel(), np.roll(idx, -1, axis=axis).ravel()]
            vals += [(-qm / h - nu).ravel(), (qp / h - nu).ravel()]
        rows.append(idx.ravel())
        cols.append(idx.ravel())
        vals.append(diag.ravel())
        n = self.grid.size
        J = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
        return J.tocsr()

    def marching_step_bound(self, u: np.ndarray, lam: float) -> float:
        """Largest explicit pseudo-time step keeping ``u - tau F(u)`` monotone."""
        h = self.grid.h
        diag = lam * self.problem.discount.df_of(self.s, lam * u) * np.ones(self.grid.shape)
        for axis, (dm, dp, _) in enumerate(self._diffs(u)):
            diag = diag + np.maximum(dm, 0.0) / h - np.minimum(dp, 0.0) / h
            diag = diag + 2.0 * (self.eta**2 + self.a[axis]) / h**2
        return 1.0 / float(np.max(diag))


def residual(problem: ProblemSpec, u: GridField, lam: float, eta: float = 0.0) -> GridField:
    """Discrete residual of the scheme; zero exactly at a discrete solution."""
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    return GridField(problem.grid, Discretization(problem, eta).residual(u.values, lam))
