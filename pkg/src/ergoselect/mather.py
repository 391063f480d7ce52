"""Approximate generalized Mather measures built from (u, sigma) pairs."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .adjoint import AdjointSolver, assemble_jacobian, mass_bounds
from .errors import ErgoselectError, UnnormalizableError
from .grid import GridField, check_modes, forward_backward_differences, fourier_basis
from .models import MechanicalHamiltonian, Potential, as_points
from .scheme import ProblemSpec
from .solver import solve

logger = logging.getLogger(__name__)

FENCHEL_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Weighted atoms ``(x, p, v, w)`` carrying both Hamiltonian and Lagrangian
    coordinates; ``representation`` names the active one."""

    x: np.ndarray
    p: np.ndarray
    v: np.ndarray
    w: np.ndarray
    representation: str = "hamiltonian"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.representation not in ("hamiltonian", "lagrangian"):
            raise ValueError(f"unknown representation {self.representation!r}")
        if np.any(self.w < 0):
            raise ValueError("measure weights must be nonnegative")

    def __len__(self):
        return len(self.w)

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def integrate(self, psi: Callable) -> float:
        """``sum_i w_i psi(x_i, p_i, v_i)``."""
        return float(np.sum(self.w * psi(self.x, self.p, self.v)))

    def support(self, tol: float = 0.0) -> np.ndarray:
        return np.flatnonzero(self.w > tol)

    def mass_near(self, centers, radius: float) -> float:
        """Total weight within torus distance ``radius`` of any center."""
        centers = as_points(np.asarray(centers, dtype=float), self.dim).reshape(-1, self.dim)
        near = np.zeros(len(self.w), dtype=bool)
        for c in centers:
            d = np.abs(self.x - c)
            d = np.minimum(d, 1.0 - d)
            near |= np.sqrt(np.sum(d * d, axis=1)) <= radius + 1e-12
        return float(self.w[near].sum())

    def total_variation(self, other: DiscreteMeasure) -> float:
        if self.x.shape != other.x.shape or not np.array_equal(self.x, other.x):
            raise ValueError("total variation needs measures on the same atoms")
        return 0.5 * float(np.abs(self.w - other.w).sum())

    def to_rows(self) -> list[list[float]]:
        return [list(self.x[i]) + list(self.p[i]) + list(self.v[i]) + [self.w[i]] for i in range(len(self.w))]


def scheme_gradient(u: GridField) -> np.ndarray:
    """Per-axis gradient consistent with the upwind flux.

    The active branch is used when exactly one of ``max(D-u, 0)`` and
    ``min(D+u, 0)`` is nonzero; otherwise the centered average.
    """
    comps = []
    for axis in range(u.grid.dim):
        dm, dp = (f.values for f in forward_backward_differences(u, axis))
        qm = np.maximum(dm, 0.0)
        qp = np.minimum(dp, 0.0)
        avg = 0.5 * (dm + dp)
        only_m = (qm != 0) & (qp == 0)
        only_p = (qp != 0) & (qm == 0)
        comps.append(np.where(only_m, qm, np.where(only_p, qp, avg)))
    return np.stack(comps, axis=-1)


def build_measure(u: GridField, sigma: GridField, problem: ProblemSpec, meta: dict | None = None) -> DiscreteMeasure:
    """One atom per node with weight ``sigma_i / sum(sigma)`` at ``(x_i, Du_i)``."""
    if u.grid != sigma.grid:
        raise ValueError("u and sigma must share a grid")
    grid = u.grid
    s = sigma.flat()
    total = float(s.sum())
    if not total > 0:
        raise UnnormalizableError(f"sum of sigma is {total:.3e}")
    w = np.clip(s, 0.0, None) / total
    w = w / w.sum()
    x = grid.points.reshape(-1, grid.dim)
    p = scheme_gradient(u).reshape(-1, grid.dim)
    v = problem.hamiltonian.dp(x, p)
    return DiscreteMeasure(x, p, v, w, "hamiltonian", dict(meta or {}))


def pushforward(measure: DiscreteMeasure, direction: str, hamiltonian: MechanicalHamiltonian) -> DiscreteMeasure:
    """Switch between the Hamiltonian and Lagrangian pictures via the Legendre map."""
    if direction in ("to-lagrangian", "lagrangian"):
        v = hamiltonian.dp(measure.x, measure.p)
        return replace(measure, v=v, representation="lagrangian")
    if direction in ("to-hamiltonian", "hamiltonian"):
        p = hamiltonian.dv_lagrangian(measure.x, measure.v)
        return replace(measure, p=p, representation="hamiltonian")
    raise ValueError(f"unknown direction {direction!r}")


def action_defect(measure: DiscreteMeasure, problem: ProblemSpec, c_H: float | None = None) -> float:
    """``|int (D_pH . p - H) dnu + c_H|``, cross-checked against ``int L dmu``."""
    H = problem.hamiltonian
    c = problem.c_H if c_H is None else c_H
    x, p = measure.x, measure.p
    ham_form = np.sum(H.dp(x, p) * p, axis=1) - H(x, p)
    lag_form = H.lagrangian(x, H.dp(x, p))
    if np.max(np.abs(ham_form - lag_form)) > FENCHEL_TOL * max(1.0, float(np.max(np.abs(ham_form)))):
        raise ErgoselectError("Fenchel equality fails on an atom")
    return abs(float(measure.w @ ham_form) + c)


def holonomy_defect(measure: DiscreteMeasure, problem: ProblemSpec, max_mode: int = 2) -> float:
    """Largest ``|int D_pH . Dphi - tr(A D^2 phi) dnu|`` over trigonometric test functions."""
    check_modes(problem.grid.n, max_mode)
    x = measure.x
    v = problem.hamiltonian.dp(x, measure.p)
    a = problem.diffusion.coefficients(x)
    worst = 0.0
    for _, _, grad, hess in fourier_basis(x, measure.dim, max_mode):
        integrand = sum(v[:, k] * grad[k] - a[k] * hess[k] for k in range(measure.dim))
        worst = max(worst, abs(float(measure.w @ integrand)))
    return worst


def constraint_functional(measure: DiscreteMeasure, w: GridField, V: Potential, discount) -> float:
    """``sum_i w_i [d_r f(x_i, 0) w(x_i) + V(x_i)]``; nonpositive means satisfied."""
    x = measure.x
    wx = w.interpolate(x)
    s = discount.df_of(np.asarray(discount.weight(x), dtype=float), 0.0)
    return float(measure.w @ (s * wx + V(x)))


# --------------------------------------------------------------------------
# sampled family

def default_eta_rule(lam: float) -> float:
    return lam**2


@dataclass
class MeasureFamily:
    lambdas: list[float]
    etas: list[float]
    x0_list: list
    measures: list[DiscreteMeasure]
    history: dict = field(repr=False, default_factory=dict)
    tv_distances: dict = field(default_factory=dict)
    reports: list = field(repr=False, default_factory=list)
    failures: list = field(default_factory=list)

    def tv_decreasing_tail(self, key) -> bool:
        d = self.tv_distances.get(key, [])
        return len(d) < 2 or d[-1] <= d[-2]


def measure_family(
    problem: ProblemSpec,
    lam_seq,
    eta_rule: Callable[[float], float] = default_eta_rule,
    x0_list=(0.0,),
    tol: float = 1e-10,
    max_iter: int = 200,
    workers: int = 1,
) -> MeasureFamily:
    """Measures for each source point at the smallest discount, with the
    earlier discounts kept for total-variation Cauchy diagnostics."""
    lam_seq = [float(l) for l in lam_seq]
    if any(b >= a for a, b in zip(lam_seq, lam_seq[1:])):
        raise ValueError("lam_seq must be strictly decreasing")
    grid = problem.grid
    x0_index = [grid.nearest_index(np.atleast_1d(x0)) for x0 in x0_list]
    keys = [tuple(np.atleast_1d(np.asarray(x0, dtype=float)).tolist()) for x0 in x0_list]
    history = {k: [] for k in keys}
    reports, etas, failures = [], [], []
    u_prev = None
    for lam in lam_seq:
        eta = float(eta_rule(lam))
        etas.append(eta)
        try:
            rep = solve(problem, lam, eta, tol=tol, max_iter=max_iter, u0=u_prev)
        except ErgoselectError as exc:
            logger.warning("measure family: solve failed at lambda=%g: %s", lam, exc)
            failures.append((lam, str(exc)))
            continue
        u_prev = rep.u
        reports.append(rep)
        J = assemble_jacobian(problem, rep.u, lam, eta)
        solver = AdjointSolver(J, lam, grid, eta, mass_bounds(problem, rep.lambda_u_sup))

        def one(i):
            adj = solver.solve(x0_index[i])
            meta = {"lambda": lam, "eta": eta, "x0": list(keys[i]), "x0_index": x0_index[i],
                    "mass": adj.mass, "weighted_mass": adj.weighted_mass}
            return build_measure(rep.u, adj.sigma, problem, meta)

        if workers > 1:
            with ThreadPoolExecutor(workers) as pool:
                built = list(pool.map(one, range(len(keys))))
        else:
            built = [one(i) for i in range(len(keys))]
        for k, m in zip(keys, built):
            history[k].append(m)

    tv = {k: [a.total_variation(b) for a, b in zip(ms, ms[1:])] for k, ms in history.items()}
    final = [ms[-1] for ms in history.values() if ms]
    return MeasureFamily(lam_seq, etas, list(x0_list), final, history, tv, reports, failures)
