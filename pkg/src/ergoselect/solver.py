"""Nonlinear solves of the discrete discounted equation and related sweeps."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .errors import AssumptionViolation, NonConvergenceError
from .grid import GridField, PeriodicGrid, discrete_lipschitz
from .models import LinearDiscount, constant_potential, validate_assumptions
from .scheme import Discretization, ProblemSpec

logger = logging.getLogger(__name__)

MAX_HALVINGS = 30
MARCHING_STEPS = 200
COARSEST = 64
COARSE_TOL = 1e-6
# Residuals below this multiple of eps * max|J_ii| * max|u| are round-off.
ROUNDOFF = 16 * np.finfo(float).eps
# For a discount curved in r, a supersolution step may raise lambda*u by at most
# this much; from an overshoot an exponential discount descends only about one
# unit of lambda*u per Newton step.
SUPER_R_STEP = 2.0


@dataclass
class SolveReport:
    u: GridField
    residual_sup: float
    iterations: int
    lam: float
    eta: float
    lipschitz: float
    lambda_u_sup: float
    wall_time: float
    converged: bool = True
    marching_steps: int = 0
    roundoff_limited: bool = False

    def to_dict(self) -> dict:
        return {
            "residual_sup": self.residual_sup,
            "iterations": self.iterations,
            "lambda": self.lam,
            "eta": self.eta,
            "lipschitz": self.lipschitz,
            "lambda_u_sup": self.lambda_u_sup,
            "wall_time": self.wall_time,
            "converged": self.converged,
            "marching_steps": self.marching_steps,
            "roundoff_limited": self.roundoff_limited,
        }


def _sup(F: np.ndarray) -> float:
    return float(np.max(np.abs(F))) if np.all(np.isfinite(F)) else np.inf


def _report(grid, u, F, it, lam, eta, t0, converged, marching):
    field_u = GridField(grid, u)
    return SolveReport(
        u=field_u,
        residual_sup=_sup(F),
        iterations=it,
        lam=lam,
        eta=eta,
        lipschitz=discrete_lipschitz(field_u),
        lambda_u_sup=lam * field_u.sup_norm(),
        wall_time=time.perf_counter() - t0,
        converged=converged,
        marching_steps=marching,
    )


def _coarse_start(problem: ProblemSpec, lam: float, eta: float, max_iter: int) -> np.ndarray:
    """Initial iterate interpolated from the same problem on a grid half as fine.

    From ``u = 0`` the Jacobian is ``lam I`` and the first Newton step is of
    size ``1/lam``; the monotone phase that follows moves each kink by about
    one node per iteration. Nested grids avoid both.
    """
    grid = problem.grid
    if grid.n < 2 * COARSEST:
        return np.zeros(grid.shape)
    coarse = problem.replace(grid=PeriodicGrid(grid.dim, grid.n // 2))
    try:
        rep = solve(coarse, lam, eta, tol=COARSE_TOL, max_iter=max_iter)
    except NonConvergenceError:
        return np.zeros(grid.shape)
    return rep.u.interpolate(grid.points.reshape(-1, grid.dim)).reshape(grid.shape)


def solve(
    problem: ProblemSpec,
    lam: float,
    eta: float = 0.0,
    tol: float = 1e-8,
    max_iter: int = 200,
    u0: GridField | np.ndarray | None = None,
) -> SolveReport:
    """Solve the discrete discounted equation to ``sup|F(u)| <= tol``.

    Without ``u0`` the iteration starts from the solution on a coarser grid.
    Damped Newton with the exact Jacobian; the step is halved until the
    sup-norm residual decreases. A full step is also accepted when the
    discount is convex in ``r`` and the trial point is a supersolution. When
    no halving helps, a burst of explicit monotone pseudo-time steps is taken
    before Newton resumes. If Newton stalls with the residual already below
    the round-off floor of the assembled operator, the iterate is returned
    with ``roundoff_limited`` set.
    """
    if not 0 < lam <= problem.lambda_max:
        raise AssumptionViolation("lambda-ceiling", f"lambda={lam} outside (0, {problem.lambda_max}]")
    if tol <= 0:
        raise ValueError("tol must be positive")
    validate_assumptions(problem, 0.0, audit_n=max(problem.grid.n, 64))

    t0 = time.perf_counter()
    disc = Discretization(problem, eta)
    convex = bool(getattr(problem.discount, "convex_in_r", False))
    r_step = np.inf if getattr(problem.discount, "linear_in_r", False) else SUPER_R_STEP
    grid = problem.grid
    if u0 is None:
        u = _coarse_start(problem, lam, eta, max_iter)
    else:
        u = np.array(u0.values if isinstance(u0, GridField) else u0, dtype=float).reshape(grid.shape)

    with np.errstate(over="ignore", invalid="ignore"):
        F = disc.residual(u, lam)
        norm = _sup(F)
        it = 0
        marching = 0
        roundoff = False
        while norm > tol:
            if it >= max_iter:
                report = _report(grid, u, F, it, lam, eta, t0, False, marching)
                raise NonConvergenceError(
                    f"no convergence after {it} Newton iterations (residual {norm:.3e})", report
                )
            it += 1
            J = disc.jacobian(u, lam)
            du = spla.spsolve(J.tocsc(), -F.ravel()).reshape(grid.shape)
            floor = ROUNDOFF * float(np.max(np.abs(J.diagonal()))) * max(float(np.max(np.abs(u))), 1.0)
            step = 1.0
            for k in range(MAX_HALVINGS + 1):
                trial = u + step * du
                F_trial = disc.residual(trial, lam)
                n_trial = _sup(F_trial)
                # With F convex in u a full step lands on a supersolution, from
                # which undamped Newton decreases monotonically to the root.
                # The sign test allows for round-off relative to the residual size.
                super_tol = max(tol, ROUNDOFF * (n_trial + floor))
                super_ok = (convex and k == 0 and np.isfinite(n_trial)
                            and lam * float(np.max(du)) <= r_step and F_trial.min() >= -super_tol)
                if n_trial < norm or (super_ok and n_trial > floor):
                    u, F, norm = trial, F_trial, n_trial
                    break
                step *= 0.5
            else:
                if norm <= floor:
                    logger.debug("residual %.3e at round-off floor %.3e", norm, floor)
                    roundoff = True
                    break
                logger.debug("Newton stalled at residual %.3e; pseudo-time marching", norm)
                for _ in range(MARCHING_STEPS):
                    tau = disc.marching_step_bound(u, lam)
                    u = u - tau * F
                    F = disc.residual(u, lam)
                marching += MARCHING_STEPS
                norm = _sup(F)

    report = _report(grid, u, F, it, lam, eta, t0, True, marching)
    report.roundoff_limited = roundoff
    validate_assumptions(problem, report.lambda_u_sup, audit_n=max(problem.grid.n, 64))
    return report


# --------------------------------------------------------------------------
# ergodic constant

@dataclass
class ErgodicReport:
    lambdas: list[float]
    values: list[float]
    c_H: float
    reports: list[SolveReport] = field(repr=False, default_factory=list)

    def table(self) -> list[tuple[float, float]]:
        return list(zip(self.lambdas, self.values))


def plain_discounted(problem: ProblemSpec) -> ProblemSpec:
    """Same H and A, Linear discount, zero potential and zero c_H."""
    return problem.replace(discount=LinearDiscount(), potential=constant_potential(0.0, problem.grid.dim), c_H=0.0)


def estimate_ergodic_constant(
    problem: ProblemSpec,
    eta: float = 0.0,
    lam_seq=(1e-2, 5e-3, 2.5e-3),
    tol: float = 1e-10,
    max_iter: int = 200,
) -> tuple[float, ErgodicReport]:
    """Estimate c_H from ``-lam * mean(w_lam)`` of the plain discounted problem.

    The values at the last two discounts are extrapolated linearly to zero.
    Each solve is carried out for ``w + c/lam`` (a constant shift, which for
    the linear discount acts as a constant potential) so that the unknown
    stays O(1) and the residual tolerance is not swamped by round-off.
    """
    lam_seq = [float(l) for l in lam_seq]
    if len(lam_seq) < 2:
        raise ValueError("need at least two discount values")
    if any(b >= a for a, b in zip(lam_seq, lam_seq[1:])):
        raise ValueError("lam_seq must be strictly decreasing")
    plain = plain_discounted(problem)
    dim = problem.grid.dim
    crude = solve(plain, lam_seq[0], eta=eta, tol=1e-6, max_iter=max_iter)
    c_guess = -lam_seq[0] * crude.u.mean()
    v = crude.u.values - crude.u.mean()
    values, reports = [], []
    for lam in lam_seq:
        shift = -c_guess / lam
        rep = solve(plain.replace(potential=constant_potential(shift, dim)), lam, eta=eta, tol=tol,
                    max_iter=max_iter, u0=v)
        v = rep.u.values
        reports.append(rep)
        values.append(-lam * (rep.u.mean() + shift))
        c_guess = values[-1]
    l1, l2 = lam_seq[-2], lam_seq[-1]
    c1, c2 = values[-2], values[-1]
    c0 = c2 - l2 * (c1 - c2) / (l1 - l2)
    return c0, ErgodicReport(lam_seq, values, c0, reports)


# --------------------------------------------------------------------------
# vanishing viscosity

@dataclass
class GapRow:
    eta: float
    gap: float
    ok: bool = True

    @property
    def ratio(self) -> float:
        return self.gap / self.eta


@dataclass
class GapTable:
    lam: float
    rows: list[GapRow]
    slope: float
    base: SolveReport | None = field(default=None, repr=False)

    def ratio_spread(self) -> float:
        r = [row.ratio for row in self.rows if row.ok and row.gap > 0]
        return max(r) / min(r) if r else 1.0


def loglog_slope(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = (x > 0) & (y > 0)
    if keep.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(x[keep]), np.log(y[keep]), 1)[0])


def vanishing_viscosity_gap(
    problem: ProblemSpec, lam: float, eta_seq, tol: float = 1e-10, max_iter: int = 200
) -> GapTable:
    """Sup-norm gaps between viscous and inviscid solutions at fixed ``lam``."""
    base = solve(problem, lam, 0.0, tol=tol, max_iter=max_iter)
    rows = []
    for eta in eta_seq:
        try:
            rep = solve(problem, lam, float(eta), tol=tol, max_iter=max_iter, u0=base.u)
        except NonConvergenceError as exc:
            logger.warning("eta=%g failed: %s", eta, exc)
            rows.append(GapRow(float(eta), float("nan"), ok=False))
            continue
        rows.append(GapRow(float(eta), (rep.u - base.u).sup_norm()))
    ok = [r for r in rows if r.ok]
    slope = loglog_slope([r.eta for r in ok], [r.gap for r in ok])
    return GapTable(lam, rows, slope, base)
