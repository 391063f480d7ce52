"""Vanishing-discount sweeps, constraint checks, comparison experiments and rates."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import EmptyClassError, ErgoselectError, NonConvergenceError
from .grid import GridField
from .mather import DiscreteMeasure, constraint_functional
from .models import GridPotential
from .oracle import SolutionFamily1D
from .scheme import ProblemSpec
from .solver import SolveReport, solve

logger = logging.getLogger(__name__)


def slack(C: float, h: float, lam_min: float, eta: float = 0.0) -> float:
    """The three-term error model ``C (h + lam_min + eta)``."""
    return C * (h + lam_min + eta)


def _weights_on_grid(problem: ProblemSpec) -> np.ndarray:
    pts = problem.grid.points
    return np.asarray(problem.discount.weight(pts), dtype=float) * np.ones(problem.grid.shape)


# --------------------------------------------------------------------------
# sweeps

@dataclass
class SweepResult:
    lambdas: list[float]
    reports: list[SolveReport | None]
    distances: list[float]
    limit: GridField | None
    lipschitz_max: float
    lambda_u_max: float
    failures: list = field(default_factory=list)
    flags: list[str] = field(default_factory=list)

    @property
    def solved(self) -> list[tuple[float, SolveReport]]:
        return [(l, r) for l, r in zip(self.lambdas, self.reports) if r is not None]

    def distances_decreasing(self) -> bool:
        d = self.distances
        return all(b <= a for a, b in zip(d, d[1:]))

    def equi_lipschitz(self, slack_: float = 0.05) -> bool:
        """Second-half maximum within ``slack_`` of the first-half maximum."""
        lips = [r.lipschitz for _, r in self.solved]
        half = len(lips) // 2
        if half == 0:
            return True
        return max(lips[half:]) <= max(lips[:half]) + slack_

    def table(self) -> list[dict]:
        rows = []
        for i, (lam, rep) in enumerate(zip(self.lambdas, self.reports)):
            row = {"lambda": lam, "ok": rep is not None}
            if rep is not None:
                row.update(lipschitz=rep.lipschitz, lambda_u_sup=rep.lambda_u_sup,
                           residual=rep.residual_sup, iterations=rep.iterations)
            if i < len(self.distances):
                row["distance_to_next"] = self.distances[i]
            rows.append(row)
        return rows


def lambda_sweep(
    problem: ProblemSpec,
    lam_seq,
    eta_rule: Callable[[float], float] | None = None,
    tol: float = 1e-8,
    max_iter: int = 200,
    cauchy_tol: float | None = None,
    richardson: bool = False,
    workers: int = 1,
) -> SweepResult:
    """Solve along a decreasing discount sequence and extract the limit.

    The limit is the smallest-discount solution, or ``2 u_{l/2} - u_l`` when
    ``richardson`` is set and the last two discounts halve. With
    ``cauchy_tol`` the limit is withheld unless the final distance meets it.
    """
    lam_seq = [float(l) for l in lam_seq]
    if len(lam_seq) < 4:
        raise ValueError("a sweep needs at least four discount values")
    if any(b >= a for a, b in zip(lam_seq, lam_seq[1:])):
        raise ValueError("lam_seq must be strictly decreasing")
    rule = eta_rule or (lambda lam: 0.0)

    def one(lam):
        try:
            return solve(problem, lam, float(rule(lam)), tol=tol, max_iter=max_iter)
        except ErgoselectError as exc:
            logger.warning("sweep: lambda=%g failed: %s", lam, exc)
            return exc

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(one, lam_seq))
    else:
        results = [one(l) for l in lam_seq]
    reports = [r if isinstance(r, SolveReport) else None for r in results]
    failures = [(l, str(r)) for l, r in zip(lam_seq, results) if not isinstance(r, SolveReport)]
    if len(failures) > 0.25 * len(lam_seq):
        raise NonConvergenceError(f"{len(failures)} of {len(lam_seq)} sweep rows failed", None)

    ok = [r for r in reports if r is not None]
    distances = [(a.u - b.u).sup_norm() for a, b in zip(ok, ok[1:])]
    flags = []
    if any(b > a for a, b in zip(distances, distances[1:])):
        flags.append("distances-not-decreasing")
    limit = ok[-1].u
    if richardson and len(ok) >= 2 and np.isclose(ok[-2].lam, 2 * ok[-1].lam):
        limit = 2.0 * ok[-1].u - ok[-2].u
        flags.append("richardson")
    if cauchy_tol is not None and distances and distances[-1] > cauchy_tol:
        flags.append("cauchy-tolerance-not-met")
        limit = None
    return SweepResult(lam_seq, reports, distances, limit,
                       max(r.lipschitz for r in ok), max(r.lambda_u_sup for r in ok), failures, flags)


# --------------------------------------------------------------------------
# Theorem A

@dataclass
class ConstraintRow:
    x0: list
    value: float
    lambda_level: float
    passed: bool


@dataclass
class TheoremACertificate:
    rows: list[ConstraintRow]
    slack: float
    lam_min: float

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    @property
    def worst(self) -> float:
        return max((r.value for r in self.rows), default=0.0)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "slack": self.slack, "lambda_min": self.lam_min,
                "rows": [r.__dict__ for r in self.rows]}


def theorem_a_certificate(sweep: SweepResult, measures: list[DiscreteMeasure], problem: ProblemSpec,
                          C_A: float = 5.0, eta: float = 0.0) -> TheoremACertificate:
    """Constraint ``int d_r f(x,0) u0 + V dmu <= slack`` for each sampled measure,
    together with ``int f(x, lam u_lam) dmu + lam int V dmu <= lam slack``."""
    if sweep.limit is None:
        raise ValueError("sweep has no limit")
    lam_min, rep = sweep.solved[-1]
    s_ = slack(C_A, problem.grid.h, lam_min, eta)
    disc = problem.discount
    rows = []
    for m in measures:
        val = constraint_functional(m, sweep.limit, problem.potential, disc)
        s = np.asarray(disc.weight(m.x), dtype=float) * np.ones(len(m))
        ul = rep.u.interpolate(m.x)
        lam_level = float(m.w @ (disc.f_of(s, lam_min * ul) + lam_min * problem.potential(m.x)))
        rows.append(ConstraintRow(list(m.meta.get("x0", [])), val, lam_level,
                                  val <= s_ and lam_level <= lam_min * s_))
    return TheoremACertificate(rows, s_, lam_min)


# --------------------------------------------------------------------------
# Theorem B

@dataclass
class PairReport:
    label: str
    hypothesis_margins: list[float]
    conclusion_margin: float
    hypothesis_holds: bool
    claim: str

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def theorem_b_experiment(u1: GridField, u2: GridField, measures: list[DiscreteMeasure],
                         sigma: GridField, slack_: float, label: str = "") -> PairReport:
    """Hypothesis ``int (u2 - u1) sigma dmu >= -slack`` on every sampled measure;
    when it holds, the conclusion margin ``min(u2 - u1)`` is reported against it.

    A violated hypothesis gives the verdict ``no claim``.
    """
    if np.any(sigma.values <= 0):
        raise ValueError("sigma must be positive")
    diff = u2 - u1
    margins = [float(m.w @ (diff.interpolate(m.x) * sigma.interpolate(m.x))) for m in measures]
    hyp = all(mg >= -slack_ for mg in margins)
    concl = diff.min()
    if not hyp:
        claim = "no claim"
    elif concl >= -slack_:
        claim = "u1 <= u2 verified against sampled measures"
    else:
        claim = "conclusion violated"
    return PairReport(label, margins, concl, hyp, claim)


# --------------------------------------------------------------------------
# selected solution by brute force

@dataclass
class UStar:
    u: GridField
    shifts: list[float]
    survivors: int


def max_shift(w: GridField, measures: list[DiscreteMeasure], V, discount) -> float:
    """Largest ``c`` with ``constraint_functional(mu, w + c) <= 0`` for every ``mu``.

    The functional is affine in ``c`` with slope ``int d_r f(x, 0) dmu > 0``.
    """
    best = np.inf
    for m in measures:
        s = np.asarray(discount.weight(m.x), dtype=float) * np.ones(len(m))
        slope = float(m.w @ discount.df_of(s, 0.0))
        best = min(best, -constraint_functional(m, w, V, discount) / slope)
    return best


def u_star_brute_force(family: SolutionFamily1D, measures: list[DiscreteMeasure], V, discount,
                       slack_: float = 0.0) -> UStar:
    """Pointwise max over the family members shifted as high as the constraints allow."""
    if not measures:
        raise EmptyClassError("no measures: the constraint class is unbounded")
    shifted, shifts = [], []
    for w in family.representatives:
        c = max_shift(w, measures, V, discount) + slack_
        if np.isfinite(c):
            shifted.append(w.values + c)
            shifts.append(c)
    if not shifted:
        raise EmptyClassError("no shifted representative satisfies the constraints")
    return UStar(GridField(family.grid, np.max(shifted, axis=0)), shifts, len(shifted))


# --------------------------------------------------------------------------
# rates

@dataclass
class RateFit:
    slope: float
    intercept: float
    residual: float
    exact: bool = False
    floor_warning: bool = False
    n_points: int = 0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def rate_fit(pairs, solver_tol: float = 0.0, floor: float | None = None) -> RateFit:
    """Least squares on ``(log lam, log e)``.

    Zero errors and errors below ``10 solver_tol`` are excluded; if nothing
    is left the fit is reported as exact. ``floor_warning`` is set when the
    smallest error is within ten times ``floor``.
    """
    pairs = [(float(l), float(e)) for l, e in pairs]
    if len(pairs) < 3:
        raise ValueError("rate_fit needs at least three pairs")
    keep = [(l, e) for l, e in pairs if e > 10 * solver_tol and e > 0]
    if len(keep) < 2:
        return RateFit(float("nan"), float("nan"), 0.0, exact=True, n_points=len(keep))
    x = np.log([l for l, _ in keep])
    y = np.log([e for _, e in keep])
    slope, intercept = np.polyfit(x, y, 1)
    res = float(np.max(np.abs(y - (slope * x + intercept))))
    warn = floor is not None and min(e for _, e in keep) < 10 * floor
    return RateFit(float(slope), float(intercept), res, False, warn, len(keep))


# --------------------------------------------------------------------------
# Theorem C

@dataclass
class TheoremCReport:
    lambdas: list[float]
    errors: list[float]
    increments: list[float]
    floor: float
    fit: RateFit
    M: float
    M_scheme: float
    d0: float
    K0: float
    u_hat_sup: float
    bound_ok: list[bool]
    reference_lambda: float

    @property
    def bound_holds(self) -> bool:
        return all(self.bound_ok)

    def rows(self) -> list[dict]:
        return [{"lambda": l, "error": e, "increment": d, "bound": (self.M + self.M_scheme) * l, "ok": ok}
                for l, e, d, ok in zip(self.lambdas, self.errors, self.increments, self.bound_ok)]

    def to_dict(self) -> dict:
        return {"slope": self.fit.slope, "floor": self.floor, "M": self.M, "M_scheme": self.M_scheme,
                "d0": self.d0, "K0": self.K0, "u_hat_sup": self.u_hat_sup,
                "bound_holds": self.bound_holds, "reference_lambda": self.reference_lambda,
                "rows": self.rows()}


def theorem_c_constants(problem: ProblemSpec, u_hat: GridField, samples: int = 201) -> tuple[float, float, float]:
    """``(M, d0, K0)`` with ``M = K0 ||u||^2 / (2 d0)``.

    ``d0`` is the minimum of ``d_r f`` over ``|r| <= ||u|| + 1`` and ``K0`` the
    Lipschitz constant of ``d_r f`` in ``r`` over ``|r| <= ||u||``.
    """
    s = _weights_on_grid(problem).ravel()
    norm = u_hat.sup_norm()
    disc = problem.discount
    r_d = np.linspace(-(norm + 1), norm + 1, samples)
    d0 = float(min(np.min(disc.df_of(s, r)) for r in r_d))
    r_k = np.linspace(-norm, norm, samples)
    K0 = float(max(np.max(np.abs(disc.d2f_of(s, r))) for r in r_k))
    return K0 * norm**2 / (2.0 * d0), d0, K0


def choice_potential(problem: ProblemSpec, u_hat: GridField) -> GridPotential:
    """``V = -d_r f(x, 0) u_hat`` sampled on the grid."""
    s = _weights_on_grid(problem)
    return GridPotential(GridField(problem.grid, -problem.discount.df_of(s, 0.0) * u_hat.values, "V_hat"))


def theorem_c_harness(problem: ProblemSpec, u_hat: GridField, lam_seq, tol: float = 1e-10,
                      max_iter: int = 400, ref_factor: float = 16.0) -> TheoremCReport:
    """Errors ``||u_lam - u_hat||`` for the potential that selects ``u_hat``.

    The grid floor is ``||u_ref - u_hat||`` where ``u_ref`` solves at
    ``lam_min / ref_factor``; the rate is fitted on ``||u_lam - u_ref||``.
    The bound check is ``e <= (M + floor / lam_min) lam``.
    """
    lam_seq = [float(l) for l in lam_seq]
    q = problem.replace(potential=choice_potential(problem, u_hat))
    M, d0, K0 = theorem_c_constants(problem, u_hat)
    lam_ref = lam_seq[-1] / ref_factor
    sols = []
    u_prev = None
    for lam in lam_seq + [lam_ref]:
        rep = solve(q, lam, 0.0, tol=tol, max_iter=max_iter, u0=u_prev)
        u_prev = rep.u
        sols.append(rep.u)
    ref = sols[-1]
    floor = (ref - u_hat).sup_norm()
    errors = [(u - u_hat).sup_norm() for u in sols[:-1]]
    increments = [(u - ref).sup_norm() for u in sols[:-1]]
    fit = rate_fit(list(zip(lam_seq, increments)), solver_tol=tol)
    M_scheme = floor / lam_seq[-1]
    ok = [e <= (M + M_scheme) * l * (1 + 1e-12) for l, e in zip(lam_seq, errors)]
    return TheoremCReport(lam_seq, errors, increments, floor, fit, M, M_scheme, d0, K0,
                          u_hat.sup_norm(), ok, lam_ref)
