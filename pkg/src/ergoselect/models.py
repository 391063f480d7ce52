"""Model catalog: mechanical Hamiltonians, potentials, discounts and diffusions.

Closed-form descriptors evaluate at arbitrary points ``x`` whose last axis
holds the coordinates. In 1D a bare array of positions is also accepted.
Every descriptor round-trips through ``to_dict`` / ``from_dict`` so that run
configurations can be stored as plain JSON.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import AssumptionViolation
from .grid import GridField, PeriodicGrid

TWO_PI = 2.0 * np.pi


def as_points(x, dim: int) -> np.ndarray:
    """Normalize ``x`` to an array whose last axis has length ``dim``."""
    x = np.asarray(x, dtype=float)
    if dim == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    if x.shape[-1] != dim:
        raise ValueError(f"points need {dim} coordinates, got shape {x.shape}")
    return x


# --------------------------------------------------------------------------
# potentials

@dataclass(frozen=True)
class CosinePotential:
    """``offset + amplitude * cos(2 pi k.x + phase)`` with integer wavevector ``k``."""

    amplitude: float = 1.0
    frequency: tuple[int, ...] = (1,)
    phase: float = 0.0
    offset: float = 0.0

    def __post_init__(self):
        freq = self.frequency
        if np.isscalar(freq):
            freq = (int(freq),)
        object.__setattr__(self, "frequency", tuple(int(k) for k in freq))

    @property
    def dim(self) -> int:
        return len(self.frequency)

    def _arg(self, x):
        x = as_points(x, self.dim)
        return TWO_PI * (x @ np.asarray(self.frequency, dtype=float)) + self.phase

    def __call__(self, x) -> np.ndarray:
        return self.offset + self.amplitude * np.cos(self._arg(x))

    def gradient(self, x) -> np.ndarray:
        s = -self.amplitude * np.sin(self._arg(x))
        return s[..., None] * (TWO_PI * np.asarray(self.frequency, dtype=float))

    def bounds(self) -> tuple[float, float]:
        """Exact (min, max) over the torus."""
        a = abs(self.amplitude)
        if all(k == 0 for k in self.frequency):
            v = self.offset + self.amplitude * np.cos(self.phase)
            return v, v
        return self.offset - a, self.offset + a

    def gradient_bound(self) -> float:
        return abs(self.amplitude) * TWO_PI * float(np.linalg.norm(self.frequency))

    def to_dict(self) -> dict:
        return {"kind": "cosine", "amplitude": self.amplitude, "frequency": list(self.frequency),
                "phase": self.phase, "offset": self.offset}


@dataclass(frozen=True)
class SumPotential:
    """Finite sum of cosine terms."""

    terms: tuple[CosinePotential, ...]

    @property
    def dim(self) -> int:
        return self.terms[0].dim

    def __call__(self, x):
        return sum(t(x) for t in self.terms)

    def gradient(self, x):
        return sum(t.gradient(x) for t in self.terms)

    def bounds(self) -> tuple[float, float]:
        grid = PeriodicGrid(self.dim, 256 if self.dim == 2 else 8192)
        vals = self(grid.points)
        return float(vals.min()), float(vals.max())

    def gradient_bound(self) -> float:
        return sum(t.gradient_bound() for t in self.terms)

    def to_dict(self) -> dict:
        return {"kind": "sum", "terms": [t.to_dict() for t in self.terms]}


@dataclass(frozen=True, eq=False)
class GridPotential:
    """Potential known only at grid nodes; periodic linear interpolation elsewhere."""

    field: GridField

    @property
    def dim(self) -> int:
        return self.field.grid.dim

    def __call__(self, x):
        return self.field.interpolate(as_points(x, self.dim))

    def bounds(self) -> tuple[float, float]:
        return self.field.min(), self.field.max()

    def to_dict(self) -> dict:
        return {"kind": "grid", "n": self.field.grid.n, "dim": self.dim,
                "values": self.field.flat().tolist()}


Potential = Union[CosinePotential, SumPotential, GridPotential]


def constant_potential(value: float, dim: int = 1) -> CosinePotential:
    return CosinePotential(amplitude=0.0, frequency=(0,) * dim, offset=float(value))


def potential_from_dict(d: dict) -> Potential:
    kind = d.get("kind", "cosine")
    if kind == "cosine":
        return CosinePotential(float(d.get("amplitude", 1.0)), tuple(d.get("frequency", (1,))),
                               float(d.get("phase", 0.0)), float(d.get("offset", 0.0)))
    if kind == "constant":
        return constant_potential(float(d["value"]), int(d.get("dim", 1)))
    if kind == "sum":
        return SumPotential(tuple(potential_from_dict(t) for t in d["terms"]))
    if kind == "grid":
        grid = PeriodicGrid(int(d.get("dim", 1)), int(d["n"]))
        return GridPotential(grid.field(np.asarray(d["values"], dtype=float)))
    raise ValueError(f"unknown potential kind {kind!r}")


# --------------------------------------------------------------------------
# Hamiltonian

@dataclass(frozen=True)
class MechanicalHamiltonian:
    """``H(x, p) = |p|^2 / 2 + W(x)``; its Legendre dual is ``|v|^2 / 2 - W(x)``."""

    W: Potential = field(default_factory=lambda: CosinePotential(1.0, (2,)))

    @property
    def dim(self) -> int:
        return self.W.dim

    def __call__(self, x, p) -> np.ndarray:
        p = as_points(p, self.dim)
        return 0.5 * np.sum(p * p, axis=-1) + self.W(x)

    def dp(self, x, p) -> np.ndarray:
        return as_points(p, self.dim).copy()

    def dx(self, x, p) -> np.ndarray:
        return self.W.gradient(x)

    def lagrangian(self, x, v) -> np.ndarray:
        v = as_points(v, self.dim)
        return 0.5 * np.sum(v * v, axis=-1) - self.W(x)

    def dv_lagrangian(self, x, v) -> np.ndarray:
        return as_points(v, self.dim).copy()

    def structure_constants(self) -> dict:
        """gamma_1 with |D_x H| <= gamma_1 (1 + |H|), and gamma_2 = 1 + 2|min H|."""
        wmin, _ = self.W.bounds()
        return {"gamma1": self.W.gradient_bound(), "gamma2": 1.0 + 2.0 * abs(wmin)}

    def to_dict(self) -> dict:
        return {"family": "mechanical", "potential": self.W.to_dict()}


def hamiltonian_from_dict(d: dict) -> MechanicalHamiltonian:
    family = d.get("family", "mechanical")
    if family != "mechanical":
        raise ValueError(f"unsupported Hamiltonian family {family!r}")
    return MechanicalHamiltonian(potential_from_dict(d.get("potential", {})))


def eval_H(spec: MechanicalHamiltonian, x, p):
    return spec(x, p)


def legendre_L(spec: MechanicalHamiltonian, x, v):
    return spec.lagrangian(x, v)


def dp_H(spec: MechanicalHamiltonian, x, p):
    return spec.dp(x, p)


def dv_L(spec: MechanicalHamiltonian, x, v):
    return spec.dv_lagrangian(x, v)


# --------------------------------------------------------------------------
# discounts

@dataclass(frozen=True)
class LinearDiscount:
    """``f(x, r) = r``."""

    family = "linear"
    convex_in_r = True
    linear_in_r = True

    def weight(self, x):
        return 1.0

    @staticmethod
    def f_of(s, r):
        return np.asarray(r, dtype=float) * np.ones_like(s)

    @staticmethod
    def df_of(s, r):
        return np.ones_like(np.asarray(r, dtype=float)) * np.ones_like(s)

    @staticmethod
    def d2f_of(s, r):
        return np.zeros_like(np.asarray(r, dtype=float)) * np.ones_like(s)

    def to_dict(self) -> dict:
        return {"family": "linear"}


@dataclass(frozen=True)
class SpatialLinearDiscount:
    """``f(x, r) = sigma(x) r`` with a positive weight ``sigma``."""

    sigma: Potential
    family = "spatial_linear"
    convex_in_r = True
    linear_in_r = True

    def weight(self, x):
        return self.sigma(as_points(x, self.sigma.dim))

    @staticmethod
    def f_of(s, r):
        return s * r

    @staticmethod
    def df_of(s, r):
        return s * np.ones_like(r)

    @staticmethod
    def d2f_of(s, r):
        return np.zeros_like(s * r)

    def to_dict(self) -> dict:
        return {"family": "spatial_linear", "sigma": self.sigma.to_dict()}


@dataclass(frozen=True)
class ExpSpatialDiscount:
    """``f(x, r) = sigma(x) (exp(r) - 1)``."""

    sigma: Potential
    family = "exp_spatial"
    convex_in_r = True
    linear_in_r = False

    def weight(self, x):
        return self.sigma(as_points(x, self.sigma.dim))

    @staticmethod
    def f_of(s, r):
        return s * np.expm1(r)

    @staticmethod
    def df_of(s, r):
        return s * np.exp(r)

    @staticmethod
    def d2f_of(s, r):
        return s * np.exp(r)

    def to_dict(self) -> dict:
        return {"family": "exp_spatial", "sigma": self.sigma.to_dict()}


Discount = Union[LinearDiscount, SpatialLinearDiscount, ExpSpatialDiscount]


def discount_f(discount: Discount, x, r):
    return discount.f_of(discount.weight(x), r)


def discount_df(discount: Discount, x, r):
    return discount.df_of(discount.weight(x), r)


def discount_from_dict(d: dict) -> Discount:
    family = d.get("family", "linear")
    if family == "linear":
        return LinearDiscount()
    if family == "spatial_linear":
        return SpatialLinearDiscount(potential_from_dict(d["sigma"]))
    if family == "exp_spatial":
        return ExpSpatialDiscount(potential_from_dict(d["sigma"]))
    raise ValueError(f"unknown discount family {family!r}")


# --------------------------------------------------------------------------
# diffusion

@dataclass(frozen=True)
class AxisDiffusion:
    """Coefficient ``a(x)`` on one axis: ``zero``, ``constant`` theta, or
    ``degenerate`` theta * sin^2(pi k x_axis)."""

    kind: str = "zero"
    theta: float = 0.0
    k: int = 1

    def __post_init__(self):
        if self.kind not in ("zero", "constant", "degenerate"):
            raise ValueError(f"unknown diffusion kind {self.kind!r}")

    def __call__(self, x_axis) -> np.ndarray:
        x_axis = np.asarray(x_axis, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(x_axis)
        if self.kind == "constant":
            return np.full_like(x_axis, self.theta)
        return self.theta * np.sin(np.pi * self.k * x_axis) ** 2

    def to_dict(self) -> dict:
        return {"kind": self.kind, "theta": self.theta, "k": self.k}


@dataclass(frozen=True)
class Diffusion:
    """Diagonal diffusion ``A(x) = diag(a_1(x_1), ..., a_n(x_n))``."""

    axes: tuple[AxisDiffusion, ...] = (AxisDiffusion(),)

    @property
    def dim(self) -> int:
        return len(self.axes)

    def coefficients(self, x) -> list[np.ndarray]:
        x = as_points(x, self.dim)
        return [ax(x[..., i]) for i, ax in enumerate(self.axes)]

    def on_grid(self, grid: PeriodicGrid) -> list[GridField]:
        return [grid.field(ax(c)) for ax, c in zip(self.axes, grid.coords())]

    def trace_max(self) -> float:
        return float(sum(max(ax.theta, 0.0) if ax.kind != "zero" else 0.0 for ax in self.axes))

    @property
    def is_zero(self) -> bool:
        return all(ax.kind == "zero" or ax.theta == 0.0 for ax in self.axes)

    def to_dict(self) -> list:
        return [ax.to_dict() for ax in self.axes]

    @classmethod
    def zero(cls, dim: int = 1) -> Diffusion:
        return cls((AxisDiffusion(),) * dim)

    @classmethod
    def constant(cls, theta: float, dim: int = 1) -> Diffusion:
        return cls((AxisDiffusion("constant", theta),) * dim)

    @classmethod
    def degenerate(cls, theta: float = 1.0, k: int = 1, dim: int = 1) -> Diffusion:
        return cls((AxisDiffusion("degenerate", theta, k),) * dim)


def diffusion_from_dict(d) -> Diffusion:
    if isinstance(d, dict):
        d = [d]
    return Diffusion(tuple(AxisDiffusion(a.get("kind", "zero"), float(a.get("theta", 0.0)),
                                         int(a.get("k", 1))) for a in d))


# --------------------------------------------------------------------------
# validation

@dataclass
class ValidationReport:
    R: float
    min_df: float
    max_abs_f0: float
    min_diffusion: float
    d0: float
    K0: float
    max_df: float
    gamma1: float
    gamma2: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def validate_assumptions(problem, R: float = 0.0, audit_n: int | None = None) -> ValidationReport:
    """Check monotone discount, normalization f(x,0)=0 and nonnegative diffusion.

    Derivative bounds are taken over ``T^n x [-R, R]`` on an audit grid finer
    than the problem grid. ``d0`` is ``min_x d_r f(x, 0)``; ``K0`` bounds the
    Lipschitz constant of ``d_r f`` in ``r`` on ``[-R, R]``.
    """
    grid = problem.grid
    dim = grid.dim
    audit = PeriodicGrid(dim, audit_n or (max(4 * grid.n, 1024) if dim == 1 else max(2 * grid.n, 64)))
    pts = audit.points.reshape(-1, dim)
    a_min = min(float(np.min(c)) for c in problem.diffusion.coefficients(pts))
    if a_min < 0:
        raise AssumptionViolation("negative-diffusion", f"min a = {a_min:.6g}")

    s = np.asarray(problem.discount.weight(pts), dtype=float) * np.ones(len(pts))
    if not np.all(s > 0):
        raise AssumptionViolation("nonpositive-discount-weight", f"min sigma = {s.min():.6g}")
    disc = problem.discount
    rs = np.linspace(-R, R, 41) if R > 0 else np.zeros(1)
    dfs = np.array([disc.df_of(s, r) for r in rs])
    min_df, max_df = float(dfs.min()), float(dfs.max())
    if min_df <= 0:
        raise AssumptionViolation("non-monotone-discount", f"min d_r f = {min_df:.6g}")
    f0 = float(np.max(np.abs(disc.f_of(s, 0.0))))
    if f0 > 1e-14:
        raise AssumptionViolation("f(x,0) != 0", f"max |f(x,0)| = {f0:.3g}")
    d0 = float(np.min(disc.df_of(s, 0.0)))
    K0 = float(np.max(np.abs([disc.d2f_of(s, r) for r in (-R, R)])))

    consts = problem.hamiltonian.structure_constants()
    return ValidationReport(R=R, min_df=min_df, max_abs_f0=f0, min_diffusion=a_min, d0=d0, K0=K0,
                            max_df=max_df, **consts)
