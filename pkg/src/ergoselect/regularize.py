"""Sup/inf convolutions, Lasry-Lions regularization and smooth subsolutions.

All convolutions are exact discrete extrema over grid nodes. Each axis pass
is the linear-time lower envelope of parabolas applied to three tiled
periods, which is exact once the quadratic penalty rules out anything
farther than one period away.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import PeriodInsufficiencyError
from .grid import GridField, diffusion_term, discrete_lipschitz, forward_backward_differences, laplacian

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RegularizationParams:
    """Master scale ``eta`` with ``eps = K eta^3`` and ``delta = eta^4``."""

    eta: float
    K: float = 1.0

    def __post_init__(self):
        if not self.eta > 0 or not self.K > 0:
            raise ValueError("eta and K must be positive")
        if not self.eps < self.eta:
            raise ValueError(f"eps={self.eps:.3g} must be smaller than eta={self.eta:.3g}")

    @property
    def eps(self) -> float:
        return self.K * self.eta**3

    @property
    def delta(self) -> float:
        return self.eta**4

    def to_dict(self) -> dict:
        return {"eta": self.eta, "K": self.K, "eps": self.eps, "delta": self.delta}


def _lower_envelope(f: np.ndarray, scale: float) -> np.ndarray:
    """``min_j f_j + scale (i - j)^2`` for every index ``i`` (Felzenszwalb-Huttenlocher)."""
    n = len(f)
    v = np.zeros(n, dtype=np.int64)
    z = np.empty(n + 1)
    k = 0
    v[0] = 0
    z[0] = -np.inf
    z[1] = np.inf
    for q in range(1, n):
        while True:
            p = v[k]
            s = ((f[q] + scale * q * q) - (f[p] + scale * p * p)) / (2.0 * scale * (q - p))
            if s <= z[k]:
                k -= 1
            else:
                break
        k += 1
        v[k] = q
        z[k] = s
        z[k + 1] = np.inf
    out = np.empty(n)
    k = 0
    for q in range(n):
        while z[k + 1] < q:
            k += 1
        p = v[k]
        out[q] = scale * (q - p) ** 2 + f[p]
    return out


def _periodic_min_plus(values: np.ndarray, eps: float, h: float) -> np.ndarray:
    """``min_y values(y) + |x - y|^2 / (2 eps)`` on the torus, axis by axis."""
    osc = float(values.max() - values.min())
    if not 2.0 * eps * osc < 1.0:
        raise PeriodInsufficiencyError(
            f"2 eps osc = {2 * eps * osc:.3g} >= 1: maximizers may lie beyond one period")
    scale = h * h / (2.0 * eps)
    out = np.array(values, dtype=float)
    for axis in range(out.ndim):
        moved = np.moveaxis(out, axis, -1)
        n = moved.shape[-1]
        res = np.empty_like(moved)
        for idx in np.ndindex(moved.shape[:-1]):
            row = moved[idx]
            res[idx] = _lower_envelope(np.concatenate([row, row, row]), scale)[n:2 * n]
        out = np.moveaxis(res, -1, axis)
    return out


def sup_convolution(w: GridField, eps: float) -> GridField:
    """``sup_y w(y) - |x - y|^2 / (2 eps)`` over grid nodes."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    return GridField(w.grid, -_periodic_min_plus(-w.values, eps, w.grid.h), w.name)


def inf_convolution(w: GridField, eps: float) -> GridField:
    """``inf_y w(y) + |x - y|^2 / (2 eps)`` over grid nodes."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    return GridField(w.grid, _periodic_min_plus(w.values, eps, w.grid.h), w.name)


def brute_force_sup_convolution(w: GridField, eps: float) -> GridField:
    """Quadratic-cost reference: maximize over every node pair with torus distance."""
    grid = w.grid
    pts = grid.points.reshape(-1, grid.dim)
    vals = w.flat()
    out = np.empty(len(vals))
    for i, x in enumerate(pts):
        d = np.abs(pts - x)
        d = np.minimum(d, 1.0 - d)
        out[i] = np.max(vals - np.sum(d * d, axis=1) / (2.0 * eps))
    return GridField(grid, out.reshape(grid.shape))


def lasry_lions(w: GridField, params: RegularizationParams) -> GridField:
    """``(w^{eta + eps})_eps``: sup-convolution followed by inf-convolution."""
    return inf_convolution(sup_convolution(w, params.eta + params.eps), params.eps)


def second_differences(w: GridField) -> list[np.ndarray]:
    h = w.grid.h
    return [(np.roll(w.values, -1, a) - 2 * w.values + np.roll(w.values, 1, a)) / h**2
            for a in range(w.grid.dim)]


@dataclass
class AutoK:
    K: float
    M1: float
    M2: float
    denominator: float
    fallback: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def auto_K(problem, w: GridField, c0: float, samples: int = 257) -> AutoK:
    """``1 / ((n - 1) + M1 + M2 - c0)`` with ``M1 = max tr A`` and
    ``M2 = max{|H(x, p)| : |p| <= Lip(w)} + |c0|``; ``K = 1`` when the
    denominator is not positive."""
    grid = problem.grid
    pts = grid.points.reshape(-1, grid.dim)
    M1 = float(np.max(sum(problem.diffusion.coefficients(pts))))
    lip = discrete_lipschitz(w)
    H = problem.hamiltonian
    # |p|^2/2 + W is extremal on the sphere |p| = Lip or at p = 0
    Wx = np.asarray(H.W(pts), dtype=float) * np.ones(len(pts))
    radial = np.linspace(0.0, lip, samples)
    M2 = float(np.max(np.abs(0.5 * radial[:, None] ** 2 + Wx[None, :]))) + abs(c0)
    denom = (grid.dim - 1) + M1 + M2 - c0
    if denom <= 0:
        logger.warning("auto_K denominator %.3g <= 0; using K = 1", denom)
        return AutoK(1.0, M1, M2, denom, True)
    return AutoK(1.0 / denom, M1, M2, denom, False)


@dataclass
class MollifyResult:
    field: GridField
    delta: float
    sub_resolution: bool


def mollify(w: GridField, delta: float) -> MollifyResult:
    """Periodic convolution with the normalized bump ``(1 - |y/delta|^2)^4``.

    Below two grid spacings the kernel would be a single node, so ``w`` is
    returned unchanged and flagged.
    """
    grid = w.grid
    if delta < 2 * grid.h:
        return MollifyResult(w, delta, True)
    if delta > 0.25:
        raise ValueError("delta must be at most a quarter period")
    r = int(np.floor(delta / grid.h))
    offs = np.arange(-r, r + 1) * grid.h
    mesh = np.meshgrid(*([offs] * grid.dim), indexing="ij")
    rho2 = sum(m * m for m in mesh) / delta**2
    kern = np.where(rho2 < 1, (1 - rho2) ** 4, 0.0)
    kern /= kern.sum()
    out = np.zeros(grid.shape)
    for idx in zip(*np.nonzero(kern)):
        shift = tuple(int(i) - r for i in idx)
        out += kern[idx] * np.roll(w.values, shift, axis=tuple(range(grid.dim)))
    return MollifyResult(GridField(grid, out, w.name), delta, False)


def central_gradient(w: GridField) -> np.ndarray:
    comps = []
    for axis in range(w.grid.dim):
        dm, dp = forward_backward_differences(w, axis)
        comps.append(0.5 * (dm.values + dp.values))
    return np.stack(comps, axis=-1)


@dataclass
class SubsolutionCertificate:
    w_reg: GridField
    max_excess: float
    sup_distance: float
    params: RegularizationParams
    K_info: AutoK
    sub_resolution: bool
    flags: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"max_excess": self.max_excess, "sup_distance": self.sup_distance,
                **self.params.to_dict(), "K_fallback": self.K_info.fallback,
                "sub_resolution": self.sub_resolution, "flags": list(self.flags)}


def subsolution_excess(w: GridField, problem, eta: float, c0: float) -> np.ndarray:
    """``-eta^2 Lap w - tr(A D^2 w) + H(x, central Dw) - c0`` with centered differences."""
    grid = w.grid
    a = problem.diffusion.on_grid(grid)
    p = central_gradient(w)
    Hx = problem.hamiltonian(grid.points, p)
    return (-eta**2 * laplacian(w).values - diffusion_term(w, a).values + Hx - c0)


def smooth_subsolution_certificate(w: GridField, eta: float, problem, c0: float,
                                   K: float | None = None) -> SubsolutionCertificate:
    """Regularize a subsolution and measure how far it is from being one."""
    flags = []
    kinfo = auto_K(problem, w, c0)
    if kinfo.fallback:
        flags.append("K-fallback")
    params = RegularizationParams(eta, kinfo.K if K is None else K)
    ll = lasry_lions(w, params)
    moll = mollify(ll, params.delta)
    if moll.sub_resolution:
        flags.append("sub-resolution-mollifier")
    w_reg = moll.field
    excess = float(np.max(subsolution_excess(w_reg, problem, eta, c0)))
    return SubsolutionCertificate(w_reg, excess, (w_reg - w).sup_norm(), params, kinfo,
                                  moll.sub_resolution, flags)
