"""Uniform periodic grids on the unit torus and discrete calculus on them.

Fields are stored as numpy arrays of shape ``(n,) * dim`` in ``ij`` order.
Every difference operator wraps indices periodically, so the torus has no
boundary and all sums telescope exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import AliasingError, AssumptionViolation, IncompatibleGridError


@dataclass(frozen=True)
class PeriodicGrid:
    """Uniform lattice with ``n`` nodes per axis on the torus ``[0, 1)^dim``."""

    dim: int
    n: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if self.n < 8:
            raise ValueError(f"n must be at least 8, got {self.n}")

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def size(self) -> int:
        return self.n**self.dim

    @property
    def cell_volume(self) -> float:
        return self.h**self.dim

    def axis_coordinates(self) -> np.ndarray:
        return np.arange(self.n) * self.h

    def coords(self) -> tuple[np.ndarray, ...]:
        """Coordinate arrays, one per axis, each of shape ``self.shape``."""
        x = self.axis_coordinates()
        return tuple(np.meshgrid(*([x] * self.dim), indexing="ij"))

    @property
    def points(self) -> np.ndarray:
        """Node positions, shape ``self.shape + (dim,)``."""
        return np.stack(self.coords(), axis=-1)

    def nearest_index(self, x) -> int:
        """Flat index of the node closest (on the torus) to point ``x``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.shape != (self.dim,):
            raise ValueError(f"point must have {self.dim} coordinates")
        ijk = np.mod(np.rint(np.mod(x, 1.0) * self.n).astype(int), self.n)
        return int(np.ravel_multi_index(tuple(ijk), self.shape))

    def point_of(self, index: int) -> np.ndarray:
        ijk = np.unravel_index(index, self.shape)
        return np.array(ijk, dtype=float) * self.h

    def field(self, values, name: str | None = None) -> GridField:
        return GridField(self, np.asarray(values, dtype=float), name=name)

    def constant(self, c: float) -> GridField:
        return GridField(self, np.full(self.shape, float(c)))

    def zeros(self) -> GridField:
        return self.constant(0.0)

    def sample(self, fn, name: str | None = None) -> GridField:
        """Evaluate ``fn(points)`` at every node."""
        return GridField(self, np.asarray(fn(self.points), dtype=float), name=name)


class GridField:
    """Finite real values at the nodes of a :class:`PeriodicGrid`.

    Value-semantic: the underlying buffer is made read-only, and arithmetic
    returns new fields. Arithmetic between fields requires identical grids.
    """

    __slots__ = ("grid", "values", "name")

    def __init__(self, grid: PeriodicGrid, values, name: str | None = None):
        values = np.array(values, dtype=float)
        if values.size == grid.size and values.shape != grid.shape:
            values = values.reshape(grid.shape)
        if values.shape != grid.shape:
            raise IncompatibleGridError(
                f"values of shape {values.shape} do not match grid shape {grid.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("GridField entries must be finite")
        values.setflags(write=False)
        self.grid = grid
        self.values = values
        self.name = name

    def __repr__(self):
        return f"GridField(dim={self.grid.dim}, n={self.grid.n}, name={self.name!r})"

    def _other(self, other):
        if isinstance(other, GridField):
            if other.grid != self.grid:
                raise IncompatibleGridError("fields live on different grids")
            return other.values
        return other

    def __add__(self, other):
        return GridField(self.grid, self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return GridField(self.grid, self.values - self._other(other))

    def __rsub__(self, other):
        return GridField(self.grid, self._other(other) - self.values)

    def __mul__(self, other):
        return GridField(self.grid, self.values * self._other(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return GridField(self.grid, self.values / self._other(other))

    def __neg__(self):
        return GridField(self.grid, -self.values)

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def min(self) -> float:
        return float(self.values.min())

    def max(self) -> float:
        return float(self.values.max())

    def mean(self) -> float:
        return float(self.values.mean())

    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def shift(self, k: int, axis: int = 0) -> GridField:
        """Cyclic shift by ``k`` nodes along ``axis``."""
        return GridField(self.grid, np.roll(self.values, k, axis=axis))

    def interpolate(self, points) -> np.ndarray:
        """Periodic multilinear interpolation at arbitrary points (last axis = dim)."""
        return periodic_interpolate(self.values, points)


def periodic_interpolate(values: np.ndarray, points) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    dim = values.ndim
    n = values.shape[0]
    pts = np.asarray(points, dtype=float)
    if dim == 1 and (pts.ndim == 0 or pts.shape[-1] != 1):
        pts = pts[..., None]
    s = np.mod(pts, 1.0) * n
    i0 = np.floor(s).astype(int)
    t = s - i0
    i0 %= n
    i1 = (i0 + 1) % n
    if dim == 1:
        return (1 - t[..., 0]) * values[i0[..., 0]] + t[..., 0] * values[i1[..., 0]]
    tx, ty = t[..., 0], t[..., 1]
    return (
        (1 - tx) * (1 - ty) * values[i0[..., 0], i0[..., 1]]
        + tx * (1 - ty) * values[i1[..., 0], i0[..., 1]]
        + (1 - tx) * ty * values[i0[..., 0], i1[..., 1]]
        + tx * ty * values[i1[..., 0], i1[..., 1]]
    )


def _check_axis(u: GridField, axis: int):
    if not 0 <= axis < u.grid.dim:
        raise ValueError(f"axis {axis} out of range for dim {u.grid.dim}")


def forward_backward_differences(u: GridField, axis: int = 0) -> tuple[GridField, GridField]:
    """Return ``(D-u, D+u)`` along ``axis`` with periodic wrap."""
    _check_axis(u, axis)
    v = u.values
    h = u.grid.h
    dplus = (np.roll(v, -1, axis=axis) - v) / h
    dminus = (v - np.roll(v, 1, axis=axis)) / h
    return GridField(u.grid, dminus), GridField(u.grid, dplus)


def second_difference(u: GridField, axis: int = 0) -> GridField:
    _check_axis(u, axis)
    v = u.values
    h = u.grid.h
    return GridField(u.grid, (np.roll(v, -1, axis=axis) - 2.0 * v + np.roll(v, 1, axis=axis)) / h**2)


def laplacian(u: GridField) -> GridField:
    out = np.zeros(u.grid.shape)
    for axis in range(u.grid.dim):
        out += second_difference(u, axis).values
    return GridField(u.grid, out)


def diffusion_term(u: GridField, a) -> GridField:
    """``sum_axis a_axis * D^2_axis u`` for a diagonal, nonnegative diffusion.

    ``a`` is a sequence of per-axis coefficient fields (or arrays).
    """
    a = list(a)
    if len(a) != u.grid.dim:
        raise ValueError(f"need one diffusion field per axis ({u.grid.dim}), got {len(a)}")
    out = np.zeros(u.grid.shape)
    for axis, coef in enumerate(a):
        if isinstance(coef, GridField):
            if coef.grid != u.grid:
                raise IncompatibleGridError("diffusion field on a different grid")
            coef = coef.values
        else:
            coef = np.broadcast_to(np.asarray(coef, float), u.grid.shape)
        if np.any(coef < 0):
            raise AssumptionViolation("negative-diffusion", f"min a_{axis} = {coef.min():.3g}")
        out += coef * second_difference(u, axis).values
    return GridField(u.grid, out)


def integrate(u: GridField) -> float:
    """Periodic midpoint rule ``h^dim * sum(values)``."""
    return float(u.grid.cell_volume * np.sum(u.values))


def discrete_lipschitz(u: GridField) -> float:
    """Largest forward-difference slope over all nodes and axes."""
    return max(forward_backward_differences(u, axis)[1].sup_norm() for axis in range(u.grid.dim))


class TestFunction(NamedTuple):
    """Smooth periodic function sampled with analytic derivatives."""

    phi: GridField
    grad: tuple[GridField, ...]
    hess_diag: tuple[GridField, ...]
    label: str


def _trig(kind: str, k: float, x: np.ndarray):
    w = 2.0 * np.pi * k
    if kind == "sin":
        return np.sin(w * x), w * np.cos(w * x), -(w**2) * np.sin(w * x)
    return np.cos(w * x), -w * np.sin(w * x), -(w**2) * np.cos(w * x)


def fourier_basis(points: np.ndarray, dim: int, max_mode: int):
    """Analytic values, gradients and diagonal Hessians of the trigonometric
    test family at arbitrary points (last axis = coordinates).

    Yields ``(label, phi, grad, hess_diag)`` with ``grad`` and ``hess_diag``
    lists indexed by axis.
    """
    pts = np.asarray(points, dtype=float)
    if dim == 1:
        x = pts[..., 0]
        for m in range(1, max_mode + 1):
            for kind in ("sin", "cos"):
                f, df, d2f = _trig(kind, m, x)
                yield f"{kind}{m}", f, [df], [d2f]
        return
    x, y = pts[..., 0], pts[..., 1]
    zeros = np.zeros_like(x)
    for m in range(1, max_mode + 1):
        for kind in ("sin", "cos"):
            f, df, d2f = _trig(kind, m, x)
            yield f"{kind}{m}(x)", f, [df, zeros], [d2f, zeros]
            f, df, d2f = _trig(kind, m, y)
            yield f"{kind}{m}(y)", f, [zeros, df], [zeros, d2f]
    for mx in range(1, max_mode + 1):
        for my in range(1, max_mode + 1):
            for kx in ("sin", "cos"):
                for ky in ("sin", "cos"):
                    fx, dfx, d2fx = _trig(kx, mx, x)
                    fy, dfy, d2fy = _trig(ky, my, y)
                    yield (f"{kx}{mx}(x){ky}{my}(y)", fx * fy, [dfx * fy, fx * dfy],
                           [d2fx * fy, fx * d2fy])


def check_modes(n: int, max_mode: int):
    if max_mode < 1:
        raise ValueError("max_mode must be >= 1")
    if max_mode >= n / 2:
        raise AliasingError(f"max_mode={max_mode} not resolved by n={n}")


def fourier_test_functions(grid: PeriodicGrid, max_mode: int) -> list[TestFunction]:
    """Sine/cosine test functions of modes ``1..max_mode`` (and products in 2D).

    Derivatives are the exact analytic ones sampled at the nodes. Every
    function has sup-norm one on the torus.
    """
    check_modes(grid.n, max_mode)
    return [
        TestFunction(grid.field(f), tuple(grid.field(g) for g in grad),
                     tuple(grid.field(d) for d in hess), label)
        for label, f, grad, hess in fourier_basis(grid.points, grid.dim, max_mode)
    ]
