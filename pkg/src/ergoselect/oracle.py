"""Closed-form first-order ergodic solutions in one dimension.

For ``H = p^2/2 + W`` with ``A = 0`` the ergodic constant is ``max W`` and
every solution has the form ``min_j (a_j + d(z_j, x))`` where ``z_j`` runs
over the maximizers of ``W`` and ``d`` is the distance on the circle with
metric ``g = sqrt(2 (c - W))``. The offsets must satisfy
``a_i - a_j <= d(z_j, z_i)`` so that each ``a_j`` is attained at ``z_j``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import FamilyDegenerateError
from .grid import GridField, PeriodicGrid

REFINE = 64


@dataclass
class SolutionFamily1D:
    c_H: float
    aubry: np.ndarray
    aubry_distance: np.ndarray
    representatives: list[GridField]
    offsets: list[np.ndarray]
    kink_masks: list[np.ndarray] = field(repr=False, default_factory=list)
    grid: PeriodicGrid | None = None
    _distances: np.ndarray | None = field(repr=False, default=None)

    def member(self, offsets) -> GridField:
        """``min_j (a_j + d(z_j, .))`` for admissible offsets ``a``."""
        a = np.asarray(offsets, dtype=float)
        D = self.aubry_distance
        if np.any(a[:, None] - a[None, :] > D.T + 1e-12):
            raise ValueError("offsets violate the Aubry distance constraints")
        return GridField(self.grid, np.min(a[:, None] + self._distances, axis=0))

    @property
    def distances(self) -> np.ndarray:
        """``d(z_j, x_i)`` on the grid, one row per Aubry point."""
        return self._distances


def _metric_density(W, c: float, x: np.ndarray) -> np.ndarray:
    return np.sqrt(np.maximum(2.0 * (c - np.asarray(W(x), dtype=float)), 0.0))


def _circle_distance_table(W, c: float, n: int, z: np.ndarray) -> tuple[np.ndarray, float]:
    """``d(z_j, x_i)`` for grid nodes ``x_i`` by trapezoid integration of the metric."""
    m = n * REFINE
    xs = np.arange(m + 1) / m
    g = _metric_density(W, c, xs)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (g[1:] + g[:-1]) / m)])
    total = cum[-1]

    def G(x):
        return np.interp(np.mod(x, 1.0), xs, cum)

    nodes = np.arange(n) / n
    table = np.empty((len(z), n))
    for j, zj in enumerate(z):
        fwd = np.mod(G(nodes) - G(zj), total)
        table[j] = np.minimum(fwd, total - fwd)
    return table, total


def _aubry_points(W, c: float, n: int) -> np.ndarray:
    """Maximizers of ``W``, one representative per cluster of near-maximal samples."""
    m = n * REFINE
    xs = np.arange(m) / m
    vals = np.asarray(W(xs), dtype=float)
    hits = np.flatnonzero(vals >= c - 1e-12 * max(1.0, abs(c)))
    clusters, current = [], [hits[0]]
    for i in hits[1:]:
        if i - current[-1] <= 1:
            current.append(i)
        else:
            clusters.append(current)
            current = [i]
    clusters.append(current)
    if len(clusters) > 1 and clusters[0][0] == 0 and clusters[-1][-1] == m - 1:
        clusters[0] = [i - m for i in clusters[-1]] + clusters[0]
        clusters.pop()
    return np.array([np.mod(np.mean(cl), m) / m for cl in clusters])


def kink_mask(u: GridField, jump: float) -> np.ndarray:
    """Nodes next to a concave corner: ``D+u - D-u < -jump``."""
    v = u.values
    h = u.grid.h
    d2 = (np.roll(v, -1) - 2 * v + np.roll(v, 1)) / h
    corner = d2 < -jump
    return corner | np.roll(corner, 1) | np.roll(corner, -1)


def oracle_solution_family(W, grid: PeriodicGrid, count: int = 8) -> SolutionFamily1D:
    """Sampled representatives of the ergodic solution family of ``p^2/2 + W``.

    With two or more Aubry points the first offset is pinned at zero and the
    second sweeps its admissible interval; others stay at zero. Constant
    ``W`` has only constant solutions and raises ``FamilyDegenerateError``
    after the caller may fall back to the zero representative.
    """
    if grid.dim != 1:
        raise ValueError("the oracle family is one-dimensional")
    n = grid.n
    xs = np.arange(n * REFINE) / (n * REFINE)
    c = float(np.max(W(xs)))
    if float(np.min(W(xs))) >= c - 1e-14:
        raise FamilyDegenerateError("W is constant: the family is the constants")
    z = _aubry_points(W, c, n)
    table, _ = _circle_distance_table(W, c, n, z)
    D = np.array([[np.interp(zj, np.arange(n + 1) / n, np.append(table[i], table[i][0]))
                   for zj in z] for i in range(len(z))])
    np.fill_diagonal(D, 0.0)
    fam = SolutionFamily1D(c, z, D, [], [], [], grid, table)
    if len(z) == 1:
        offs = [np.zeros(1)]
    else:
        span = min(D[0, 1], D[1, 0])
        offs = []
        for t in np.linspace(-span, span, count):
            a = np.zeros(len(z))
            a[1] = t
            offs.append(a)
    g_lip = float(np.max(np.abs(np.diff(_metric_density(W, c, xs))) * len(xs)))
    for a in offs:
        u = fam.member(a)
        fam.representatives.append(u)
        fam.offsets.append(a)
        fam.kink_masks.append(kink_mask(u, 8 * g_lip * grid.h))
    return fam


def trivial_family(grid: PeriodicGrid) -> SolutionFamily1D:
    """Family of a constant ``W``: the zero representative (shifts added by callers)."""
    zero = grid.zeros()
    return SolutionFamily1D(0.0, np.zeros(0), np.zeros((0, 0)), [zero], [np.zeros(0)],
                            [np.zeros(grid.shape, dtype=bool)], grid, np.zeros((0, grid.n)))
