"""Built-in test problems around the mechanical model ``p^2/2 + cos 4 pi x``."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import PeriodicGrid
from .models import (
    CosinePotential,
    Diffusion,
    ExpSpatialDiscount,
    LinearDiscount,
    MechanicalHamiltonian,
)
from .scheme import ProblemSpec

COS4PI = CosinePotential(1.0, (2,))
EXP_SIGMA = CosinePotential(0.5, (1,), offset=1.0)

DIFFUSIONS = ("none", "constant", "degenerate")
DISCOUNTS = ("linear", "exp_spatial")


def hopf_cole_constant(W, theta: float, n: int = 2048) -> float:
    """Ergodic constant for ``p^2/2 + W = theta u'' + c`` in 1D.

    ``u = -2 theta log psi`` turns the equation into the eigenproblem
    ``2 theta^2 psi'' + W psi = c psi`` whose principal eigenvalue is ``c``.
    """
    if theta == 0:
        xs = np.linspace(0.0, 1.0, 64 * n, endpoint=False)
        return float(np.max(W(xs)))
    h = 1.0 / n
    x = np.arange(n) * h
    k = 2 * theta**2 / h**2
    main = -2 * k + np.asarray(W(x), dtype=float)
    A = sp.diags([main, k * np.ones(n - 1), k * np.ones(n - 1)], [0, 1, -1], format="lil")
    A[0, n - 1] = k
    A[n - 1, 0] = k
    val = spla.eigsh(A.tocsc(), k=1, which="LA", return_eigenvectors=False)
    return float(val[0])


def cos4pi_problem(n: int = 512, diffusion: str = "none", discount: str = "linear",
                   potential=None, lambda_max: float = 0.5) -> ProblemSpec:
    """One member of the 1D catalog; ``c_H`` is filled from its oracle.

    For ``degenerate`` diffusion ``a = sin^2(pi x)`` vanishes at the maximizer
    ``x = 0`` of ``W`` so the constant stays ``max W = 1``.
    """
    grid = PeriodicGrid(1, n)
    H = MechanicalHamiltonian(COS4PI)
    if diffusion == "none":
        diff, c_H = Diffusion.zero(1), 1.0
    elif diffusion == "constant":
        diff, c_H = Diffusion.constant(0.1), hopf_cole_constant(COS4PI, 0.1)
    elif diffusion == "degenerate":
        diff, c_H = Diffusion.degenerate(1.0, 1), 1.0
    else:
        raise ValueError(f"unknown diffusion {diffusion!r}")
    if discount == "linear":
        disc = LinearDiscount()
    elif discount == "exp_spatial":
        disc = ExpSpatialDiscount(EXP_SIGMA)
    else:
        raise ValueError(f"unknown discount {discount!r}")
    return ProblemSpec(H, grid, diff, disc, potential, c_H, lambda_max)


def catalog(n: int = 512) -> dict[tuple[str, str], ProblemSpec]:
    """The six combinations of diffusion and discount."""
    return {(d, f): cos4pi_problem(n, d, f) for d in DIFFUSIONS for f in DISCOUNTS}


def trivial_problem(n: int = 64, dim: int = 1, **kw) -> ProblemSpec:
    """``W = 0``: every solve with zero potential returns zero."""
    grid = PeriodicGrid(dim, n)
    H = MechanicalHamiltonian(CosinePotential(0.0, (1,) * dim))
    return ProblemSpec(H, grid, **kw)
