from __future__ import annotations

import numpy as np
import pytest
import scipy.sparse as sp

from ergoselect.adjoint import (
    AdjointSolver,
    adjoint_for,
    assemble_jacobian,
    duality_certificate,
    mass_bounds,
    random_smooth_fields,
    solve_adjoint,
)
from ergoselect.catalog import catalog, cos4pi_problem, trivial_problem
from ergoselect.errors import MonotonicityViolation
from ergoselect.solver import solve


@pytest.fixture(scope="module")
def converged():
    out = {}
    for key, prob in catalog(256).items():
        out[key] = (prob, solve(prob, 0.02, 0.01, tol=1e-10))
    return out


class TestAssembly:
    def test_trivial_is_scaled_identity(self):
        prob = trivial_problem(32)
        J = assemble_jacobian(prob, prob.grid.zeros(), 0.1)
        assert abs(J - 0.1 * sp.identity(32)).max() == 0

    def test_row_sums(self, converged):
        for prob, rep in converged.values():
            J = assemble_jacobian(prob, rep.u, rep.lam, rep.eta)
            s = prob.discount.weight(prob.grid.points)
            expected = rep.lam * prob.discount.df_of(s, rep.lam * rep.u.values)
            np.testing.assert_allclose(J @ np.ones(prob.grid.size), np.ravel(expected * np.ones(256)),
                                       atol=1e-12 * abs(J).max())

    def test_column_differences(self):
        from ergoselect.scheme import Discretization

        prob = cos4pi_problem(64, "degenerate", "exp_spatial")
        rep = solve(prob, 0.05, 0.02, tol=1e-10)
        J = assemble_jacobian(prob, rep.u, 0.05, 0.02).toarray()
        disc = Discretization(prob, 0.02)
        u = rep.u.values
        eps = 1e-7
        # skip columns touching a difference at the upwind switch, where F has a corner
        dp = np.diff(np.append(u, u[0])) * 64
        near = np.abs(dp) < 1e3 * eps * 64
        corner = near | np.roll(near, 1) | np.roll(near, -1) | np.roll(near, 2)
        checked = 0
        for j in np.flatnonzero(~corner):
            checked += 1
            e = np.zeros(64)
            e[j] = eps
            col = (disc.residual(u + e, 0.05) - disc.residual(u - e, 0.05)) / (2 * eps)
            assert np.max(np.abs(col - J[:, j])) <= 1e-6 * np.max(np.abs(J[:, j]))
        assert checked >= 48

    def test_rejects_non_monotone(self, monkeypatch):
        from ergoselect import adjoint as adj

        prob = trivial_problem(16)
        bad = sp.csr_matrix(np.eye(16) + 0.1 * np.eye(16, k=1))
        monkeypatch.setattr(adj.Discretization, "jacobian", lambda self, u, lam: bad)
        with pytest.raises(MonotonicityViolation):
            adj.assemble_jacobian(prob, prob.grid.zeros(), 0.1)


class TestSolveAdjoint:
    def test_dirac_column(self):
        prob = trivial_problem(32)
        J = assemble_jacobian(prob, prob.grid.zeros(), 0.1)
        adj = solve_adjoint(J, 5, 0.1, prob.grid)
        expected = np.zeros(32)
        expected[5] = 32.0
        np.testing.assert_allclose(adj.sigma.values, expected, atol=1e-12)
        assert adj.weighted_mass == pytest.approx(1.0, abs=1e-15)

    def test_catalog_certificates(self, converged):
        for prob, rep in converged.values():
            for x0 in (0, 64, 100):
                adj, J = adjoint_for(prob, rep, x0)
                assert adj.sigma.min() >= -1e-11
                assert abs(adj.weighted_mass - 1) <= 1e-9
                assert adj.mass_within_bounds()
                assert adj.linear_residual <= 1e-10

    def test_reference_configuration(self):
        prob = cos4pi_problem(512)
        rep = solve(prob, 0.02, 0.01, tol=1e-10)
        adj, _ = adjoint_for(prob, rep, 137)
        m0, m1 = mass_bounds(prob, rep.lambda_u_sup)
        assert adj.sigma.min() >= -1e-11
        assert m0 - 1e-9 <= adj.mass <= m1 + 1e-9

    def test_linearity(self, converged):
        prob, rep = converged[("constant", "exp_spatial")]
        J = assemble_jacobian(prob, rep.u, rep.lam, rep.eta)
        solver = AdjointSolver(J, rep.lam, prob.grid, rep.eta)
        a, b = solver.solve(10).sigma.values, solver.solve(200).sigma.values
        both = solver.solve_rhs(solver.dirac(10) + solver.dirac(200))
        np.testing.assert_allclose(a + b, both, atol=1e-10 * np.abs(both).max())

    def test_shared_factorization_matches_fresh_solve(self, converged):
        prob, rep = converged[("degenerate", "linear")]
        J = assemble_jacobian(prob, rep.u, rep.lam, rep.eta)
        solver = AdjointSolver(J, rep.lam, prob.grid, rep.eta)
        np.testing.assert_allclose(solver.solve(77).sigma.values,
                                   solve_adjoint(J, 77, rep.lam, prob.grid, rep.eta).sigma.values)


class TestDuality:
    def test_zero_and_one(self, converged):
        prob, rep = converged[("none", "linear")]
        adj, J = adjoint_for(prob, rep, 3)
        cert = duality_certificate(adj, J, [prob.grid.zeros()])
        assert cert.max_defect == 0
        cert = duality_certificate(adj, J, [prob.grid.constant(1.0)])
        assert cert.max_defect == pytest.approx(rep.lam * abs(adj.weighted_mass - 1), abs=1e-15)

    def test_catalog(self, converged):
        for prob, rep in converged.values():
            adj, J = adjoint_for(prob, rep, 50)
            cert = duality_certificate(adj, J)
            assert cert.n_trials >= 10
            assert cert.passed, cert.to_dict()

    def test_random_fields_seeded(self):
        grid = cos4pi_problem(64).grid
        a = random_smooth_fields(grid, 5, seed=3)
        b = random_smooth_fields(grid, 5, seed=3)
        for f, g in zip(a, b):
            np.testing.assert_array_equal(f.values, g.values)
            assert f.sup_norm() == pytest.approx(1.0)


class TestMassBounds:
    def test_linear(self):
        assert mass_bounds(cos4pi_problem(64), 3.0) == (1.0, 1.0)

    def test_exp(self):
        m0, m1 = mass_bounds(cos4pi_problem(64, discount="exp_spatial"), 0.5)
        # sigma ranges over [0.5, 1.5]
        assert m0 == pytest.approx(1 / (1.5 * np.exp(0.5)), rel=1e-6)
        assert m1 == pytest.approx(1 / (0.5 * np.exp(-0.5)), rel=1e-6)
