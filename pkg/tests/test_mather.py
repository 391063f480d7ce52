from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ergoselect.catalog import COS4PI, cos4pi_problem, trivial_problem
from ergoselect.errors import UnnormalizableError
from ergoselect.grid import PeriodicGrid
from ergoselect.mather import (
    DiscreteMeasure,
    action_defect,
    build_measure,
    constraint_functional,
    holonomy_defect,
    measure_family,
    pushforward,
    scheme_gradient,
)
from ergoselect.models import (
    CosinePotential,
    ExpSpatialDiscount,
    LinearDiscount,
    MechanicalHamiltonian,
    constant_potential,
)
from ergoselect.oracle import oracle_solution_family
from ergoselect.selection import choice_potential

C_MEAS = 5.0


def atoms(x, p, w=None):
    x = np.atleast_2d(np.asarray(x, dtype=float)).reshape(-1, 1)
    p = np.asarray(p, dtype=float).reshape(-1, 1)
    w = np.full(len(x), 1.0 / len(x)) if w is None else np.asarray(w, dtype=float)
    return DiscreteMeasure(x, p, p.copy(), w)


def random_measure(rng, n=20):
    w = rng.uniform(0, 1, n)
    return atoms(rng.uniform(0, 1, n), rng.normal(scale=2, size=n), w / w.sum())


class TestBuildMeasure:
    def test_dirac(self):
        prob = trivial_problem(32)
        sigma = np.zeros(32)
        sigma[7] = 32.0
        m = build_measure(prob.grid.zeros(), prob.grid.field(sigma), prob)
        assert m.support().tolist() == [7]
        assert m.w[7] == 1.0
        assert m.p[7, 0] == 0.0 and m.v[7, 0] == 0.0
        assert m.x[7, 0] == pytest.approx(7 / 32)

    def test_uniform(self):
        prob = trivial_problem(32)
        m = build_measure(prob.grid.zeros(), prob.grid.constant(1.0), prob)
        np.testing.assert_allclose(m.w, 1 / 32)
        assert np.all(m.p == 0)
        assert m.w.sum() == pytest.approx(1.0, abs=1e-12)

    def test_unnormalizable(self):
        prob = trivial_problem(16)
        with pytest.raises(UnnormalizableError):
            build_measure(prob.grid.zeros(), prob.grid.zeros(), prob)

    def test_scheme_gradient_branches(self):
        grid = PeriodicGrid(1, 8)
        # tent with its peak at node 4: D- > 0 left of it, D+ < 0 right of it
        u = grid.field(-np.abs(np.arange(8.0) - 4) / 8)
        p = scheme_gradient(u)[:, 0]
        assert p[2] == pytest.approx(1.0)
        assert p[6] == pytest.approx(-1.0)
        # at the peak both branches are active and the average is used
        assert p[4] == pytest.approx(0.0)


class TestPushforward:
    def test_round_trip(self):
        rng = np.random.default_rng(0)
        m = random_measure(rng)
        back = pushforward(pushforward(m, "to-lagrangian", MechanicalHamiltonian(COS4PI)),
                           "to-hamiltonian", MechanicalHamiltonian(COS4PI))
        np.testing.assert_allclose(back.p, m.p, atol=1e-14)
        np.testing.assert_array_equal(back.w, m.w)
        assert back.representation == "hamiltonian"

    def test_single_atom(self):
        lag = pushforward(atoms([0.3], [2.0]), "to-lagrangian", MechanicalHamiltonian(COS4PI))
        assert lag.v[0, 0] == 2.0 and lag.representation == "lagrangian"

    def test_change_of_variables(self):
        rng = np.random.default_rng(1)
        H = MechanicalHamiltonian(COS4PI)
        for _ in range(10):
            m = random_measure(rng)
            lag = pushforward(m, "to-lagrangian", H)
            lhs = lag.integrate(lambda x, p, v: np.sum(v * v, axis=1))
            rhs = m.integrate(lambda x, p, v: np.sum(H.dp(x, p) ** 2, axis=1))
            assert lhs == pytest.approx(rhs, abs=1e-12)

    def test_bad_direction(self):
        with pytest.raises(ValueError):
            pushforward(atoms([0.1], [0.0]), "sideways", MechanicalHamiltonian(COS4PI))


class TestDefects:
    def test_action_trivial(self):
        prob = trivial_problem(16)
        assert action_defect(atoms([0.4], [0.0]), prob, 0.0) == 0.0

    def test_action_equilibrium(self):
        prob = cos4pi_problem(64)
        assert action_defect(atoms([0.0], [0.0]), prob, 1.0) == pytest.approx(0.0, abs=1e-15)
        assert action_defect(atoms([0.5], [0.0]), prob, 1.0) == pytest.approx(0.0, abs=1e-14)

    def test_holonomy_rest_atom(self):
        prob = cos4pi_problem(64)
        for x in (0.0, 0.123, 0.77):
            assert holonomy_defect(atoms([x], [0.0]), prob) == 0.0

    @pytest.mark.parametrize("c", [-1.5, 0.3, 2.0])
    def test_holonomy_uniform_constant_velocity(self, c):
        prob = cos4pi_problem(64)
        x = prob.grid.points.reshape(-1)
        assert holonomy_defect(atoms(x, np.full(64, c)), prob, max_mode=5) <= 1e-12

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.floats(0, 0.999), min_size=1, max_size=10), st.floats(-3, 3))
    def test_normalization_preserved(self, xs, p):
        m = atoms(xs, np.full(len(xs), p))
        lag = pushforward(m, "to-lagrangian", MechanicalHamiltonian(COS4PI))
        assert lag.w.sum() == pytest.approx(1.0, abs=1e-12)


class TestConstraintFunctional:
    def test_boundary(self):
        prob = trivial_problem(16)
        assert constraint_functional(atoms([0.2], [0.0]), prob.grid.zeros(), constant_potential(0.0),
                                     LinearDiscount()) == 0.0

    def test_linear_constants(self):
        rng = np.random.default_rng(2)
        grid = PeriodicGrid(1, 32)
        for _ in range(5):
            m = random_measure(rng)
            val = constraint_functional(m, grid.constant(-1.0), constant_potential(1.0), LinearDiscount())
            assert val == pytest.approx(0.0, abs=1e-14)

    @pytest.mark.parametrize("discount", ["linear", "exp_spatial"])
    def test_choice_potential_cancels(self, discount):
        prob = cos4pi_problem(256, discount=discount)
        u_hat = oracle_solution_family(COS4PI, prob.grid).representatives[3]
        V = choice_potential(prob, u_hat)
        rng = np.random.default_rng(3)
        for _ in range(5):
            idx = rng.choice(256, 12, replace=False)
            w = rng.uniform(size=12)
            m = atoms(prob.grid.points.reshape(-1)[idx], np.zeros(12), w / w.sum())
            assert abs(constraint_functional(m, u_hat, V, prob.discount)) <= 1e-12

    def test_spatial_weight(self):
        grid = PeriodicGrid(1, 16)
        disc = ExpSpatialDiscount(CosinePotential(0.5, (1,), offset=1.0))
        m = atoms([0.0], [0.0])
        assert constraint_functional(m, grid.constant(2.0), constant_potential(0.0), disc) == pytest.approx(3.0)


class TestMeasureFamily:
    def test_trivial(self):
        fam = measure_family(trivial_problem(64), [0.1, 0.05], x0_list=[0.0, 0.5])
        for m in fam.measures:
            assert np.all(m.p == 0)
            assert m.w.sum() == pytest.approx(1.0, abs=1e-12)

    def test_rejects_increasing(self):
        with pytest.raises(ValueError):
            measure_family(trivial_problem(16), [0.01, 0.1])

    @pytest.mark.parametrize("diff", ["none", "degenerate"])
    def test_first_order_identities(self, diff):
        prob = cos4pi_problem(512, diff)
        lams = [1e-2, 4e-3, 2e-3]
        fam = measure_family(prob, lams, x0_list=[0.0, 0.25, 0.5])
        tol = C_MEAS * (prob.grid.h + lams[-1] + lams[-1] ** 2)
        assert not fam.failures
        for m in fam.measures:
            assert action_defect(m, prob) <= tol
            assert holonomy_defect(m, prob) <= tol
            assert m.mass_near([0.0, 0.5], 0.05) >= 0.9
        for key in fam.tv_distances:
            assert fam.tv_decreasing_tail(key)

    def test_workers_agree(self):
        prob = cos4pi_problem(256)
        a = measure_family(prob, [0.02, 0.01], x0_list=[0.0, 0.3, 0.6], workers=1)
        b = measure_family(prob, [0.02, 0.01], x0_list=[0.0, 0.3, 0.6], workers=3)
        for ma, mb in zip(a.measures, b.measures):
            np.testing.assert_array_equal(ma.w, mb.w)
