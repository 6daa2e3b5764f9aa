import numpy as np
import pytest

from vpopt.config import INITIAL_GUESSES
from vpopt.control import ControlBasis
from vpopt.optimizer import (
    DEConfig, GDConfig, HybridConfig, NonFiniteObjective, RunRecord, RunRow, de_run, differential_evolution,
    fd_gradient, gd_run, gradient_descent, hybrid, hybrid_run,
)


class Quadratic:
    """J(a) = sum w (a - c)^2 with the solver-problem interface."""

    def __init__(self, centre, weights=None):
        self.c = np.asarray(centre, dtype=float)
        self.w = np.ones_like(self.c) if weights is None else np.asarray(weights, dtype=float)
        self.calls = {"forward": 0, "gradient": 0, "value": 0}

    @property
    def dim(self):
        return self.c.size

    def value(self, a):
        self.calls["value"] += 1
        return float(np.sum(self.w * (np.asarray(a) - self.c) ** 2))

    def forward(self, a):
        self.calls["forward"] += 1
        a = np.asarray(a, dtype=float)
        return float(np.sum(self.w * (a - self.c) ** 2)), a

    def gradient(self, state):
        self.calls["gradient"] += 1
        return 2 * self.w * (state - self.c)


class Rastrigin(Quadratic):
    def value(self, a):
        a = np.asarray(a) - self.c
        return float(np.sum(a**2 - 0.5 * np.cos(6 * a) + 0.5))

    def forward(self, a):
        return self.value(a), np.asarray(a, dtype=float)

    def gradient(self, state):
        a = state - self.c
        return 2 * a + 3 * np.sin(6 * a)


class WrongGradient(Quadratic):
    def gradient(self, state):
        return -super().gradient(state)


class NaNProblem(Quadratic):
    def forward(self, a):
        return float("nan"), np.asarray(a)


class TestGD:
    def test_config_validation(self):
        for kw in (dict(h0=0), dict(c1=1.0), dict(backtrack=1.0), dict(max_iters=-1)):
            with pytest.raises(ValueError):
                GDConfig(**kw)

    def test_converges_on_quadratic(self):
        p = Quadratic([0.3, -0.2], [1.0, 4.0])
        rec = gradient_descent(p, [2.0, 1.0], GDConfig(max_iters=60))
        J = [r.J for r in rec.rows]
        assert all(b < a for a, b in zip(J, J[1:]))  # Armijo: strict decrease
        assert J[-1] < 1e-8
        np.testing.assert_allclose(rec.best_coeffs, [0.3, -0.2], atol=1e-4)
        costs = [r.cost for r in rec.rows]
        assert all(b > a for a, b in zip(costs, costs[1:]))
        assert rec.total_cost == p.calls["forward"] + p.calls["gradient"]

    def test_start_at_minimum(self):
        p = Quadratic([1.0, 2.0])
        rec = gradient_descent(p, [1.0, 2.0], GDConfig(tol=-1.0))
        assert rec.status == "gtol"
        assert len(rec.rows) == 1 and rec.rows[0].J == 0.0

    def test_tolerance_met_initially(self):
        rec = gradient_descent(Quadratic([0.0]), [1e-3], GDConfig(tol=1e-3))
        assert rec.status == "tol"
        assert [r.index for r in rec.rows] == [0]

    def test_line_search_failure_flagged(self):
        rec = gradient_descent(WrongGradient([0.0]), [1.0], GDConfig(max_backtracks=5))
        assert rec.status == "line_search_failed"
        assert len(rec.rows) == 1

    def test_non_finite_aborts(self):
        with pytest.raises(NonFiniteObjective):
            gradient_descent(NaNProblem([0.0]), [1.0])


class TestFD:
    def test_matches_analytic(self):
        p = Quadratic([0.5, -1.0], [2.0, 3.0])
        a = np.array([0.1, 0.2])
        np.testing.assert_allclose(fd_gradient(p, a, 1e-4), p.gradient(a), rtol=1e-8)
        np.testing.assert_allclose(fd_gradient(p, p.c, 1e-3), 0.0, atol=1e-12)

    def test_second_order(self):
        p = Rastrigin([0.0])
        a = np.array([0.37])
        exact = p.gradient(a)[0]
        e1 = abs(fd_gradient(p, a, 1e-2)[0] - exact)
        e2 = abs(fd_gradient(p, a, 5e-3)[0] - exact)
        assert e1 / e2 == pytest.approx(4.0, rel=0.05)

    @pytest.mark.parametrize("eps", [0.0, -1e-3])
    def test_rejects_bad_eps(self, eps):
        with pytest.raises(ValueError):
            fd_gradient(Quadratic([0.0]), [0.0], eps)


class TestDE:
    def test_config_validation(self):
        for kw in (dict(popsize=3), dict(bounds=((1, 0),)), dict(bounds=((0, np.inf),)), dict(crossover=1.5),
                   dict(mutation=(1.0, 0.5))):
            with pytest.raises(ValueError):
                DEConfig(**kw)
        with pytest.raises(ValueError):
            DEConfig(bounds=((0, 1), (0, 1))).bounds_for(3)

    def test_one_dimensional_surrogate(self):
        p = Quadratic([0.123456])
        rec = differential_evolution(p, DEConfig(bounds=((-2, 2),), popsize=20, max_generations=50, seed=3))
        assert abs(rec.best_coeffs[0] - 0.123456) < 1e-6
        J = [r.J for r in rec.rows]
        assert all(b <= a for a, b in zip(J, J[1:]))
        assert [r.cost for r in rec.rows] == [20 * (g + 1) for g in range(len(rec.rows))]
        assert all(r.grad_norm is None for r in rec.rows)

    def test_bounds_respected(self):
        p = Quadratic([5.0, 5.0])  # optimum outside the box
        rec = differential_evolution(p, DEConfig(bounds=((-1, 1), (0, 2)), popsize=10, max_generations=30))
        a = rec.best_coeffs
        assert -1 <= a[0] <= 1 and 0 <= a[1] <= 2
        np.testing.assert_allclose(a, [1, 2], atol=1e-2)

    def test_seed_determinism_and_workers(self):
        cfg = DEConfig(bounds=((-3, 3),), popsize=8, max_generations=5, seed=11)
        a = differential_evolution(Rastrigin([0.4, -0.2]), cfg)
        b = differential_evolution(Rastrigin([0.4, -0.2]), cfg)
        c = differential_evolution(Rastrigin([0.4, -0.2]), DEConfig(**{**cfg.__dict__, "workers": 2}))
        for other in (b, c):
            assert [r.J for r in a.rows] == [r.J for r in other.rows]
            assert all(np.array_equal(x.coeffs, y.coeffs) for x, y in zip(a.rows, other.rows))

    def test_target_stops_early(self):
        rec = differential_evolution(Quadratic([0.0]), DEConfig(bounds=((-1, 1),), popsize=10, target_J=1e-2))
        assert rec.status == "target"
        assert rec.best_J <= 1e-2
        assert rec.cost_to_reach(1e-2) == rec.total_cost


class TestHybrid:
    def test_cost_accounting(self):
        cfg = HybridConfig(DEConfig(bounds=((-3, 3),), popsize=10, max_generations=4), n_p=2, it=3)
        assert cfg.cost_per_generation == 22
        p = Rastrigin([0.5, 0.5])
        rec = hybrid(p, cfg)
        costs = [r.cost for r in rec.rows]
        assert costs[0] == 10
        assert np.all(np.diff(costs) == 22)
        J = [r.J for r in rec.rows]
        assert all(b <= a for a, b in zip(J, J[1:]))

    def test_solver_calls_match_cost_units(self):
        p = Quadratic([0.2, 0.1, -0.3])
        cfg = HybridConfig(DEConfig(bounds=((-1, 1),), popsize=6, max_generations=3), n_p=2, it=2)
        rec = hybrid(p, cfg)
        assert rec.total_cost == p.calls["value"] + p.calls["forward"] + p.calls["gradient"]

    def test_zero_polish_is_plain_de(self):
        de = DEConfig(bounds=((-2, 2),), popsize=8, max_generations=6, seed=5)
        a = differential_evolution(Rastrigin([0.1, 0.3]), de)
        b = hybrid(Rastrigin([0.1, 0.3]), HybridConfig(de, n_p=0))
        assert [(r.J, r.cost) for r in a.rows] == [(r.J, r.cost) for r in b.rows]

    def test_polish_helps_on_smooth_problem(self):
        de = DEConfig(bounds=((-2, 2),), popsize=10, max_generations=10, seed=2)
        plain = differential_evolution(Quadratic([0.3] * 5), de)
        polished = hybrid(Quadratic([0.3] * 5), HybridConfig(de, n_p=1, it=3))
        assert polished.best_J < plain.best_J

    def test_config_validation(self):
        de = DEConfig(popsize=5)
        with pytest.raises(ValueError):
            HybridConfig(de, n_p=6)
        with pytest.raises(ValueError):
            HybridConfig(de, n_p=1, it=0)


def test_run_record_helpers():
    rows = [RunRow(0, 3.0, None, 10, np.zeros(1)), RunRow(1, 1.0, None, 20, np.ones(1)),
            RunRow(2, 2.0, None, 30, np.full(1, 2.0))]
    rec = RunRecord("de", rows)
    assert rec.best_J == 1.0 and rec.best_coeffs[0] == 1.0
    assert rec.total_cost == 30
    assert rec.cost_to_reach(1.5) == 20 and rec.cost_to_reach(0.5) is None


class TestSolverProblems:
    def test_focusing_gd_from_initial_sets(self, focusing):
        basis = ControlBasis(tuple(range(1, 11)))
        for name, a0 in INITIAL_GUESSES["focusing"].items():
            rec = gd_run(np.array(a0), basis, focusing, GDConfig(max_iters=10))
            J = [r.J for r in rec.rows]
            assert len(rec.rows) - 1 <= 10
            assert all(b < a for a, b in zip(J, J[1:])), name
            assert J[-1] <= 0.25 * J[0], name

    def test_two_stream_set_a_reaches_reference_level(self, two_stream):
        basis = ControlBasis((1, 2, 3, 4, 5), "cosine")
        rec = gd_run(np.array(INITIAL_GUESSES["two_stream"]["A"]), basis, two_stream,
                     GDConfig(max_iters=5, h0=0.01))
        assert 1.2e-3 <= rec.best_J <= 4.8e-3

    def test_hybrid_cost_column_on_focusing(self, focusing):
        basis = ControlBasis(tuple(range(1, 11)))
        cfg = HybridConfig(DEConfig(bounds=((-5, 5),), popsize=50, max_generations=2, seed=0), n_p=1, it=3)
        rec = hybrid_run(basis, focusing, cfg)
        assert np.all(np.diff([r.cost for r in rec.rows]) == 56)

    def test_de_run_reproducible(self, focusing):
        basis = ControlBasis((1, 2))
        cfg = DEConfig(bounds=((-5, 5),), popsize=6, max_generations=2, seed=9)
        a, b = de_run(basis, focusing, cfg), de_run(basis, focusing, cfg)
        assert [r.J for r in a.rows] == [r.J for r in b.rows]
