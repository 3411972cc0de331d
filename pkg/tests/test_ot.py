"""Entropic OT solver: oracles, invariants, and backend parity."""
import numpy as np
import pytest

from intentot.ot import (CostMatrix, build_cost_matrix, exact_ot_bruteforce,
                         sinkhorn, tail_index, transport_cost)
from intentot.ot._sinkhorn_np import sinkhorn_duals as np_duals
from intentot.ot.core import SinkhornNumericalError


def random_cost(rng, n, m=None, high=10.0):
    return rng.uniform(0.0, high, size=(n, m or n))


class TestCostMatrix:
    def test_hand_example(self):
        # agent [0], [2]; expert [0], [1], [3]; k=1
        a = np.array([[0.0], [2.0]])
        e = np.array([[0.0], [1.0], [3.0]])
        cost = build_cost_matrix(a, e, k=1)
        # C[0,0] = |0-0|^2 + |a1 - e1|^2 = 0 + (2-1)^2 = 1
        assert cost.values[0, 0] == pytest.approx(1.0)
        # C[1,2] = (2-3)^2 + (clamped a1=2 - clamped e2=3)^2 = 1 + 1 = 2
        assert cost.values[1, 2] == pytest.approx(2.0)

    def test_lookahead_clamps_at_ends(self):
        rng = np.random.default_rng(0)
        a, e = rng.normal(size=(4, 3)), rng.normal(size=(5, 3))
        big = build_cost_matrix(a, e, k=100).values
        # with k beyond both lengths every lookahead pair is (last, last)
        tail = np.sum((a[-1] - e[-1]) ** 2)
        base = np.sum((a[:, None, :] - e[None, :, :]) ** 2, axis=-1)
        assert np.allclose(big, base + tail)

    def test_nonnegative_and_shape(self):
        rng = np.random.default_rng(1)
        a, e = rng.normal(size=(6, 2)), rng.normal(size=(9, 2))
        cost = build_cost_matrix(a, e, k=2)
        assert cost.values.shape == (6, 9)
        assert (cost.values >= 0).all()

    def test_k_must_be_positive(self):
        with pytest.raises(ValueError):
            build_cost_matrix(np.zeros((2, 1)), np.zeros((2, 1)), k=0)

    def test_dim_mismatch(self):
        with pytest.raises(ValueError):
            build_cost_matrix(np.zeros((2, 3)), np.zeros((2, 4)), k=1)


class TestTailIndex:
    def test_one_based_argmin_of_first_row(self):
        cost = CostMatrix(values=np.array([[3.0, 1.0, 2.0], [0.0, 0.0, 0.0]]),
                          k=1)
        assert tail_index(cost) == 2

    def test_ties_break_left(self):
        cost = CostMatrix(values=np.array([[5.0, 1.0, 1.0]]), k=1)
        assert tail_index(cost) == 2


class TestSinkhorn:
    def test_two_by_two_identity(self):
        plan = sinkhorn(np.array([[0.0, 10.0], [10.0, 0.0]]), epsilon=0.001)
        assert np.allclose(plan.values, np.eye(2) / 2, atol=1e-9)
        assert plan.marginal_error <= 1e-9

    def test_marginals_uniform(self):
        rng = np.random.default_rng(2)
        plan = sinkhorn(random_cost(rng, 5, 8), epsilon=0.01)
        assert np.allclose(plan.values.sum(axis=1), 1 / 5, atol=1e-7)
        assert np.allclose(plan.values.sum(axis=0), 1 / 8, atol=1e-7)

    def test_entropic_cost_above_exact(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            cost = random_cost(rng, 5)
            exact_value, _ = exact_ot_bruteforce(cost)
            plan = sinkhorn(cost, epsilon=0.001)
            ent = transport_cost(plan, cost)
            assert ent >= exact_value - 1e-9
            assert ent - exact_value < 5 * 0.001

    def test_monotone_in_epsilon(self):
        rng = np.random.default_rng(4)
        cost = random_cost(rng, 6)
        costs = [transport_cost(sinkhorn(cost, eps, max_iters=2000,
                                         tolerance=1e-12), cost)
                 for eps in (0.001, 0.01, 0.1, 1.0)]
        assert all(a <= b + 1e-9 for a, b in zip(costs, costs[1:]))

    def test_transpose_symmetry(self):
        rng = np.random.default_rng(5)
        cost = random_cost(rng, 4, 7)
        p = sinkhorn(cost, 0.01).values
        pt = sinkhorn(cost.T, 0.01).values
        assert np.allclose(p, pt.T, atol=1e-8)

    def test_translation_invariance_of_plan(self):
        rng = np.random.default_rng(6)
        cost = random_cost(rng, 5)
        p1 = sinkhorn(cost, 0.01).values
        p2 = sinkhorn(cost + 7.5, 0.01).values
        assert np.allclose(p1, p2, atol=1e-8)

    def test_log_domain_handles_large_costs(self):
        # cost / epsilon ratios around 1e5 overflow a naive exp kernel
        cost = np.array([[0.0, 100.0], [100.0, 0.0]])
        plan = sinkhorn(cost, epsilon=0.001)
        assert np.isfinite(plan.values).all()
        assert np.allclose(plan.values, np.eye(2) / 2, atol=1e-9)

    def test_early_stop_iterations_reported(self):
        plan = sinkhorn(np.zeros((3, 3)), epsilon=0.1)
        assert 1 <= plan.iterations_run < 200
        assert plan.marginal_error <= 1e-9

    def test_accepts_cost_matrix_wrapper(self):
        cost = CostMatrix(values=np.ones((2, 3)), k=1)
        plan = sinkhorn(cost, 0.1)
        assert plan.values.shape == (2, 3)

    def test_invalid_inputs(self):
        with pytest.raises(ValueError):
            sinkhorn(np.ones((2, 2)), epsilon=0.0)
        with pytest.raises(ValueError):
            sinkhorn(np.ones((2, 2)), epsilon=0.1, max_iters=0)
        with pytest.raises(ValueError):
            sinkhorn(np.ones(3), epsilon=0.1)

    def test_nan_cost_raises_numerical_error(self):
        cost = np.array([[0.0, np.nan], [1.0, 0.0]])
        with pytest.raises(SinkhornNumericalError):
            sinkhorn(cost, epsilon=0.1)


class TestBruteForce:
    def test_diagonal_optimum(self):
        cost = np.array([[0.0, 9.0], [9.0, 0.0]])
        value, plan = exact_ot_bruteforce(cost)
        assert value == pytest.approx(0.0)
        assert np.allclose(plan, np.eye(2) / 2)

    def test_matches_scipy_assignment(self):
        from scipy.optimize import linear_sum_assignment

        rng = np.random.default_rng(7)
        for _ in range(30):
            cost = random_cost(rng, 6)
            value, _ = exact_ot_bruteforce(cost)
            rows, cols = linear_sum_assignment(cost)
            assert value == pytest.approx(cost[rows, cols].sum() / 6)

    def test_tie_breaks_lexicographic(self):
        value, plan = exact_ot_bruteforce(np.zeros((3, 3)))
        assert value == 0.0
        assert np.allclose(plan, np.eye(3) / 3)  # identity permutation

    def test_rejects_non_square_and_large(self):
        with pytest.raises(ValueError):
            exact_ot_bruteforce(np.zeros((2, 3)))
        with pytest.raises(ValueError):
            exact_ot_bruteforce(np.zeros((9, 9)))


class TestBackends:
    def test_numpy_backend_matches_active_backend(self):
        rng = np.random.default_rng(8)
        cost = np.ascontiguousarray(random_cost(rng, 6, 9))
        log_a = np.full(6, -np.log(6))
        log_b = np.full(9, -np.log(9))
        from intentot.ot.backend import sinkhorn_duals as active_duals

        f1, g1, it1, err1 = active_duals(cost, log_a, log_b, 0.01, 200, 1e-9)
        f2, g2, it2, err2 = np_duals(cost, log_a, log_b, 0.01, 200, 1e-9)
        assert np.allclose(np.asarray(f1), f2, atol=1e-10)
        assert np.allclose(np.asarray(g1), g2, atol=1e-10)
        assert it1 == it2

    def test_transport_cost_shape_check(self):
        plan = sinkhorn(np.ones((2, 2)), 0.1)
        with pytest.raises(ValueError):
            transport_cost(plan, np.ones((3, 3)))
