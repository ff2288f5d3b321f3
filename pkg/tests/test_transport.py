"""Transport-matching behavior against enumeration and algebraic oracles."""

import itertools
import math

import numpy as np
import pytest

from vmftopics import transport as tr
from vmftopics.corpus import KeywordGroups, Vocabulary
from vmftopics.verification import generate_matched_instance


def _vocab(words):
    n = len(words)
    return Vocabulary(
        tokens=list(words),
        index={w: i for i, w in enumerate(words)},
        doc_freq=np.ones(n, dtype=np.int64),
        total_count=np.ones(n, dtype=np.int64),
    )


class TestCostMatrix:
    def test_single_word_half_probability(self):
        vocab = _vocab(["a", "b"])
        e = np.array([[0.5, 0.5], [0.9, 0.1]])
        groups = KeywordGroups(groups=[["a"]], names=["g0"])
        c = tr.cost_matrix(e, groups, vocab)
        assert c.values[0, 0] == pytest.approx(math.log(2.0), abs=1e-12)

    def test_duplicate_keyword_counts_twice(self):
        vocab = _vocab(["a", "b"])
        e = np.array([[0.5, 0.25]])
        dup = tr.cost_matrix(e, KeywordGroups(groups=[["a", "a", "b"]]), vocab)
        expected = -(2 * math.log(0.5) + math.log(0.25)) / 3.0
        assert dup.values[0, 0] == pytest.approx(expected, abs=1e-12)

    def test_uniform_distribution_costs_log_v(self):
        words = [f"w{i}" for i in range(100)]
        vocab = _vocab(words)
        e = np.full((3, 100), 0.01)
        groups = KeywordGroups(groups=[["w3", "w7"], ["w50"], ["w99", "w0", "w1"]])
        c = tr.cost_matrix(e, groups, vocab)
        np.testing.assert_allclose(c.values, math.log(100.0), atol=1e-12)

    def test_missing_keyword_named_in_error(self):
        vocab = _vocab(["a"])
        with pytest.raises(KeyError, match="ghost"):
            tr.cost_matrix(np.array([[1.0]]), KeywordGroups(groups=[["ghost"]]), vocab)


class TestSinkhorn:
    def test_constant_cost_gives_uniform_plan(self):
        plan = tr.sinkhorn(np.full((3, 3), 2.0), epsilon=0.5)
        np.testing.assert_allclose(plan.plan, 1.0 / 3.0, atol=1e-9)

    def test_small_epsilon_recovers_permutation(self):
        plan = tr.sinkhorn(np.array([[0.0, 1.0], [1.0, 0.0]]), epsilon=0.01)
        assert plan.plan[0, 1] < 1e-10
        assert plan.plan[1, 0] < 1e-10
        assert plan.plan[0, 0] == pytest.approx(1.0, abs=1e-9)

    def test_marginals_satisfied(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            n, m = rng.integers(2, 7, size=2)
            cost = rng.uniform(0, 4, size=(n, m))
            plan = tr.sinkhorn(cost, epsilon=0.1)
            assert plan.converged
            total = min(n, m)
            np.testing.assert_allclose(plan.plan.sum(axis=1), total / n, atol=1e-8)
            np.testing.assert_allclose(plan.plan.sum(axis=0), total / m, atol=1e-8)

    def test_custom_marginals(self):
        r = np.array([0.7, 0.3])
        c = np.array([0.5, 0.5])
        plan = tr.sinkhorn(np.eye(2), epsilon=0.5, marginals=(r, c))
        np.testing.assert_allclose(plan.plan.sum(axis=1), r, atol=1e-9)
        np.testing.assert_allclose(plan.plan.sum(axis=0), c, atol=1e-9)

    def test_rejects_bad_marginals(self):
        with pytest.raises(ValueError):
            tr.sinkhorn(np.eye(2), marginals=(np.array([1.0, 1.0]), np.array([1.0, 0.5])))
        with pytest.raises(ValueError):
            tr.sinkhorn(np.eye(2), epsilon=0.0)

    def test_epsilon_ladder_monotone_to_brute_force(self):
        """Transport cost decreases with epsilon down to the matching optimum."""
        rng = np.random.default_rng(42)
        for _ in range(10):
            n = int(rng.integers(2, 7))
            cost = rng.uniform(0, 3, size=(n, n))
            _, opt = tr.brute_force_matching(cost)
            prev = np.inf
            for eps in (1.0, 0.1, 0.01, 0.001):
                plan = tr.sinkhorn(cost, epsilon=eps, tol=1e-12)
                feasible = tr.round_to_feasible(plan)
                val = float((feasible * cost).sum())
                assert val <= prev + 1e-9
                prev = val
            assert prev == pytest.approx(opt, abs=1e-6)

    def test_rounding_agrees_with_brute_force_at_margin(self):
        """Unique optima with margin >> epsilon round to the brute-force matching."""
        rng = np.random.default_rng(7)
        eps = 0.01
        found = 0
        while found < 25:
            n = int(rng.integers(2, 7))
            cost = rng.uniform(0, 3, size=(n, n))
            perm, best = tr.brute_force_matching(cost)
            second = min(
                float(cost[np.arange(n), p].sum())
                for p in itertools.permutations(range(n))
                if p != perm
            )
            if second - best <= 10 * eps:
                continue
            found += 1
            plan = tr.sinkhorn(cost, epsilon=eps)
            assert tr.round_to_matching(plan).assignment == perm


class TestOtLoss:
    def test_permutation_plan_has_zero_entropy(self):
        cost = np.array([[0.3, 1.0], [1.0, 0.7]])
        loss = tr.ot_loss(cost, np.eye(2), 0.01)
        assert loss == pytest.approx(0.3 + 0.7, abs=1e-12)
        assert tr.plan_entropy(np.eye(2)) == 0.0

    def test_uniform_plan_constant_cost(self):
        cost = np.full((2, 2), 1.5)
        plan = np.full((2, 2), 0.5)
        transport_term = float((plan * cost).sum())
        assert transport_term == pytest.approx(3.0, abs=1e-12)
        # entropy of the uniform doubly-stochastic 2x2 plan is 2 log 2
        assert tr.plan_entropy(plan) == pytest.approx(2 * math.log(2), abs=1e-12)
        assert tr.ot_loss(cost, plan, 0.01) == pytest.approx(
            3.0 - 0.01 * 2 * math.log(2), abs=1e-12
        )

    def test_gradient_wrt_cost_is_plan(self):
        rng = np.random.default_rng(6)
        cost = rng.uniform(0.5, 2.0, size=(4, 4))
        plan = tr.sinkhorn(cost, epsilon=0.05).plan
        h = 1e-5
        for i in range(4):
            for j in range(4):
                up, down = cost.copy(), cost.copy()
                up[i, j] += h
                down[i, j] -= h
                fd = (tr.ot_loss(up, plan, 0.05) - tr.ot_loss(down, plan, 0.05)) / (2 * h)
                if plan[i, j] > 1e-4:
                    assert abs(fd - plan[i, j]) / plan[i, j] <= 1e-6
                else:
                    assert abs(fd - plan[i, j]) <= 1e-8


class TestRounding:
    def test_identity_plan(self):
        m = tr.round_to_matching(np.eye(3))
        assert m.assignment == (0, 1, 2)
        assert m.plan_gap == 0.0

    def test_dominant_diagonal(self):
        m = tr.round_to_matching(np.array([[0.9, 0.1], [0.1, 0.9]]))
        assert m.assignment == (0, 1)
        assert m.plan_gap == pytest.approx(0.1, abs=1e-12)

    def test_uniform_tie_breaks_to_low_topic_index(self):
        m = tr.round_to_matching(np.full((2, 2), 0.5))
        assert m.assignment == (0, 1)
        assert m.plan_gap == pytest.approx(0.5, abs=1e-12)

    def test_requires_square(self):
        with pytest.raises(ValueError):
            tr.round_to_matching(np.ones((2, 3)))


class TestBruteForce:
    def test_identity_optimal(self):
        perm, cost = tr.brute_force_matching(np.array([[0.0, 1.0], [1.0, 0.0]]))
        assert perm == (0, 1)
        assert cost == 0.0

    def test_antidiagonal(self):
        perm, cost = tr.brute_force_matching(np.array([[5.0, 1.0], [2.0, 9.0]]))
        assert perm == (1, 0)
        assert cost == pytest.approx(3.0)

    def test_never_worse_than_identity(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            c = rng.uniform(0, 1, size=(5, 5))
            _, cost = tr.brute_force_matching(c)
            assert cost <= float(np.trace(c)) + 1e-12

    def test_size_limit(self):
        with pytest.raises(ValueError):
            tr.brute_force_matching(np.zeros((9, 9)))


class TestLemmaCondition:
    def test_holding_example(self):
        checks = tr.check_lemma_condition(np.array([[1.0, 3.0], [4.0, 2.0]]), (0, 1))
        assert checks[0].holds and checks[0].margin == pytest.approx(4.0)

    def test_failing_example(self):
        checks = tr.check_lemma_condition(np.array([[3.0, 1.0], [2.0, 4.0]]), (0, 1))
        assert not checks[0].holds
        assert checks[0].margin == pytest.approx(-4.0)

    def test_brute_force_optimum_always_satisfies(self):
        """Exchange-argument oracle: no 2-swap improves an optimal matching."""
        rng = np.random.default_rng(9)
        for _ in range(100):
            n = int(rng.integers(2, 7))
            cost = rng.uniform(0, 5, size=(n, n))
            perm, _ = tr.brute_force_matching(cost)
            assert all(c.holds for c in tr.check_lemma_condition(cost, perm))

    def test_rejects_non_permutation(self):
        with pytest.raises(ValueError):
            tr.check_lemma_condition(np.eye(2), (0, 0))


class TestTheoremHarness:
    def test_generated_instances_reach_identity(self):
        """Small-epsilon plans recover the matched sum on filtered instances."""
        rng = np.random.default_rng(123)
        for _ in range(20):
            _, cost, n = generate_matched_instance(rng)
            checks = tr.check_lemma_condition(cost, tuple(range(n)))
            assert all(c.margin >= 0.1 - 1e-12 for c in checks)
            plan = tr.sinkhorn(cost, epsilon=1e-3)
            match = tr.round_to_matching(plan)
            assert match.assignment == tuple(range(n))
            gap = abs(float((plan.plan * cost).sum()) - float(np.trace(cost)))
            assert gap <= 1e-6
