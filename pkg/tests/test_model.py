#!/usr/bin/env python3
"""
Tests for the shared offload model: costs, scenarios, bids, welfare and
population sampling
"""

import sys
import os
import unittest

import numpy as np

# Add src directory to Python path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

from core.model import (
    BidProfile, CostFunction, DomainError, Passenger, PopulationSpec, Scenario, SelectionProfile,
    check_feasible, eval_cost, eval_gradient, sample_population, social_welfare, truthful_bids,
    DEFAULT_WEIGHT_MEAN,
)


def make_scenario(rates, S=1, T=1, demand=0.0, capacity=5.0):
    population = [
        Passenger(id=i, costs={s: CostFunction.linear_rate(r) for s in range(S)},
                  capacity=capacity, local_od=(0,) * T)
        for i, r in enumerate(rates)
    ]
    return Scenario(S=S, T=T, demand=np.full((S, T), demand), penalty=np.ones(S), population=population)


class TestCosts(unittest.TestCase):

    def test_linear_cost_at_zero(self):
        c = CostFunction.linear_rate(2.0)
        self.assertEqual(eval_cost(c, 0.0), 0.0)

    def test_quadratic_cost(self):
        self.assertAlmostEqual(eval_cost(CostFunction.quadratic(1.0), 3.0), 9.0)

    def test_sampled_linear_weights_match_scalar_product(self):
        weights, rates = (0.2, 0.5, 0.1, 0.3), (0.4, 0.4, 0.4, 0.4)
        expected = 0.0
        for w, f in zip(weights, rates):
            expected += w * f
        self.assertAlmostEqual(eval_cost(CostFunction.linear(weights, rates), 3.5), expected * 3.5, places=12)

    def test_gradients(self):
        self.assertEqual(eval_gradient(CostFunction.linear_rate(2.0), 7.0), 2.0)
        self.assertAlmostEqual(eval_gradient(CostFunction.quadratic(1.0), 3.0), 6.0)
        self.assertAlmostEqual(eval_gradient(CostFunction.quadratic(0.5, 1.0), 2.0), 3.0)

    def test_negative_offload_rejected(self):
        with self.assertRaises(DomainError):
            eval_cost(CostFunction.quadratic(1.0), -1.0)
        with self.assertRaises(DomainError):
            eval_gradient(CostFunction.linear_rate(1.0), -0.5)

    def test_costs_monotone_and_convex(self):
        rng = np.random.default_rng(3)
        costs = [CostFunction.linear_rate(1.3), CostFunction.quadratic(0.7, 0.2)]
        for c in costs:
            for _ in range(50):
                q1, q2 = np.sort(rng.uniform(0, 10, size=2))
                self.assertLessEqual(eval_cost(c, q1), eval_cost(c, q2))
                self.assertLessEqual(eval_gradient(c, q1), eval_gradient(c, q2))

    def test_invalid_quadratic(self):
        with self.assertRaises(DomainError):
            CostFunction.quadratic(0.0)


class TestScenario(unittest.TestCase):

    def test_demand_shape_checked(self):
        population = [Passenger(0, {0: CostFunction.linear_rate(1.0)}, 1.0, (0, 0))]
        with self.assertRaises(DomainError):
            Scenario(S=1, T=2, demand=np.zeros((1, 3)), penalty=np.ones(1), population=population)

    def test_empty_population_rejected(self):
        with self.assertRaises(DomainError):
            Scenario(S=1, T=1, demand=np.zeros((1, 1)), penalty=np.ones(1), population=[])

    def test_negative_demand_rejected(self):
        population = [Passenger(0, {0: CostFunction.linear_rate(1.0)}, 1.0, (0,))]
        with self.assertRaises(DomainError):
            Scenario(S=1, T=1, demand=-np.ones((1, 1)), penalty=np.ones(1), population=population)

    def test_passenger_needs_local_cost(self):
        with self.assertRaises(DomainError):
            Passenger(0, {1: CostFunction.linear_rate(1.0)}, 1.0, (0,))

    def test_passenger_dict_keeps_infinite_capacity(self):
        p = Passenger(3, {0: CostFunction.quadratic(0.5)}, float("inf"), (0, 0))
        data = p.to_dict()
        self.assertIsNone(data["capacity"])
        self.assertEqual(Passenger.from_dict(data), p)

    def test_truncated(self):
        costs = {0: CostFunction.linear_rate(1.0), 1: CostFunction.linear_rate(2.0)}
        population = [Passenger(0, costs, 1.0, (0, 1, 1))]
        demand = np.arange(6.0).reshape(2, 3)
        sc = Scenario(S=2, T=3, demand=demand, penalty=np.ones(2), population=population, baseline=demand + 1)
        short = sc.truncated(2)
        self.assertEqual(short.T, 2)
        self.assertEqual(short.population[0].local_od, (0, 1))
        np.testing.assert_array_equal(short.demand, demand[:, :2])
        np.testing.assert_array_equal(short.baseline, demand[:, :2] + 1)
        self.assertIs(sc.truncated(3), sc)
        with self.assertRaises(DomainError):
            sc.truncated(4)


class TestWelfare(unittest.TestCase):

    def setUp(self):
        self.sc = make_scenario([0.4, 0.6, 0.2], S=2, demand=0.0)
        q = np.zeros((3, 2, 1))
        claimed = np.zeros((3, 2, 1))
        mask = np.zeros((3, 2, 1), dtype=bool)
        q[0, 0, 0], claimed[0, 0, 0], mask[0, 0, 0] = 5.0, 2.0, True
        q[1, 1, 0], claimed[1, 1, 0], mask[1, 1, 0] = 3.0, 1.0, True
        q[2, 0, 0], claimed[2, 0, 0], mask[2, 0, 0] = 2.0, 2.5, True
        q[2, 1, 0], claimed[2, 1, 0], mask[2, 1, 0] = 4.0, 1.5, True
        self.B = BidProfile(q, claimed, mask)

    def test_empty_selection_has_zero_welfare(self):
        X = SelectionProfile(np.zeros((3, 2), dtype=np.int8), t=0)
        self.assertEqual(social_welfare(X, self.B, self.sc), 0.0)

    def test_single_selected_bid(self):
        X = SelectionProfile.from_assignment([0, -1, -1], 2, 0)
        self.assertAlmostEqual(social_welfare(X, self.B, self.sc), 3.0)

    def test_welfare_matches_term_by_term_sum(self):
        X = SelectionProfile.from_assignment([0, 1, -1], 2, 0)
        expected = 0.0
        for i in range(3):
            for s in range(2):
                if X.x[i, s] and self.B.mask[i, s, 0]:
                    expected += self.B.q[i, s, 0] - self.B.claimed[i, s, 0]
        self.assertAlmostEqual(social_welfare(X, self.B, self.sc), expected)

    def test_welfare_additive_on_disjoint_supports(self):
        first = SelectionProfile.from_assignment([0, -1, -1], 2, 0)
        second = SelectionProfile.from_assignment([-1, 1, 1], 2, 0)
        both = SelectionProfile.from_assignment([0, 1, 1], 2, 0)
        total = social_welfare(first, self.B, self.sc) + social_welfare(second, self.B, self.sc)
        self.assertAlmostEqual(social_welfare(both, self.B, self.sc), total)

    def test_shape_mismatch(self):
        X = SelectionProfile(np.zeros((2, 2), dtype=np.int8), t=0)
        with self.assertRaises(DomainError):
            social_welfare(X, self.B, self.sc)

    def test_feasibility(self):
        zeros = SelectionProfile(np.zeros((3, 2), dtype=np.int8), t=0)
        self.assertTrue(check_feasible(zeros, self.B, self.sc))

        short = make_scenario([0.4, 0.6, 0.2], S=2, demand=10.0)
        X = SelectionProfile.from_assignment([0, -1, -1], 2, 0)
        self.assertFalse(check_feasible(X, self.B, short))

        twice = np.zeros((3, 2), dtype=np.int8)
        twice[2, :] = 1
        self.assertFalse(check_feasible(SelectionProfile(twice, t=0), self.B, self.sc))

    def test_unmasked_entries_are_zeroed(self):
        q = np.full((1, 1, 1), 4.0)
        B = BidProfile(q, np.full((1, 1, 1), 9.0), np.zeros((1, 1, 1), dtype=bool))
        self.assertEqual(float(B.q.sum()), 0.0)
        self.assertIsNone(B.bid(0, 0, 0))

    def test_records_round_trip_preserves_bids(self):
        B = BidProfile.from_records(self.B.to_records(), 3, 2, 1)
        np.testing.assert_array_equal(B.mask, self.B.mask)
        np.testing.assert_allclose(B.welfare_terms, self.B.welfare_terms)

    def test_truthful_bids_use_capacity(self):
        sc = make_scenario([0.5, 1.5], T=2, capacity=2.0)
        B = truthful_bids(sc)
        self.assertEqual(B.shape, (2, 1, 2))
        self.assertTrue(B.mask.all())
        self.assertAlmostEqual(B.claimed[1, 0, 1], 3.0)


class TestPopulation(unittest.TestCase):

    def test_empty_population(self):
        self.assertEqual(sample_population(PopulationSpec(n=0)), [])

    def test_zero_variance_gives_mean_weights(self):
        spec = PopulationSpec(n=5, weight_cov_scale=0.0, capacity_var=0.0)
        population = sample_population(spec)
        for p in population:
            cost = p.costs[p.local_od[0]]
            np.testing.assert_allclose(cost.weights, DEFAULT_WEIGHT_MEAN)
            self.assertAlmostEqual(p.capacity, 3.5)

    def test_same_seed_same_population(self):
        spec = PopulationSpec(n=40, seed=11)
        first = [p.to_dict() for p in sample_population(spec, od_count=3, horizon=4)]
        second = [p.to_dict() for p in sample_population(spec, od_count=3, horizon=4)]
        self.assertEqual(first, second)

    def test_draws_are_clamped(self):
        spec = PopulationSpec(n=300, weight_cov_scale=2.0, capacity_mean=0.1, capacity_var=4.0, seed=2)
        for p in sample_population(spec):
            self.assertGreaterEqual(p.capacity, 0.0)
            self.assertTrue(all(w >= 0 for w in p.costs[p.local_od[0]].weights))

    def test_non_psd_covariance_rejected(self):
        spec = PopulationSpec(n=3)
        covariance = -np.eye(4)
        with self.assertRaises(DomainError):
            sample_population(spec, covariance=covariance)

    def test_quadratic_family(self):
        spec = PopulationSpec(n=10, family="quadratic", seed=4)
        for p in sample_population(spec, od_count=2, horizon=3):
            self.assertEqual(p.costs[p.local_od[0]].family, "quadratic")
            self.assertEqual(len(set(p.local_od)), 1)

    def test_cost_rate_floor(self):
        # all-zero weights: the cost rate falls back to min_cost_rate
        spec = PopulationSpec(n=3, weight_mean=(0.0, 0.0, 0.0, 0.0), weight_cov_scale=0.0,
                              family="quadratic", min_cost_rate=0.02)
        for p in sample_population(spec):
            self.assertAlmostEqual(p.costs[p.local_od[0]].a, 0.01)
        self.assertEqual(PopulationSpec.from_dict(spec.to_dict()).min_cost_rate, 0.02)
        with self.assertRaises(DomainError):
            PopulationSpec(min_cost_rate=0.0)


if __name__ == "__main__":
    unittest.main()
