import numpy as np
from django.test import SimpleTestCase

from algorithms.config import AlgorithmConfig
from algorithms.rounds import fedavg_round
from core.exceptions import DomainError, OracleMismatch
from core.rng import derive_stream
from core.types import ActiveSet, SimState
from link_models.schemes import BernoulliStatic, CyclicFixed, CyclicReset, MarkovHomogeneous, UniformKOfM, sample_active_set
from objectives.functions import QuadraticObjective
from .bias import (
    fedavg_bias_closedform, fedavg_bias_enumeration, inclusion_weight_closed_form, inclusion_weight_enumeration,
    inclusion_weight_oracle, participation_probability, two_group_bias,
)
from .consensus import consensus_error
from .enumeration import activation_patterns
from .mixing import (
    expected_W2_exact, expected_W2_k_of_m, expected_W2_mc, general_bound, ergodicity_check, mixing_matrix,
    mixing_square_closed_form, rho_of, rho_power_iteration, sample_W2,
)


class EnumerationTest(SimpleTestCase):
    def test_all_patterns_are_visited_once(self):
        masks = np.vstack([chunk for chunk, _ in activation_patterns([0.5] * 5, chunk_size=7)])
        codes = {tuple(row) for row in masks}
        self.assertEqual(len(codes), 32)

    def test_weights_sum_to_one(self):
        probs = [0.1, 1.0, 0.35, 0.0, 0.8]
        total = sum(weights.sum() for _, weights in activation_patterns(probs))
        self.assertAlmostEqual(total, 1.0, places=14)

    def test_too_many_clients(self):
        with self.assertRaises(DomainError):
            next(activation_patterns(np.full(21, 0.5)))


class MixingMatrixTest(SimpleTestCase):
    def test_two_of_three(self):
        W = mixing_matrix(ActiveSet(0, [0, 1]), 3)
        np.testing.assert_array_equal(W, [[0.5, 0.5, 0], [0.5, 0.5, 0], [0, 0, 1]])

    def test_empty_and_singleton_give_identity(self):
        np.testing.assert_array_equal(mixing_matrix(ActiveSet(0), 3), np.eye(3))
        np.testing.assert_array_equal(mixing_matrix(ActiveSet(0, [2]), 3), np.eye(3))

    def test_random_active_sets(self):
        """Test symmetry, double stochasticity and the closed form of W^2 on 10^4 active sets."""
        rng = derive_stream(0, 'mixing-property').generator()
        for _ in range(10_000):
            m = int(rng.integers(1, 13))
            active = ActiveSet.from_mask(0, rng.random(m) < rng.random())
            W = mixing_matrix(active, m)
            np.testing.assert_array_equal(W, W.T)
            np.testing.assert_allclose(W.sum(axis=0), np.ones(m), atol=1e-12)
            np.testing.assert_allclose(W.sum(axis=1), np.ones(m), atol=1e-12)
            self.assertTrue(np.all(W >= 0))
            if len(active) <= 1:
                np.testing.assert_array_equal(W, np.eye(m))
            np.testing.assert_allclose(W @ W, mixing_square_closed_form(active, m), atol=1e-12)

    def test_averaging_is_multiplication_by_W(self):
        """Test that averaging the active rows of the client-model matrix equals W X."""
        X = derive_stream(1, 'models').generator().normal(size=(5, 3))
        active = ActiveSet(0, [1, 3, 4])
        averaged = X.copy()
        averaged[[1, 3, 4]] = X[[1, 3, 4]].mean(axis=0)
        np.testing.assert_allclose(mixing_matrix(active, 5) @ X, averaged, atol=1e-12)


class ExpectedSquareTest(SimpleTestCase):
    def test_single_client(self):
        np.testing.assert_array_equal(expected_W2_exact([0.3]), [[1.0]])

    def test_certain_pair(self):
        np.testing.assert_allclose(expected_W2_exact([1.0, 1.0]), [[0.5, 0.5], [0.5, 0.5]])

    def test_fair_pair(self):
        np.testing.assert_allclose(expected_W2_exact([0.5, 0.5]), [[0.875, 0.125], [0.125, 0.875]])

    def test_doubly_stochastic(self):
        M = expected_W2_exact(derive_stream(2, 'p').generator().uniform(0.1, 1, size=8))
        np.testing.assert_allclose(M.sum(axis=1), np.ones(8), atol=1e-12)
        np.testing.assert_allclose(M, M.T, atol=1e-15)

    def test_zero_probability_is_rejected(self):
        with self.assertRaises(DomainError):
            expected_W2_exact([0.0, 0.5])

    def test_k_of_m_extremes(self):
        np.testing.assert_allclose(expected_W2_k_of_m(10, 1), np.eye(10), atol=1e-15)
        np.testing.assert_allclose(expected_W2_k_of_m(4, 4), np.full((4, 4), 0.25))


class MonteCarloSquareTest(SimpleTestCase):
    def test_fair_pair_with_many_samples(self):
        estimate = expected_W2_mc(np.array([0.5, 0.5]), 0, 1_000_000, root_seed=3)
        np.testing.assert_allclose(estimate, [[0.875, 0.125], [0.125, 0.875]], atol=0.002)

    def test_certain_links_are_exact(self):
        np.testing.assert_allclose(expected_W2_mc(np.ones(4), 0, 2, root_seed=0), np.full((4, 4), 0.25), atol=1e-15)

    def test_converges_to_exact_matrix(self):
        """Test that ||M_hat - M||_F <= 5 SE for Bernoulli links."""
        for m in (3, 7, 12):
            with self.subTest(m=m):
                probs = derive_stream(m, 'p').generator().uniform(0.1, 1.0, size=m)
                estimate = sample_W2(probs, 0, 50_000, root_seed=m)
                distance = np.linalg.norm(estimate.matrix - expected_W2_exact(probs))
                self.assertLessEqual(distance, 5 * estimate.frobenius_error)

    def test_k_of_m_sampler(self):
        """Test that the k-of-m estimate is symmetric and matches the exact exchangeable matrix."""
        estimate = sample_W2(UniformKOfM(6, 3), 0, 4000, root_seed=1)
        np.testing.assert_allclose(estimate.matrix, estimate.matrix.T, atol=1e-12)
        distance = np.linalg.norm(estimate.matrix - expected_W2_k_of_m(6, 3))
        self.assertLessEqual(distance, 5 * estimate.frobenius_error)

    def test_markov_chains_are_replayed_per_sample(self):
        estimate = sample_W2(MarkovHomogeneous([0.5, 0.5, 0.5]), 3, 200, root_seed=2)
        np.testing.assert_allclose(estimate.matrix.sum(axis=1), np.ones(3), atol=1e-12)

    def test_cyclic_offsets_are_redrawn_per_sample(self):
        """Test that every sample draws its own offsets, so the estimate averages over them."""
        # Offsets are uniform on {0..5}, so each client is active at t=0 with probability 1/6.
        estimate = sample_W2(CyclicFixed([0.5] * 4, cycle_length=10), 0, 2000, root_seed=7)
        self.assertGreater(estimate.standard_error[0, 1], 1e-4)
        distance = np.linalg.norm(estimate.matrix - expected_W2_exact(np.full(4, 1 / 6)))
        self.assertLessEqual(distance, 5 * estimate.frobenius_error)

    def test_cyclic_reset_estimate_is_not_degenerate(self):
        estimate = sample_W2(CyclicReset([0.5] * 4, cycle_length=10), 12, 500, root_seed=1)
        self.assertGreater(estimate.frobenius_error, 0.0)
        np.testing.assert_allclose(estimate.matrix.sum(axis=1), np.ones(4), atol=1e-12)


class RhoTest(SimpleTestCase):
    def test_identity(self):
        self.assertAlmostEqual(rho_of(np.eye(4)), 1.0, places=12)

    def test_rank_one(self):
        self.assertAlmostEqual(rho_of(np.full((5, 5), 0.2)), 0.0, places=12)

    def test_fair_pair(self):
        self.assertAlmostEqual(rho_of(np.array([[0.875, 0.125], [0.125, 0.875]])), 0.75, places=12)

    def test_non_symmetric_is_rejected(self):
        with self.assertRaises(DomainError):
            rho_of(np.array([[0.9, 0.1], [0.2, 0.8]]))

    def test_power_iteration_agrees_with_eigensolve(self):
        for seed in range(5):
            M = expected_W2_exact(derive_stream(seed, 'p').generator().uniform(0.2, 1.0, size=6))
            self.assertAlmostEqual(rho_power_iteration(M), rho_of(M), delta=1e-6)

    def test_strictly_below_one_with_positive_probabilities(self):
        self.assertLess(rho_of(expected_W2_exact([0.05, 0.3, 0.9, 0.2])), 1.0)


class ErgodicityBoundTest(SimpleTestCase):
    def test_fair_pair(self):
        report = ergodicity_check([0.5, 0.5])
        self.assertAlmostEqual(report.rho, 0.75, places=12)
        self.assertAlmostEqual(report.bound_general, 1 - 0.5 ** 4 * 0.75 ** 2 / 8, places=15)
        self.assertAlmostEqual(report.bound_general, 0.99561, places=5)
        self.assertTrue(report.passed)

    def test_full_participation(self):
        report = ergodicity_check(m=10, k=10).assert_bounds()
        self.assertAlmostEqual(report.rho, 0.0, places=12)
        self.assertEqual(report.bound_uniform_k, 1 - 1 / 8)

    def test_random_probabilities_never_violate_the_bound(self):
        """Test the general bound on 200 random probability vectors with min p >= 0.2."""
        rng = derive_stream(0, 'ergodicity').generator()
        for _ in range(200):
            m = int(rng.integers(2, 13))
            probs = rng.uniform(0.2, 1.0, size=m)
            report = ergodicity_check(probs).assert_bounds()
            self.assertLessEqual(report.rho, general_bound(probs.min(), m))
            self.assertGreaterEqual(report.min_entry, report.bound_irreducibility)

    def test_uniform_k_of_m(self):
        """Test the k-of-m bound for k = 5 and 10, and that k = 1 leaves rho at 1."""
        for k in (5, 10):
            with self.subTest(k=k):
                report = ergodicity_check(m=10, k=k).assert_bounds()
                self.assertLessEqual(report.rho, 1 - (k / 10) ** 2 / 8)
                self.assertAlmostEqual(report.rho, 1 - (k - 1) / 9, places=12)

        single = ergodicity_check(m=10, k=1)
        self.assertAlmostEqual(single.rho, 1.0, places=12)
        self.assertFalse(single.bound_applies)
        self.assertGreater(single.rho, 1 - (1 / 10) ** 2 / 8)

    def test_violation_raises(self):
        report = ergodicity_check([0.5, 0.5])
        broken = type(report)(M=report.M, rho=0.9999, c=report.c, bound_general=report.bound_general)
        with self.assertRaises(OracleMismatch):
            broken.assert_bounds()


class InclusionWeightTest(SimpleTestCase):
    def test_single_client(self):
        self.assertAlmostEqual(inclusion_weight_oracle([0.37], 0), 0.37, places=15)

    def test_fair_pair(self):
        self.assertAlmostEqual(inclusion_weight_oracle([0.5, 0.5], 0), 0.375, places=15)

    def test_identity_on_random_triples(self):
        rng = derive_stream(1, 'inclusion').generator()
        for _ in range(50):
            probs = rng.uniform(0, 1, size=3)
            for i in range(3):
                self.assertAlmostEqual(
                    inclusion_weight_enumeration(probs, i), inclusion_weight_closed_form(probs, i), delta=1e-10
                )

    def test_weights_sum_to_participation_probability(self):
        probs = [0.2, 0.7, 0.4, 0.9]
        total = sum(inclusion_weight_oracle(probs, i) for i in range(4))
        self.assertAlmostEqual(total, participation_probability(probs), places=12)


class FedAvgBiasTest(SimpleTestCase):
    def test_closed_form_matches_enumeration(self):
        """Test the closed form against enumerated inclusion weights on 100 random instances."""
        rng = derive_stream(2, 'bias').generator()
        for _ in range(100):
            m = int(rng.integers(2, 11))
            probs = rng.uniform(0.1, 1.0, size=m)
            optima = rng.normal(scale=10, size=(m, 3))
            expected = sum(optima[i] * inclusion_weight_oracle(probs, i) for i in range(m))
            expected = expected / participation_probability(probs)
            np.testing.assert_allclose(fedavg_bias_closedform(probs, optima), expected, rtol=0, atol=1e-10)

    def test_two_client_curve(self):
        """Test the curve 150 p2 / (p2 + 1) of the u = (0, 100), p1 = 0.5 example."""
        for p2 in (0.1, 0.25, 0.5, 0.75, 1.0):
            with self.subTest(p2=p2):
                limit = fedavg_bias_closedform([0.5, p2], [0.0, 100.0])
                self.assertAlmostEqual(limit[0], 150 * p2 / (p2 + 1), delta=1e-12)
        self.assertEqual(fedavg_bias_closedform([0.5, 0.5], [0.0, 100.0])[0], 50.0)

    def test_uniform_probabilities_recover_the_mean(self):
        optima = derive_stream(3, 'optima').generator().normal(size=(6, 2))
        np.testing.assert_allclose(fedavg_bias_closedform(np.full(6, 0.3), optima), optima.mean(axis=0), atol=1e-12)

    def test_single_client(self):
        np.testing.assert_allclose(fedavg_bias_closedform([0.2], [[4.0, -1.0]]), [4.0, -1.0])

    def test_all_zero_probabilities(self):
        with self.assertRaises(DomainError):
            fedavg_bias_closedform([0.0, 0.0], [1.0, 2.0])

    def test_too_many_clients(self):
        with self.assertRaises(DomainError):
            fedavg_bias_closedform(np.full(21, 0.5), np.zeros(21))

    def test_enumeration_variant(self):
        probs, optima = [0.3, 0.8, 0.55], [[1.0], [5.0], [-2.0]]
        np.testing.assert_allclose(fedavg_bias_enumeration(probs, optima), fedavg_bias_closedform(probs, optima),
                                   atol=1e-12)

    def test_two_group_reduction_matches_general_form(self):
        optima = derive_stream(4, 'optima').generator().normal(size=(9, 2))
        for split in (4, 0, 9):
            with self.subTest(split=split):
                probs = np.where(np.arange(9) < split, 0.5, 0.9)
                np.testing.assert_allclose(
                    two_group_bias(0.5, 0.9, optima, split=split), fedavg_bias_closedform(probs, optima), atol=1e-12
                )

    def test_monte_carlo_convergence(self):
        """
        Test that the mean of x^T over 200 seeds of FedAvg with exact gradients
        is within three standard errors of the closed form.
        """
        probs = np.array([0.3, 0.6, 0.9])
        optima = np.array([[0.0, 0.0], [10.0, -5.0], [3.0, 8.0]])
        obj = QuadraticObjective(optima)
        cfg = AlgorithmConfig(local_steps=5, lr=0.1)
        link = BernoulliStatic(probs)
        finals = []
        for seed in range(200):
            state = SimState.initial(3, np.zeros(2))
            for t in range(2000):
                state = fedavg_round(state, sample_active_set(link, t, seed), cfg, obj, seed)
            finals.append(state.server_model)
        finals = np.array(finals)
        se = finals.std(axis=0, ddof=1) / np.sqrt(len(finals))
        expected = fedavg_bias_closedform(probs, optima)
        np.testing.assert_array_less(np.abs(finals.mean(axis=0) - expected), 3 * se)


class ConsensusErrorTest(SimpleTestCase):
    def test_equal_models(self):
        self.assertEqual(consensus_error(np.tile([1.0, 2.0], (4, 1))), 0.0)

    def test_two_scalars(self):
        self.assertEqual(consensus_error([0.0, 2.0]), 1.0)

    def test_matrix_form(self):
        """Test (1/m) sum ||x_bar - x_i||^2 = (1/m) ||(I - 11^T/m) X||_F^2."""
        rng = derive_stream(5, 'consensus').generator()
        for _ in range(20):
            m, d = rng.integers(1, 10, size=2)
            X = rng.normal(size=(m, d))
            centering = np.eye(m) - np.full((m, m), 1.0 / m)
            self.assertAlmostEqual(consensus_error(X), np.linalg.norm(centering @ X) ** 2 / m, delta=1e-12)
