import numpy as np
from django.test import SimpleTestCase

from core.exceptions import ConfigurationError, DomainError
from core.rng import derive_stream
from core.types import ActiveSet
from .probabilities import ProbConstructionConfig, construct_base_probs, half_split_probs, time_varying_probs
from .schemes import (
    BernoulliStatic, BernoulliTimeVarying, CyclicFixed, CyclicReset, MarkovHomogeneous,
    MarkovNonHomogeneous, UniformKOfM, build_link_model, markov_transitions, sample_active_set,
)
from .staleness import StalenessTracker, staleness_stats


def run_trace(model, rounds, seed=0):
    return [sample_active_set(model, t, seed) for t in range(rounds)]


def activity_matrix(trace, m):
    return np.array([active.mask(m) for active in trace])


class ProbConstructionTest(SimpleTestCase):
    def test_single_class_gives_certain_activation(self):
        """Test that with one class every client's probability is 1."""
        cfg = ProbConstructionConfig(m=5, num_classes=1)
        probs = construct_base_probs(cfg, derive_stream(3, 'probs'))
        np.testing.assert_array_equal(probs, np.ones(5))

    def test_probabilities_are_clipped_to_delta(self):
        """Test that no probability falls below the clipping floor."""
        cfg = ProbConstructionConfig(m=200, delta=0.02)
        probs = construct_base_probs(cfg, derive_stream(11, 'probs'))
        self.assertGreaterEqual(probs.min(), 0.02)
        self.assertLessEqual(probs.max(), 1.0)
        # With sigma0 = 10 most clients sit at the floor.
        self.assertTrue(np.any(probs == 0.02))

    def test_most_probabilities_fall_below_one_tenth(self):
        """Test that the unclipped pipeline puts most of its mass below 0.1."""
        cfg = ProbConstructionConfig(m=100, alpha=0.1, mu0=0.0, sigma0=10.0, delta=0.0)
        pooled = np.concatenate([
            construct_base_probs(cfg, derive_stream(seed, 'probs')) for seed in range(20)
        ])
        self.assertLess(np.median(pooled), 0.1)

    def test_same_stream_gives_same_probabilities(self):
        cfg = ProbConstructionConfig(m=30)
        np.testing.assert_array_equal(
            construct_base_probs(cfg, derive_stream(5, 'probs')),
            construct_base_probs(cfg, derive_stream(5, 'probs')),
        )

    def test_invalid_parameters_are_rejected(self):
        """Test that non-positive alpha and negative sigma0 are configuration errors."""
        for bad in ({'alpha': 0.0}, {'alpha': -1.0}, {'sigma0': -0.1}, {'delta': 1.0}, {'period': 0.0}):
            with self.subTest(**bad):
                with self.assertRaises(ConfigurationError):
                    construct_base_probs(ProbConstructionConfig(m=4, **bad), derive_stream(0, 'probs'))

    def test_half_amplitude_is_rejected_without_opt_in(self):
        """Test that gamma = 0.5, whose floor reaches zero, needs allow_zero_floor."""
        with self.assertRaises(ConfigurationError) as ctx:
            ProbConstructionConfig(m=4, gamma=0.5).clean()
        self.assertIn('gamma', ctx.exception.message_dict)

        with self.assertLogs('link_models.probabilities', level='WARNING'):
            ProbConstructionConfig(m=4, gamma=0.5, allow_zero_floor=True).clean()

    def test_unclipped_probabilities_are_noted_at_debug_level(self):
        """Test that validating a delta=0 configuration stays quiet at INFO."""
        with self.assertLogs('link_models.probabilities', level='DEBUG') as logs:
            ProbConstructionConfig(m=4, delta=0.0).clean()
        self.assertEqual([record.levelname for record in logs.records], ['DEBUG'])

    def test_implied_floor(self):
        self.assertAlmostEqual(ProbConstructionConfig(m=1, delta=0.02, gamma=0.25).implied_floor, 0.01)

    def test_half_split(self):
        np.testing.assert_array_equal(half_split_probs(5, 0.5, 0.9), [0.5, 0.5, 0.9, 0.9, 0.9])


class ProbAtTest(SimpleTestCase):
    def setUp(self):
        self.base = np.array([0.2, 0.6, 1.0])

    def test_zero_amplitude_is_constant(self):
        model = BernoulliTimeVarying(self.base, gamma=0.0, period=40)
        for t in (0, 7, 10, 33, 1000):
            np.testing.assert_allclose(model.probs_at(t), self.base)

    def test_sine_peak_and_trough(self):
        """Test the quarter-period peak and three-quarter-period trough of p_i^t."""
        model = BernoulliTimeVarying(self.base, gamma=0.5, period=40)
        np.testing.assert_allclose(model.probs_at(10), self.base)
        np.testing.assert_allclose(model.probs_at(30), np.zeros(3), atol=1e-12)
        self.assertEqual(model.prob_lower_bound, 0.0)

    def test_time_varying_range(self):
        """Test that p_i^t stays within [p_i (1 - 2 gamma), p_i]."""
        gamma = 0.3
        model = BernoulliTimeVarying(self.base, gamma=gamma, period=40)
        values = np.array([model.probs_at(t) for t in range(400)])
        self.assertTrue(np.all(values >= self.base * (1 - 2 * gamma) - 1e-12))
        self.assertTrue(np.all(values <= self.base + 1e-12))

    def test_static_models_return_base_probability(self):
        for model in (BernoulliStatic(self.base), MarkovHomogeneous(self.base)):
            with self.subTest(scheme=model.scheme):
                self.assertEqual(model.prob_at(1, 17), 0.6)

    def test_cyclic_returns_duty_fraction(self):
        model = CyclicFixed([0.25, 0.5], cycle_length=100)
        self.assertEqual(model.prob_at(0, 3), 0.25)
        self.assertEqual(model.prob_lower_bound, 0.25)

    def test_negative_round_is_rejected(self):
        with self.assertRaises(DomainError):
            BernoulliStatic(self.base).prob_at(0, -1)
        with self.assertRaises(DomainError):
            time_varying_probs(self.base, 0.1, 40, -3)


class MarkovTransitionsTest(SimpleTestCase):
    def test_balanced_branch(self):
        q, q_star = markov_transitions(0.5)
        self.assertAlmostEqual(q, 0.05)
        self.assertAlmostEqual(q_star, 0.05)

    def test_saturated_branch(self):
        """Test that a small p switches to q = 1 and q* = p / (1 - p)."""
        q, q_star = markov_transitions(0.01)
        self.assertEqual(q, 1.0)
        self.assertAlmostEqual(q_star, 0.01 / 0.99, places=15)

    def test_detailed_balance(self):
        """Test that q p = q* (1 - p) for many random p."""
        rng = np.random.default_rng(0)
        for p in rng.uniform(1e-6, 1 - 1e-6, size=1000):
            q, q_star = markov_transitions(float(p))
            self.assertLessEqual(abs(q * p - q_star * (1 - p)), 1e-15)
            self.assertTrue(0 <= q <= 1 and 0 <= q_star <= 1)

    def test_probability_outside_open_interval_is_rejected(self):
        for p in (0.0, 1.0, -0.2, 1.5):
            with self.subTest(p=p):
                with self.assertRaises(DomainError):
                    markov_transitions(p)


class MarkovSamplingTest(SimpleTestCase):
    def test_long_run_on_fraction_matches_p(self):
        """
        Test that the stationary ON-fraction of each chain is within three
        standard errors of p, the standard error accounting for the lag-one
        correlation 1 - q - q* of the chain.
        """
        probs = np.array([0.05, 0.5, 0.9])
        rounds = 100_000
        model = MarkovHomogeneous(probs)
        on_fraction = activity_matrix(run_trace(model, rounds, seed=21), 3).mean(axis=0)
        for i, p in enumerate(probs):
            q, q_star = markov_transitions(float(p))
            correlation = 1 - q - q_star
            se = np.sqrt(p * (1 - p) / rounds * (1 + correlation) / (1 - correlation))
            self.assertLessEqual(abs(on_fraction[i] - p), 3 * se, msg=f"p={p}")

    def test_rounds_must_be_sampled_in_order(self):
        model = MarkovHomogeneous([0.5, 0.5])
        sample_active_set(model, 0, 1)
        with self.assertRaises(DomainError):
            sample_active_set(model, 5, 1)

    def test_fresh_model_replays_the_trace(self):
        model = MarkovNonHomogeneous([0.3, 0.6, 0.9], gamma=0.25, period=40)
        first = run_trace(model, 200, seed=4)
        second = run_trace(model.fresh(), 200, seed=4)
        self.assertEqual(first, second)

    def test_non_homogeneous_transitions_follow_p_t(self):
        model = MarkovNonHomogeneous([0.5], gamma=0.25, period=40)
        p10 = model.probs_at(10)[0]
        q, q_star = model.transitions_at(10)
        self.assertEqual((q[0], q_star[0]), markov_transitions(p10))

    def test_certain_links_stay_on(self):
        model = MarkovHomogeneous(np.ones(4))
        for active in run_trace(model, 50):
            self.assertEqual(active.members, (0, 1, 2, 3))


class BernoulliSamplingTest(SimpleTestCase):
    def test_certain_activation(self):
        """Test that p_i = 1 for all clients activates everybody every round."""
        for scheme in ('bernoulli', 'bernoulli_time_varying', 'markov', 'cyclic', 'cyclic_reset'):
            with self.subTest(scheme=scheme):
                model = build_link_model(scheme, np.ones(6), gamma=0.0)
                for active in run_trace(model, 30):
                    self.assertEqual(len(active), 6)

    def test_mean_active_count(self):
        """Test that E|A^t| = 2 for four clients with p = 0.5."""
        model = BernoulliStatic(np.full(4, 0.5))
        counts = activity_matrix(run_trace(model, 100_000, seed=8), 4).sum(axis=1)
        self.assertAlmostEqual(counts.mean(), 2.0, delta=0.02)

    def test_draws_depend_only_on_seed_and_round(self):
        model = BernoulliStatic(np.full(20, 0.5))
        forward = [sample_active_set(model, t, 99) for t in range(10)]
        backward = [sample_active_set(model, t, 99) for t in reversed(range(10))]
        self.assertEqual(forward, backward[::-1])


class CyclicSamplingTest(SimpleTestCase):
    def test_fixed_offset_unrolls(self):
        """Test the duty cycle of p = 0.25, cycle 100 and offset 75."""
        model = CyclicFixed([0.25], cycle_length=100, fixed_offsets=[75])
        active = activity_matrix(run_trace(model, 400), 1)[:, 0]
        expected = np.zeros(400, dtype=bool)
        for start in (75, 175, 275, 375):
            expected[start:start + 25] = True
        np.testing.assert_array_equal(active, expected)

    def test_duty_fraction_is_exact_per_cycle(self):
        """Test that after the first cycle every cycle holds p_i * cycle_length active rounds."""
        probs = np.array([0.1, 0.25, 0.5, 0.8])
        for model in (CyclicFixed(probs, cycle_length=20), CyclicReset(probs, cycle_length=20)):
            with self.subTest(scheme=model.scheme):
                active = activity_matrix(run_trace(model, 200, seed=6), 4)
                per_cycle = active[20:].reshape(9, 20, 4).sum(axis=1)
                np.testing.assert_array_equal(per_cycle, np.tile(probs * 20, (9, 1)))

    def test_offsets_are_reproducible_and_bounded(self):
        model = CyclicFixed([0.1, 0.3, 0.6], cycle_length=50)
        offsets = model.offsets(7, 0)
        np.testing.assert_array_equal(offsets, CyclicFixed([0.1, 0.3, 0.6], cycle_length=50).offsets(7, 0))
        self.assertTrue(np.all(offsets >= 0))
        self.assertTrue(np.all(offsets <= model.inactive_lengths))

    def test_reset_redraws_offsets_each_cycle(self):
        model = CyclicReset(np.full(30, 0.2), cycle_length=50)
        self.assertFalse(np.array_equal(model.offsets(3, 0), model.offsets(3, 1)))

    def test_durations_round_to_at_least_one_round(self):
        model = CyclicFixed([0.001, 0.5, 1.0], cycle_length=10)
        np.testing.assert_array_equal(model.active_lengths, [1, 5, 10])


class UniformKOfMTest(SimpleTestCase):
    def test_exactly_k_clients_per_round(self):
        model = UniformKOfM(10, 3)
        for active in run_trace(model, 100):
            self.assertEqual(len(active), 3)

    def test_k_out_of_range_is_rejected(self):
        with self.assertRaises(ConfigurationError):
            UniformKOfM(5, 0)
        with self.assertRaises(ConfigurationError):
            build_link_model('k_of_m', np.full(5, 0.5), k=6)

    def test_unknown_scheme_is_rejected(self):
        with self.assertRaises(ConfigurationError):
            build_link_model('carrier_pigeon', [0.5])


class StalenessTest(SimpleTestCase):
    def test_always_active_client_has_unit_gap(self):
        trace = [ActiveSet(t, (0,)) for t in range(50)]
        stats = staleness_stats(trace, 1)
        self.assertEqual(stats.mean[0], 1.0)

    def test_alternating_schedule(self):
        """Test that a client active every other round has gaps 1, 2, 1, 2, ..."""
        model = CyclicFixed([0.5], cycle_length=2, fixed_offsets=[0])
        stats = staleness_stats(run_trace(model, 101), 1)
        self.assertEqual(stats.mean[0], 1.5)

    def test_rounds_before_first_activation_are_excluded(self):
        trace = [ActiveSet(0), ActiveSet(1), ActiveSet(2, (1,)), ActiveSet(3, (1,))]
        stats = staleness_stats(trace, 2)
        self.assertTrue(np.isnan(stats.mean[0]))
        self.assertEqual(stats.mean[1], 1.0)
        self.assertEqual(stats.counts[1], 1)

    def test_empty_trace_is_an_error(self):
        with self.assertRaises(DomainError):
            staleness_stats([], 3)

    def test_bernoulli_gap_is_bounded_by_inverse_probability(self):
        """Test that the mean of t - tau_i(t) is at most 1/c + 3 SE for each client."""
        probs = np.repeat([0.1, 0.3, 0.7], 2)
        model = BernoulliStatic(probs)
        stats = staleness_stats(run_trace(model, 100_000, seed=13), probs.size)
        for i, c in enumerate(probs):
            self.assertLessEqual(stats.mean[i], 1 / c + 3 * stats.standard_error[i], msg=f"client {i}")

    def test_tracker_matches_batch_statistics(self):
        model = BernoulliStatic([0.4, 0.8])
        trace = run_trace(model, 500, seed=2)
        tracker = StalenessTracker(2)
        self.assertIsNone(tracker.mean)
        for active in trace:
            tracker.observe(active)
        stats = staleness_stats(trace, 2)
        pooled = (stats.mean * stats.counts).sum() / stats.counts.sum()
        self.assertAlmostEqual(tracker.mean, pooled)
