import numpy as np
from django.test import SimpleTestCase

from core.exceptions import DomainError
from core.rng import derive_stream
from .functions import (
    LeastSquaresObjective, QuadraticObjective, counterexample_optima, global_metrics, grad_stochastic,
    sample_grad,
)


class QuadraticObjectiveTest(SimpleTestCase):
    def setUp(self):
        self.optima = derive_stream(1, 'optima').generator().normal(size=(5, 3))
        self.obj = QuadraticObjective(self.optima)

    def test_gradient_vanishes_at_local_optimum(self):
        for i in range(5):
            np.testing.assert_array_equal(self.obj.grad_exact(i, self.optima[i]), np.zeros(3))

    def test_gradient_formula(self):
        obj = QuadraticObjective(np.zeros((2, 4)))
        np.testing.assert_array_equal(obj.grad_exact(1, np.ones(4)), np.ones(4))

    def test_global_gradient_vanishes_at_minimizer(self):
        """Test that the mean of the local gradients at x* is zero."""
        grads = [self.obj.grad_exact(i, self.obj.optimum) for i in range(5)]
        np.testing.assert_allclose(np.mean(grads, axis=0), np.zeros(3), atol=1e-12)

    def test_mean_of_local_gradients_matches_closed_form(self):
        x = np.array([0.3, -2.0, 7.5])
        batched = self.obj.grads(np.tile(x, (5, 1))).mean(axis=0)
        np.testing.assert_allclose(batched, x - self.obj.optimum, atol=1e-12)

    def test_finite_differences(self):
        """Test that central differences of F match the gradient to O(h^2)."""
        x = np.array([1.0, -1.0, 0.5])
        h = 1e-4
        gradient = self.obj.global_grad(x)
        for axis in range(3):
            e = np.zeros(3)
            e[axis] = 1.0
            estimate = (self.obj.value(x + h * e) - self.obj.value(x - h * e)) / (2 * h)
            self.assertAlmostEqual(estimate, gradient[axis], delta=1e-6)

    def test_dimension_mismatch(self):
        with self.assertRaises(DomainError):
            self.obj.grad_exact(0, np.zeros(4))


class GlobalMetricsTest(SimpleTestCase):
    def test_at_minimizer(self):
        obj = QuadraticObjective([[1.0, 2.0], [3.0, 0.0]])
        metrics = global_metrics(obj, obj.optimum)
        self.assertEqual(metrics.grad_norm, 0.0)
        self.assertEqual(metrics.distance, 0.0)
        self.assertAlmostEqual(metrics.value, obj.value(obj.optimum))

    def test_two_client_scalar_example(self):
        """Test that 50 is the minimizer of the u = (0, 100) counterexample."""
        obj = QuadraticObjective([0.0, 100.0])
        metrics = global_metrics(obj, [50.0])
        self.assertEqual(metrics.distance, 0.0)
        self.assertEqual(metrics.grad_norm, 0.0)
        self.assertEqual(metrics.value, 1250.0)

    def test_unit_offset(self):
        obj = QuadraticObjective(np.zeros((3, 4)))
        metrics = global_metrics(obj, np.eye(4)[0])
        self.assertAlmostEqual(metrics.grad_norm, 1.0)
        self.assertAlmostEqual(metrics.distance, 1.0)


class StochasticGradientTest(SimpleTestCase):
    def setUp(self):
        self.obj = QuadraticObjective(np.array([[1.0, -1.0], [0.0, 2.0]]))
        self.x = np.array([0.5, 0.5])

    def test_zero_noise_is_exact(self):
        np.testing.assert_array_equal(
            grad_stochastic(self.obj, 0, self.x, 0.0, derive_stream(0, 'grad')),
            self.obj.grad_exact(0, self.x),
        )

    def test_moments(self):
        """Test the mean and per-coordinate variance of 10^5 noisy gradients."""
        sigma, draws = 0.7, 100_000
        rng = derive_stream(3, 'grad', 0).generator()
        samples = np.array([grad_stochastic(self.obj, 0, self.x, sigma, rng) for _ in range(draws)])
        exact = self.obj.grad_exact(0, self.x)
        np.testing.assert_array_less(np.abs(samples.mean(axis=0) - exact), 4 * sigma / np.sqrt(draws))
        np.testing.assert_allclose(samples.var(axis=0), sigma ** 2, rtol=0.05)

    def test_sample_records_noise_level(self):
        sample = sample_grad(self.obj, 1, self.x, 0.2, derive_stream(0, 'grad', 1))
        self.assertEqual(sample.noise_std, 0.2)
        self.assertEqual(sample.gradient.shape, (2,))

    def test_negative_noise_is_rejected(self):
        with self.assertRaises(DomainError):
            grad_stochastic(self.obj, 0, self.x, -1.0, derive_stream(0, 'grad'))


class LeastSquaresObjectiveTest(SimpleTestCase):
    def setUp(self):
        self.obj = LeastSquaresObjective.random(m=4, d=3, rows=8, stream=derive_stream(5, 'objective'))

    def test_global_gradient_vanishes_at_minimizer(self):
        np.testing.assert_allclose(self.obj.global_grad(self.obj.optimum), np.zeros(3), atol=1e-10)

    def test_batched_gradients_match_single_client(self):
        X = derive_stream(6, 'models').generator().normal(size=(4, 3))
        batched = self.obj.grads(X)
        for i in range(4):
            np.testing.assert_allclose(batched[i], self.obj.grad_exact(i, X[i]), atol=1e-12)

    def test_finite_differences(self):
        x = np.array([0.2, -0.4, 1.1])
        h = 1e-4
        gradient = self.obj.global_grad(x)
        for axis in range(3):
            e = np.eye(3)[axis]
            estimate = (self.obj.value(x + h * e) - self.obj.value(x - h * e)) / (2 * h)
            self.assertAlmostEqual(estimate, gradient[axis], delta=1e-6)

    def test_shape_mismatch(self):
        with self.assertRaises(DomainError):
            LeastSquaresObjective(np.zeros((2, 3, 4)), np.zeros((2, 4)))


class CounterexampleOptimaTest(SimpleTestCase):
    def test_means_grow_with_client_index(self):
        optima = counterexample_optima(100, 400, derive_stream(0, 'optima'))
        self.assertEqual(optima.shape, (100, 400))
        row_means = optima.mean(axis=1)
        np.testing.assert_allclose(row_means, np.arange(1, 101) / 1000, atol=4 * 0.1 / np.sqrt(400))

    def test_reproducible(self):
        np.testing.assert_array_equal(
            counterexample_optima(10, 5, derive_stream(2, 'optima')),
            counterexample_optima(10, 5, derive_stream(2, 'optima')),
        )
