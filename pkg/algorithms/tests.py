import itertools

import numpy as np
from django.test import SimpleTestCase

from core.exceptions import ConfigurationError, DomainError, OracleMismatch
from core.rng import derive_stream
from core.types import ActiveSet, SimState
from link_models.schemes import BernoulliStatic, sample_active_set
from objectives.functions import QuadraticObjective
from .config import AlgorithmConfig, AlgorithmKind, ScheduleKind
from .rounds import (
    fedavg_all_round, fedavg_knownp_round, fedavg_round, fedpbc_round, local_sgd, local_sgd_all, mifa_round,
    round_function,
)


def run_rounds(round_fn, state, trace, cfg, obj, seed=0, probs=None):
    states = [state]
    for active in trace:
        states.append(round_fn(states[-1], active, cfg, obj, seed, probs))
    return states


def bernoulli_trace(probs, rounds, seed):
    model = BernoulliStatic(probs)
    return [sample_active_set(model, t, seed) for t in range(rounds)]


def full_trace(m, rounds):
    return [ActiveSet(t, range(m)) for t in range(rounds)]


class AlgorithmConfigTest(SimpleTestCase):
    def test_decaying_schedule(self):
        cfg = AlgorithmConfig(lr=0.2, lr_schedule=ScheduleKind.DECAYING)
        self.assertEqual(cfg.lr_at(0), 0.2)
        self.assertAlmostEqual(cfg.lr_at(30), 0.1)

    def test_constant_schedule(self):
        cfg = AlgorithmConfig(lr=0.2)
        self.assertEqual(cfg.lr_at(0), cfg.lr_at(10_000))

    def test_invalid_values_are_reported_by_field(self):
        with self.assertRaises(ConfigurationError) as ctx:
            AlgorithmConfig(kind='fedprox', local_steps=0, lr=0.0, sigma=-1.0).clean()
        self.assertEqual(
            set(ctx.exception.message_dict), {'algorithm', 'local_steps', 'lr', 'sigma'}
        )

    def test_round_function_lookup(self):
        self.assertIs(round_function('fedpbc'), fedpbc_round)
        with self.assertRaises(DomainError):
            round_function('fedprox')


class LocalSGDTest(SimpleTestCase):
    def setUp(self):
        self.obj = QuadraticObjective([[2.0, -1.0], [4.0, 3.0]])
        self.x = np.array([1.0, 1.0])

    def test_one_exact_step(self):
        eta = 0.3
        result = local_sgd(self.x, self.obj, 0, 1, eta, 0.0, None)
        np.testing.assert_allclose(result, (1 - eta) * self.x + eta * self.obj.optima[0])

    def test_closed_form_after_s_steps(self):
        eta, s = 0.1, 7
        result = local_sgd(self.x, self.obj, 1, s, eta, 0.0, None)
        decay = (1 - eta) ** s
        np.testing.assert_allclose(result, decay * self.x + (1 - decay) * self.obj.optima[1], atol=1e-12)

    def test_local_optimum_is_fixed(self):
        u = self.obj.optima[0]
        np.testing.assert_array_equal(local_sgd(u, self.obj, 0, 25, 0.4, 0.0, None), u)

    def test_batched_matches_single_client(self):
        """Test that the all-clients update uses each client's own noise stream."""
        X = np.array([[0.0, 0.0], [1.0, -1.0]])
        batched = local_sgd_all(X, self.obj, 4, 0.2, 0.5, root_seed=9, t=3)
        for i in range(2):
            single = local_sgd(X[i], self.obj, i, 4, 0.2, 0.5, derive_stream(9, 'grad', i, 3))
            np.testing.assert_allclose(batched[i], single, atol=1e-14)

    def test_zero_steps_is_rejected(self):
        with self.assertRaises(DomainError):
            local_sgd(self.x, self.obj, 0, 0, 0.1, 0.0, None)


class FedPBCRoundTest(SimpleTestCase):
    def setUp(self):
        self.obj = QuadraticObjective([[0.0], [100.0]])
        self.cfg = AlgorithmConfig(kind=AlgorithmKind.FEDPBC, local_steps=3, lr=0.2)

    def test_empty_active_set_keeps_server_model(self):
        state = SimState.initial(2, [10.0])
        following = fedpbc_round(state, ActiveSet(0), self.cfg, self.obj, 0)
        np.testing.assert_array_equal(following.server_model, state.server_model)
        # Clients still move towards their optima.
        expected = local_sgd([10.0], self.obj, 1, 3, 0.2, 0.0, None)
        np.testing.assert_array_equal(following.client_models[1], expected)
        np.testing.assert_array_equal(following.last_active, [-1, -1])
        self.assertEqual(following.round, 1)

    def test_single_active_client(self):
        """Test that with A^t = {1} the server takes client 1's local result."""
        state = SimState.initial(2, [10.0])
        state.client_models[1] = [40.0]
        following = fedpbc_round(state, ActiveSet(0, [1]), self.cfg, self.obj, 0)
        decay = 0.8 ** 3
        np.testing.assert_allclose(following.server_model, [decay * 40.0 + (1 - decay) * 100.0])
        np.testing.assert_array_equal(following.client_models[1], following.server_model)
        np.testing.assert_array_equal(following.last_active, [-1, 0])

    def test_inactive_clients_keep_their_local_result(self):
        state = SimState.initial(2, [10.0])
        following = fedpbc_round(state, ActiveSet(0, [0]), self.cfg, self.obj, 0)
        np.testing.assert_allclose(following.client_models[1], local_sgd([10.0], self.obj, 1, 3, 0.2, 0.0, None))

    def test_full_participation_reaches_consensus(self):
        obj = QuadraticObjective(derive_stream(0, 'optima').generator().normal(size=(6, 4)))
        state = SimState.initial(6, np.zeros(4))
        state.client_models = derive_stream(1, 'start').generator().normal(size=(6, 4))
        following = fedpbc_round(state, ActiveSet(0, range(6)), self.cfg, obj, 0)
        for row in following.client_models:
            np.testing.assert_array_equal(row, following.server_model)

    def test_input_state_is_not_modified(self):
        state = SimState.initial(2, [10.0])
        before = state.copy()
        fedpbc_round(state, ActiveSet(0, [0, 1]), self.cfg, self.obj, 0)
        np.testing.assert_array_equal(state.client_models, before.client_models)
        np.testing.assert_array_equal(state.last_active, before.last_active)

    def test_active_set_of_another_round_is_rejected(self):
        with self.assertRaises(DomainError):
            fedpbc_round(SimState.initial(2, [0.0]), ActiveSet(4, [0]), self.cfg, self.obj, 0)

    def test_diverging_iterates_are_reported(self):
        cfg = AlgorithmConfig(local_steps=50, lr=1e10)
        with self.assertRaises(OracleMismatch):
            run_rounds(fedpbc_round, SimState.initial(2, [1.0]), full_trace(2, 20), cfg, self.obj)


class ReductionIdentityTest(SimpleTestCase):
    def setUp(self):
        self.obj = QuadraticObjective(derive_stream(2, 'optima').generator().normal(size=(5, 3)))
        self.cfg = AlgorithmConfig(local_steps=3, lr=0.1, sigma=0.5)
        self.x0 = np.ones(3)

    def test_fedpbc_with_certain_links_is_fedavg(self):
        """Test that FedPBC with every link always on is bit-identical to full-participation FedAvg."""
        trace = full_trace(5, 100)
        pbc = run_rounds(fedpbc_round, SimState.initial(5, self.x0), trace, self.cfg, self.obj, seed=7)
        avg = run_rounds(fedavg_round, SimState.initial(5, self.x0), trace, self.cfg, self.obj, seed=7)
        for left, right in zip(pbc, avg):
            np.testing.assert_array_equal(left.server_model, right.server_model)
            np.testing.assert_array_equal(left.client_models, right.client_models)

    def test_known_p_with_certain_links_is_fedavg_all(self):
        trace = full_trace(5, 100)
        known = run_rounds(fedavg_knownp_round, SimState.initial(5, self.x0), trace, self.cfg, self.obj,
                           seed=7, probs=np.ones(5))
        weighted = run_rounds(fedavg_all_round, SimState.initial(5, self.x0), trace, self.cfg, self.obj, seed=7)
        for left, right in zip(known, weighted):
            np.testing.assert_array_equal(left.server_model, right.server_model)

    def test_full_participation_fedavg_all_is_fedavg(self):
        state = SimState.initial(5, self.x0)
        active = ActiveSet(0, range(5))
        np.testing.assert_allclose(
            fedavg_all_round(state, active, self.cfg, self.obj, 3).server_model,
            fedavg_round(state, active, self.cfg, self.obj, 3).server_model,
            atol=1e-12,
        )

    def test_mifa_with_certain_links_is_fedavg_all(self):
        trace = full_trace(5, 50)
        mifa = run_rounds(mifa_round, SimState.initial(5, self.x0, with_memory=True), trace, self.cfg, self.obj)
        weighted = run_rounds(fedavg_all_round, SimState.initial(5, self.x0), trace, self.cfg, self.obj)
        for left, right in zip(mifa, weighted):
            np.testing.assert_array_equal(left.server_model, right.server_model)

    def test_single_client_fedavg_is_local_sgd(self):
        obj = QuadraticObjective([[3.0, -3.0]])
        cfg = AlgorithmConfig(local_steps=4, lr=0.25)
        state = SimState.initial(1, [0.0, 0.0])
        following = fedavg_round(state, ActiveSet(0, [0]), cfg, obj, 0)
        np.testing.assert_array_equal(following.server_model, local_sgd([0.0, 0.0], obj, 0, 4, 0.25, 0.0, None))


class BaselineRoundTest(SimpleTestCase):
    def setUp(self):
        self.obj = QuadraticObjective([[0.0], [100.0]])
        self.cfg = AlgorithmConfig(local_steps=2, lr=0.5)
        self.state = SimState.initial(2, [20.0])
        self.local = [local_sgd([20.0], self.obj, i, 2, 0.5, 0.0, None) for i in range(2)]

    def test_empty_active_set_keeps_server_model(self):
        for round_fn in (fedavg_round, fedavg_all_round, mifa_round):
            with self.subTest(round_fn=round_fn.__name__):
                following = round_fn(self.state, ActiveSet(0), self.cfg, self.obj, 0)
                np.testing.assert_array_equal(following.server_model, [20.0])

    def test_fedavg_all_halves_a_single_update(self):
        following = fedavg_all_round(self.state, ActiveSet(0, [1]), self.cfg, self.obj, 0)
        np.testing.assert_allclose(following.server_model, 20.0 + 0.5 * (self.local[1] - 20.0))
        np.testing.assert_array_equal(following.client_models, [following.server_model] * 2)

    def test_known_p_scales_by_inverse_probability(self):
        following = fedavg_knownp_round(self.state, ActiveSet(0, [0]), self.cfg, self.obj, 0,
                                        probs=np.array([0.02, 1.0]))
        np.testing.assert_allclose(following.server_model, 20.0 + 0.5 * 50 * (self.local[0] - 20.0))

    def test_known_p_is_unbiased(self):
        """Test that averaging over all four activation patterns gives the full-participation update."""
        probs = np.array([0.5, 0.5])
        expected = np.zeros(1)
        for pattern in itertools.product([False, True], repeat=2):
            members = [i for i, on in enumerate(pattern) if on]
            weight = np.prod([p if on else 1 - p for p, on in zip(probs, pattern)])
            following = fedavg_knownp_round(self.state, ActiveSet(0, members), self.cfg, self.obj, 0, probs=probs)
            expected += weight * following.server_model
        full = fedavg_all_round(self.state, ActiveSet(0, [0, 1]), self.cfg, self.obj, 0)
        np.testing.assert_allclose(expected, full.server_model, atol=1e-12)

    def test_known_p_requires_probabilities(self):
        with self.assertRaises(DomainError):
            fedavg_knownp_round(self.state, ActiveSet(0, [0]), self.cfg, self.obj, 0)

    def test_mifa_reuses_stale_updates(self):
        """Test that client 1, active only in round 0, keeps contributing its round-0 update."""
        trace = [ActiveSet(0, [0, 1]), ActiveSet(1, [0]), ActiveSet(2, [0])]
        states = run_rounds(mifa_round, SimState.initial(2, [20.0], with_memory=True), trace, self.cfg, self.obj)
        stored = states[1].mifa_memory[1].copy()
        np.testing.assert_allclose(stored, self.local[1] - 20.0)
        for t in (2, 3):
            np.testing.assert_array_equal(states[t].mifa_memory[1], stored)
            server = states[t - 1].server_model
            fresh = local_sgd(server, self.obj, 0, 2, 0.5, 0.0, None) - server
            np.testing.assert_allclose(states[t].server_model, server + (fresh + stored) / 2)

    def test_mifa_never_active_client_contributes_nothing(self):
        trace = [ActiveSet(t, [0]) for t in range(5)]
        states = run_rounds(mifa_round, SimState.initial(2, [20.0], with_memory=True), trace, self.cfg, self.obj)
        np.testing.assert_array_equal(states[-1].mifa_memory[1], [0.0])


class IterateHullTest(SimpleTestCase):
    def test_iterates_stay_in_the_convex_hull(self):
        """Test that FedPBC and FedAvg iterates stay within the box of x0 and the u_i."""
        optima = derive_stream(4, 'optima').generator().uniform(-5, 5, size=(6, 3))
        obj = QuadraticObjective(optima)
        x0 = np.full(3, 8.0)
        corners = np.vstack([optima, x0])
        low, high = corners.min(axis=0) - 1e-9, corners.max(axis=0) + 1e-9
        cfg = AlgorithmConfig(local_steps=5, lr=0.3)
        trace = bernoulli_trace(np.linspace(0.1, 0.9, 6), 300, seed=5)
        for round_fn in (fedpbc_round, fedavg_round):
            with self.subTest(round_fn=round_fn.__name__):
                for state in run_rounds(round_fn, SimState.initial(6, x0), trace, cfg, obj):
                    self.assertTrue(np.all(state.server_model >= low) and np.all(state.server_model <= high))
                    self.assertTrue(np.all(state.client_models >= low) and np.all(state.client_models <= high))


class FedAvgLongRunTest(SimpleTestCase):
    def long_run_mean(self, probs, seed):
        obj = QuadraticObjective([[0.0], [100.0]])
        cfg = AlgorithmConfig(local_steps=1, lr=0.5)
        rounds = 20_000
        states = run_rounds(fedavg_round, SimState.initial(2, [50.0]), bernoulli_trace(probs, rounds, seed), cfg, obj)
        return np.mean([state.server_model[0] for state in states[1000:]])

    def test_equal_probabilities_recover_the_minimizer(self):
        self.assertAlmostEqual(self.long_run_mean([0.5, 0.5], seed=1), 50.0, delta=1.5)

    def test_unequal_probabilities_are_biased(self):
        """Test that with p = (0.5, 1) FedAvg settles around 150 / 2 = 75 instead of 50."""
        self.assertAlmostEqual(self.long_run_mean([0.5, 1.0], seed=2), 75.0, delta=1.0)
