from io import StringIO

import numpy as np
from django import forms
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase

from .exceptions import ConfigurationError, DomainError, OracleMismatch
from .forms import BaseConfigForm, FloatListField, FloatMatrixField, IntegerListField
from .management.base import EXIT_CONFIG_ERROR, EXIT_INTERNAL_ERROR, SimulationCommand, describe_configuration_error
from .rng import as_generator, derive_stream
from .types import NEVER_ACTIVE, ActiveSet, ClientProfile, SimState
from .vectors import as_model_matrix, as_model_vector, ensure_finite


class RngStreamTest(SimpleTestCase):
    def test_identical_tuples_give_identical_draws(self):
        first = derive_stream(7, 'link', 3, 11).generator().random(5)
        second = derive_stream(7, 'link', 3, 11).generator().random(5)
        np.testing.assert_array_equal(first, second)

    def test_every_field_of_the_tuple_matters(self):
        """Test that changing the seed, purpose, client or round changes the stream."""
        base = derive_stream(7, 'link', 3, 11).generator().random()
        for stream in (
            derive_stream(8, 'link', 3, 11), derive_stream(7, 'grad', 3, 11),
            derive_stream(7, 'link', 4, 11), derive_stream(7, 'link', 3, 12),
        ):
            with self.subTest(stream=stream):
                self.assertNotEqual(stream.generator().random(), base)

    def test_distinct_tuples_have_distinct_first_draws(self):
        """Test that 10^5 distinct (seed, purpose, client, round) tuples give 10^5 distinct first words."""
        words = {
            np.random.Philox(key=derive_stream(seed, purpose, client, round_).key).random_raw()
            for seed in range(10)
            for purpose in ('link', 'grad')
            for client in range(50)
            for round_ in range(100)
        }
        self.assertEqual(len(words), 100_000)

    def test_draws_do_not_depend_on_creation_order(self):
        late = derive_stream(1, 'optima')
        for round_ in range(50):
            derive_stream(1, 'link', round_=round_).generator().random(10)
        self.assertEqual(late.generator().random(), derive_stream(1, 'optima').generator().random())

    def test_as_generator(self):
        generator = np.random.default_rng(0)
        self.assertIs(as_generator(generator), generator)
        self.assertIsInstance(as_generator(derive_stream(0, 'x')), np.random.Generator)
        with self.assertRaises(TypeError):
            as_generator(42)


class ActiveSetTest(SimpleTestCase):
    def test_members_are_sorted_and_unique(self):
        active = ActiveSet(3, (4, 1, 4, 0))
        self.assertEqual(active.members, (0, 1, 4))
        self.assertEqual(len(active), 3)
        self.assertIn(4, active)
        self.assertEqual(list(active), [0, 1, 4])

    def test_mask_round_trip(self):
        mask = np.array([True, False, True, False])
        active = ActiveSet.from_mask(5, mask)
        self.assertEqual(active.members, (0, 2))
        np.testing.assert_array_equal(active.mask(4), mask)

    def test_empty_set_is_allowed(self):
        self.assertEqual(len(ActiveSet(0)), 0)
        self.assertFalse(ActiveSet(0).mask(3).any())

    def test_members_outside_the_population_are_rejected(self):
        with self.assertRaises(DomainError):
            ActiveSet(0, (5,)).mask(5)


class ClientProfileTest(SimpleTestCase):
    def test_base_probability_must_lie_in_the_unit_interval(self):
        ClientProfile(id=0, base_prob=1.0)
        for bad in (0.0, -0.1, 1.5):
            with self.subTest(base_prob=bad):
                with self.assertRaises(DomainError):
                    ClientProfile(id=0, base_prob=bad)


class SimStateTest(SimpleTestCase):
    def test_initial_state(self):
        state = SimState.initial(3, [1.0, 2.0])
        self.assertEqual((state.round, state.m, state.d), (0, 3, 2))
        np.testing.assert_array_equal(state.client_models, [[1.0, 2.0]] * 3)
        np.testing.assert_array_equal(state.last_active, [NEVER_ACTIVE] * 3)
        self.assertIsNone(state.mifa_memory)
        self.assertEqual(SimState.initial(3, [0.0], with_memory=True).mifa_memory.shape, (3, 1))

    def test_copy_is_independent(self):
        state = SimState.initial(2, [0.0], with_memory=True)
        clone = state.copy()
        clone.client_models[0, 0] = 5.0
        clone.mifa_memory[1, 0] = 1.0
        self.assertEqual(state.client_models[0, 0], 0.0)
        self.assertEqual(state.mifa_memory[1, 0], 0.0)

    def test_mark_active_records_the_current_round(self):
        state = SimState.initial(3, [0.0])
        state.round = 4
        state.mark_active([0, 2])
        np.testing.assert_array_equal(state.last_active, [4, NEVER_ACTIVE, 4])

    def test_client_average(self):
        state = SimState.initial(2, [0.0, 0.0])
        state.client_models = np.array([[1.0, 2.0], [3.0, 6.0]])
        np.testing.assert_array_equal(state.client_average(), [2.0, 4.0])


class VectorTest(SimpleTestCase):
    def test_dimension_is_checked(self):
        np.testing.assert_array_equal(as_model_vector(3.0), [3.0])
        with self.assertRaises(DomainError):
            as_model_vector([1.0, 2.0], d=3)
        with self.assertRaises(DomainError):
            as_model_vector([[1.0]])

    def test_flat_rows_become_a_column(self):
        self.assertEqual(as_model_matrix([0, 100]).shape, (2, 1))
        with self.assertRaises(DomainError):
            as_model_matrix([[1, 2]], m=2)

    def test_non_finite_values_are_an_oracle_failure(self):
        with self.assertRaises(OracleMismatch):
            ensure_finite(np.array([1.0, np.inf]), "server model")


class ListFieldForm(BaseConfigForm):
    probs = FloatListField()
    seeds = IntegerListField(required=False)
    optima = FloatMatrixField(required=False)
    rounds = forms.IntegerField()


class BaseConfigFormTest(SimpleTestCase):
    def test_list_fields_accept_lists_json_and_commas(self):
        for probs in ([0.5, 0.25], "[0.5, 0.25]", "0.5, 0.25"):
            with self.subTest(probs=probs):
                cleaned = ListFieldForm(data={'probs': probs, 'rounds': 1}).raise_for_errors()
                self.assertEqual(cleaned['probs'], [0.5, 0.25])

    def test_integer_list_rejects_fractions(self):
        form = ListFieldForm(data={'probs': '1', 'seeds': '1,2.5', 'rounds': 1})
        self.assertFalse(form.is_valid())
        self.assertIn('seeds', form.errors)

    def test_matrix_rows(self):
        cleaned = ListFieldForm(data={'probs': '1', 'optima': '[[0, 1], [2, 3]]', 'rounds': 1}).raise_for_errors()
        self.assertEqual(cleaned['optima'], [[0.0, 1.0], [2.0, 3.0]])
        cleaned = ListFieldForm(data={'probs': '1', 'optima': '0,100', 'rounds': 1}).raise_for_errors()
        self.assertEqual(cleaned['optima'], [[0.0], [100.0]])
        form = ListFieldForm(data={'probs': '1', 'optima': [[0, 1], [2]], 'rounds': 1})
        self.assertFalse(form.is_valid())

    def test_errors_are_keyed_by_field(self):
        with self.assertRaises(ConfigurationError) as ctx:
            ListFieldForm(data={'probs': 'a,b'}).raise_for_errors()
        self.assertEqual(set(ctx.exception.message_dict), {'probs', 'rounds'})
        self.assertEqual(ctx.exception.message_dict['rounds'], ["The 'rounds' field is required."])


class RaisingCommand(SimulationCommand):
    def add_arguments(self, parser):
        parser.add_argument('kind')

    def handle(self, *args, **options):
        kind = options['kind']
        if kind == 'config':
            raise ConfigurationError({'lr': ["The learning rate must be positive."]})
        if kind == 'domain':
            raise DomainError("p outside (0, 1)")
        if kind == 'oracle':
            raise OracleMismatch("closed form and enumeration differ")
        self.stdout.write("ok")


class SimulationCommandTest(SimpleTestCase):
    def test_exceptions_map_to_exit_codes(self):
        for kind, code in (('config', EXIT_CONFIG_ERROR), ('domain', EXIT_CONFIG_ERROR), ('oracle', EXIT_INTERNAL_ERROR)):
            with self.subTest(kind=kind):
                with self.assertRaises(CommandError) as ctx:
                    call_command(RaisingCommand(), kind, stdout=StringIO())
                self.assertEqual(ctx.exception.returncode, code)

    def test_success(self):
        out = StringIO()
        call_command(RaisingCommand(), 'fine', stdout=out)
        self.assertEqual(out.getvalue(), "ok\n")

    def test_missing_arguments_are_configuration_errors(self):
        with self.assertRaises(CommandError) as ctx:
            call_command(RaisingCommand(), stdout=StringIO())
        self.assertEqual(ctx.exception.returncode, EXIT_CONFIG_ERROR)

    def test_configuration_errors_are_flattened(self):
        message = describe_configuration_error(ConfigurationError({'lr': ["must be positive"], 'm': ["too small"]}))
        self.assertEqual(message, "lr: must be positive; m: too small")
