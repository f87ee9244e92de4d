import json
import math
import tempfile
from io import StringIO
from pathlib import Path
from unittest import mock

import numpy as np
from django.core.exceptions import ValidationError
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, TestCase, override_settings

from algorithms.config import AlgorithmKind
from analysis.bias import two_group_bias
from core.exceptions import ConfigurationError
from core.management.base import EXIT_CONFIG_ERROR, EXIT_INTERNAL_ERROR
from .config import ExperimentConfig, LinkScheme
from .forms import parse_config, parse_grid
from .models import ExperimentRun
from .runner import RoundMetrics, Simulation, run_experiment
from .sweep import SUMMARY_FILE, run_sweep

SMALL = {
    'm': 6, 'd': 3, 'rounds': 30, 'local_steps': 3, 'lr': 0.1, 'sigma': 0.2,
    'link_scheme': 'markov', 'p0': 0.3, 'p1': 0.8, 'optimum_scale': 0.1,
}

COUNTEREXAMPLE = {'m': 100, 'd': 100, 'local_steps': 100, 'lr': 1e-4, 'rounds': 2500, 'p0': 0.5}


class TempDirMixin:
    def setUp(self):
        super().setUp()
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()
        super().tearDown()

    def write_config(self, name='config.json', **values):
        path = self.tmp / name
        path.write_text(json.dumps(values))
        return path


class ExperimentConfigTest(SimpleTestCase):
    def test_defaults_describe_the_counterexample(self):
        cfg = parse_config({})
        self.assertEqual((cfg.m, cfg.d, cfg.local_steps, cfg.rounds), (100, 100, 100, 2500))
        self.assertEqual(cfg.lr, 1e-4)
        self.assertEqual(cfg.seeds, [0, 1, 2])

    def test_serialization_round_trip_is_byte_identical(self):
        """Test that serialize, parse, serialize gives the same bytes."""
        for raw in ({}, SMALL, {'prob_source': 'explicit', 'probs': [0.5, 0.25], 'm': 2, 'd': 1,
                                'optima_source': 'explicit', 'optima': [[0], [100]], 'x0': [3]}):
            with self.subTest(raw=raw):
                text = parse_config(raw).dumps()
                self.assertEqual(parse_config(json.loads(text)).dumps(), text)

    def test_unknown_keys_are_rejected(self):
        with self.assertRaises(ConfigurationError) as ctx:
            parse_config({'rounds': 10, 'learning_rate': 0.1})
        self.assertIn('learning_rate', ctx.exception.message_dict)

    def test_invalid_values_are_reported_by_field(self):
        cases = [
            ({'m': 0}, 'm'),
            ({'lr': 0}, 'lr'),
            ({'seeds': [-1]}, 'seeds'),
            ({'algorithm': 'fedprox'}, 'algorithm'),
            ({'link_scheme': 'k_of_m', 'm': 4, 'k': 5}, 'k'),
            ({'prob_source': 'explicit', 'm': 2, 'probs': [0.5]}, 'probs'),
            ({'prob_source': 'explicit', 'm': 2, 'probs': [0.5, 0.0]}, 'probs'),
            ({'p1': 1.5}, 'p1'),
            ({'prob_source': 'dirichlet', 'alpha': 0}, 'alpha'),
            ({'optima_source': 'explicit', 'm': 2, 'd': 2, 'optima': [[0, 1]]}, 'optima'),
            ({'d': 3, 'x0': [1, 2]}, 'x0'),
            ({'period': 0}, 'period'),
        ]
        for raw, field in cases:
            with self.subTest(raw=raw):
                with self.assertRaises(ConfigurationError) as ctx:
                    parse_config(raw)
                self.assertIn(field, ctx.exception.message_dict)

    def test_time_varying_floor_needs_explicit_permission(self):
        """Test that gamma >= 1/2 on a time-varying scheme is an error unless allow_zero_floor is set."""
        raw = {'link_scheme': 'bernoulli_time_varying', 'gamma': 0.5}
        with self.assertRaises(ConfigurationError) as ctx:
            parse_config(raw)
        self.assertIn('gamma', ctx.exception.message_dict)
        with self.assertLogs('harness.forms', level='WARNING'):
            cfg = parse_config({**raw, 'allow_zero_floor': True})
        self.assertTrue(cfg.is_time_varying)

    def test_digest_follows_content(self):
        self.assertEqual(parse_config(SMALL).digest, parse_config(dict(SMALL)).digest)
        self.assertNotEqual(parse_config(SMALL).digest, parse_config({**SMALL, 'rounds': 31}).digest)


class GridTest(SimpleTestCase):
    def test_grid_keeps_field_order(self):
        grid = parse_grid("p1=0.1,0.5; algorithm=fedavg,fedpbc")
        self.assertEqual(list(grid), ['p1', 'algorithm'])
        self.assertEqual(grid['p1'], ['0.1', '0.5'])

    def test_empty_grid(self):
        self.assertEqual(parse_grid(""), {})

    def test_malformed_grids_are_rejected(self):
        for text in ("p1", "p1=", "nope=1", "seeds=1,2", "p1=0.1;p1=0.2"):
            with self.subTest(text=text):
                with self.assertRaises(ConfigurationError):
                    parse_grid(text)


class SimulationTest(SimpleTestCase):
    def test_one_record_per_round(self):
        rounds, summary = run_experiment(parse_config(SMALL), 1)
        self.assertEqual([metrics.t for metrics in rounds], list(range(30)))
        self.assertEqual(summary.rounds, 30)
        self.assertEqual(summary.final_distance, rounds[-1].distance)
        self.assertAlmostEqual(summary.mean_distance_last_100, np.mean([r.distance for r in rounds]))

    def test_runs_are_deterministic(self):
        cfg = parse_config(SMALL)
        first, second = run_experiment(cfg, 7), run_experiment(cfg, 7)
        self.assertEqual([r.as_record() for r in first[0]], [r.as_record() for r in second[0]])
        self.assertEqual(first[1], second[1])
        self.assertNotEqual(first[1].final_distance, run_experiment(cfg, 8)[1].final_distance)

    def test_zero_rounds_reports_the_initial_distance(self):
        cfg = parse_config({**SMALL, 'rounds': 0, 'x0': [1.0]})
        rounds, summary = run_experiment(cfg, 0)
        self.assertEqual(rounds, [])
        simulation = Simulation(cfg, 0)
        expected = np.linalg.norm(np.ones(3) - simulation.objective.optimum)
        self.assertAlmostEqual(summary.final_distance, expected)
        self.assertAlmostEqual(summary.mean_distance_last_100, expected)
        self.assertIsNone(summary.mean_staleness)
        self.assertEqual(summary.rounds, 0)

    def test_every_algorithm_and_scheme_runs(self):
        for algorithm in AlgorithmKind.values:
            for scheme in LinkScheme.values:
                with self.subTest(algorithm=algorithm, scheme=scheme):
                    cfg = parse_config({
                        **SMALL, 'algorithm': algorithm, 'link_scheme': scheme, 'gamma': 0.25,
                        'cycle_length': 5, 'k': 2, 'rounds': 12,
                    })
                    rounds, summary = run_experiment(cfg, 3)
                    self.assertEqual(len(rounds), 12)
                    self.assertTrue(math.isfinite(summary.final_distance))

    def test_client_profiles_follow_the_link_model(self):
        cyclic = Simulation(parse_config({'m': 4, 'd': 2, 'link_scheme': 'cyclic', 'cycle_length': 10}), 0)
        self.assertEqual([client.id for client in cyclic.clients], [0, 1, 2, 3])
        self.assertEqual(cyclic.clients[2].base_prob, 0.9)
        self.assertEqual(cyclic.clients[2].link_params, {'active_rounds': 9, 'inactive_rounds': 1})
        np.testing.assert_array_equal(cyclic.clients[1].optimum, cyclic.objective.optima[1])

        k_of_m = Simulation(parse_config({'m': 4, 'd': 1, 'link_scheme': 'k_of_m', 'k': 2}), 0)
        self.assertEqual({client.base_prob for client in k_of_m.clients}, {0.5})
        self.assertEqual(k_of_m.clients[0].link_params, {'k': 2})

        least_squares = Simulation(parse_config({'m': 3, 'd': 2, 'objective': 'least_squares', 'ls_rows': 4}), 0)
        self.assertIsNone(least_squares.clients[0].optimum)

    def test_probability_sources(self):
        explicit = Simulation(parse_config({'m': 3, 'd': 1, 'prob_source': 'explicit', 'probs': [0.2, 0.4, 1.0]}), 0)
        np.testing.assert_array_equal(explicit.probs, [0.2, 0.4, 1.0])
        halves = Simulation(parse_config({'m': 4, 'd': 1}), 0)
        np.testing.assert_array_equal(halves.probs, [0.5, 0.5, 0.9, 0.9])
        uniform = Simulation(parse_config({'m': 3, 'd': 1, 'prob_source': 'uniform', 'p_uniform': 0.3}), 0)
        np.testing.assert_array_equal(uniform.probs, [0.3, 0.3, 0.3])
        dirichlet = Simulation(parse_config({'m': 20, 'd': 1, 'prob_source': 'dirichlet'}), 5)
        self.assertGreaterEqual(dirichlet.probs.min(), 0.02)

    def test_least_squares_objective(self):
        cfg = parse_config({**SMALL, 'objective': 'least_squares', 'ls_rows': 8, 'sigma': 0.0, 'rounds': 60})
        rounds, summary = run_experiment(cfg, 2)
        self.assertLess(rounds[-1].grad_norm, rounds[0].grad_norm)

    def test_staleness_is_missing_until_someone_was_active(self):
        cfg = parse_config({**SMALL, 'link_scheme': 'bernoulli', 'prob_source': 'uniform', 'p_uniform': 1.0})
        rounds, _ = run_experiment(cfg, 0)
        self.assertIsNone(rounds[0].mean_staleness)
        self.assertEqual(rounds[1].mean_staleness, 1.0)

    def test_round_metrics_must_be_finite(self):
        with self.assertRaises(AssertionError):
            RoundMetrics(t=0, distance=float('nan'), grad_norm=0.0, objective=0.0,
                         consensus_error=0.0, active_count=0, mean_staleness=None)


class CounterexampleTest(SimpleTestCase):
    """The quadratic counterexample at full scale: m = d = s = 100, eta = 1e-4, T = 2500."""

    def run_pair(self, p1, seed=0):
        results = {}
        for algorithm in (AlgorithmKind.FEDPBC, AlgorithmKind.FEDAVG):
            cfg = parse_config({**COUNTEREXAMPLE, 'p1': p1, 'algorithm': algorithm})
            simulation = Simulation(cfg, seed)
            for _ in simulation.rounds():
                pass
            results[algorithm] = simulation
        return results

    def test_equal_probabilities_give_similar_distances(self):
        """Test that with p0 = p1 the seed-averaged final distances agree within a factor of 3."""
        distances = {AlgorithmKind.FEDPBC: [], AlgorithmKind.FEDAVG: []}
        for seed in (0, 1, 2):
            for algorithm, simulation in self.run_pair(0.5, seed).items():
                distances[algorithm].append(simulation.summary().final_distance)
        fedpbc = np.mean(distances[AlgorithmKind.FEDPBC])
        fedavg = np.mean(distances[AlgorithmKind.FEDAVG])
        self.assertLess(max(fedpbc, fedavg) / min(fedpbc, fedavg), 3.0)

    def test_unequal_probabilities_bias_fedavg_only(self):
        results = self.run_pair(0.9)
        fedpbc = results[AlgorithmKind.FEDPBC].summary().final_distance
        fedavg_run = results[AlgorithmKind.FEDAVG]
        fedavg = fedavg_run.summary().final_distance
        objective = fedavg_run.objective
        bias = np.linalg.norm(two_group_bias(0.5, 0.9, objective.optima, split=50) - objective.optimum)

        self.assertLessEqual(fedpbc, 1e-2)
        self.assertGreaterEqual(fedavg, 5 * fedpbc)
        self.assertLess(abs(fedavg - bias), 0.2 * bias)


class StationarityTest(SimpleTestCase):
    def test_gradient_norm_keeps_falling_under_time_varying_links(self):
        """Test that the last-quarter mean of ||grad F(x_bar)||^2 is smaller at T=2500 than at T=500."""
        cfg = parse_config({
            **COUNTEREXAMPLE, 'link_scheme': 'bernoulli_time_varying', 'gamma': 0.25, 'period': 40,
        })
        for seed in (0, 1, 2):
            with self.subTest(seed=seed):
                rounds, _ = run_experiment(cfg, seed)
                squared = np.array([metrics.grad_norm ** 2 for metrics in rounds])
                self.assertLess(squared[1875:2500].mean(), squared[375:500].mean())


class SweepTest(TempDirMixin, SimpleTestCase):
    def test_single_cell_matches_run_experiment(self):
        template = parse_config(SMALL)
        table = run_sweep(template, parse_grid("p1=0.8"), [4], self.tmp)
        _, summary = run_experiment(template, 4)
        self.assertEqual(table['cells'][0]['runs'], [summary.as_record()])
        self.assertTrue((self.tmp / SUMMARY_FILE).exists())

    def test_deterministic_cells_have_zero_spread(self):
        template = parse_config({
            'm': 3, 'd': 2, 'rounds': 20, 'local_steps': 2, 'lr': 0.1,
            'prob_source': 'uniform', 'p_uniform': 1.0,
            'optima_source': 'explicit', 'optima': [[0, 1], [2, 3], [4, 5]],
        })
        table = run_sweep(template, parse_grid("algorithm=fedpbc,fedavg"), [0, 1, 2], self.tmp)
        self.assertEqual(len(table['cells']), 2)
        for row in table['cells']:
            for name, stats in row['metrics'].items():
                with self.subTest(cell=row['cell'], metric=name):
                    self.assertAlmostEqual(stats['std'], 0.0, places=12)

    def test_parallel_sweep_matches_serial_sweep(self):
        template = parse_config({**SMALL, 'rounds': 10})
        grid = parse_grid("p1=0.4,0.9;algorithm=fedavg,fedpbc")
        serial = run_sweep(template, grid, [0, 1], self.tmp / 'serial', workers=1)
        parallel = run_sweep(template, grid, [0, 1], self.tmp / 'parallel', workers=2)
        self.assertEqual(serial, parallel)
        self.assertEqual(
            (self.tmp / 'serial' / SUMMARY_FILE).read_bytes(),
            (self.tmp / 'parallel' / SUMMARY_FILE).read_bytes(),
        )

    def test_invalid_cell_fails_before_running(self):
        with self.assertRaises(ConfigurationError):
            run_sweep(parse_config(SMALL), parse_grid("p1=0.5,2.0"), [0], self.tmp)
        self.assertFalse((self.tmp / 'cell-000.jsonl').exists())


class CommandTest(TempDirMixin, SimpleTestCase):
    def call(self, *args, **kwargs):
        out = StringIO()
        call_command(*args, stdout=out, **kwargs)
        return out.getvalue()

    def test_validate_prints_the_defaulted_config(self):
        path = self.write_config(m=4, rounds=10)
        output = self.call('validate', str(path))
        self.assertEqual(output, parse_config({'m': 4, 'rounds': 10}).dumps())
        self.assertIn('"allow_zero_floor": false', output)

    def test_configuration_errors_exit_with_one(self):
        bad = self.write_config(m=-1)
        for args in (('validate', str(bad)), ('validate', str(self.tmp / 'missing.json')), ('run', str(bad))):
            with self.subTest(args=args):
                with self.assertRaises(CommandError) as ctx:
                    self.call(*args)
                self.assertEqual(ctx.exception.returncode, EXIT_CONFIG_ERROR)

    def test_usage_errors_exit_with_one(self):
        path = self.write_config(**SMALL)
        with self.assertRaises(CommandError) as ctx:
            self.call('sweep', str(path))
        self.assertEqual(ctx.exception.returncode, EXIT_CONFIG_ERROR)

    def test_run_output_is_byte_identical(self):
        path = self.write_config(**SMALL)
        first, second = self.tmp / 'a.jsonl', self.tmp / 'b.jsonl'
        self.call('run', str(path), '--seed', '3', '--out', str(first))
        self.call('run', str(path), '--seed', '3', '--out', str(second))
        self.assertEqual(first.read_bytes(), second.read_bytes())

        records = [json.loads(line) for line in first.read_text().splitlines()]
        self.assertEqual(len(records), 31)
        self.assertTrue(all(record['type'] == 'round' for record in records[:-1]))
        self.assertEqual(records[-1]['type'], 'summary')
        self.assertEqual(records[-1]['seed'], 3)

    def test_run_writes_csv_and_trace(self):
        path = self.write_config(**SMALL)
        out = self.tmp / 'run.jsonl'
        self.call('run', str(path), '--out', str(out), '--csv', '--trace')
        header = (self.tmp / 'run.csv').read_text().splitlines()[0]
        self.assertEqual(header, "t,distance,grad_norm,objective,consensus_error,active_count,mean_staleness")
        trace = [json.loads(line) for line in (self.tmp / 'run.trace.jsonl').read_text().splitlines()]
        self.assertEqual([record['t'] for record in trace], list(range(30)))
        self.assertEqual(trace[0]['type'], 'active_set')

    def test_run_defaults_to_the_output_directory(self):
        path = self.write_config(**SMALL)
        with override_settings(SIMULATION_OUTPUT_DIR=self.tmp / 'runs'):
            self.call('run', str(path))
        self.assertEqual(len(list((self.tmp / 'runs').glob('*-seed0.jsonl'))), 1)

    def test_sweep_command(self):
        path = self.write_config(**{**SMALL, 'rounds': 5})
        out = self.tmp / 'sweep'
        output = self.call('sweep', str(path), '--grid', 'p1=0.5,0.9', '--seeds', '0,1', '--out', str(out))
        table = json.loads((out / SUMMARY_FILE).read_text())
        self.assertEqual(len(table['cells']), 2)
        self.assertEqual(table['seeds'], [0, 1])
        self.assertIn("cell 1", output)

    def test_bias_oracle_matches_the_two_client_curve(self):
        output = self.call('bias_oracle', '--p', '0.5,0.25', '--u', '0,100')
        report = json.loads(output[:output.rindex('}') + 1])
        self.assertAlmostEqual(report['closed_form'][0], 150 * 0.25 / 1.25, places=12)
        self.assertLess(report['max_abs_difference'], 1e-10)

    def test_bias_oracle_with_two_groups(self):
        output = self.call('bias_oracle', '--p', '0.5,0.9', '--u', '0,1,2,3,4,5', '--split', '3')
        report = json.loads(output[:output.rindex('}') + 1])
        np.testing.assert_allclose(report['two_group'], report['closed_form'], atol=1e-12)

    def test_bias_oracle_mismatch_exits_with_two(self):
        with mock.patch(
            'harness.management.commands.bias_oracle.fedavg_bias_enumeration',
            return_value=np.array([1e6]),
        ):
            with self.assertRaises(CommandError) as ctx:
                self.call('bias_oracle', '--p', '0.5,0.5', '--u', '0,100')
        self.assertEqual(ctx.exception.returncode, EXIT_INTERNAL_ERROR)

    def test_bias_oracle_rejects_mismatched_lengths(self):
        with self.assertRaises(CommandError) as ctx:
            self.call('bias_oracle', '--p', '0.5,0.5,0.5', '--u', '0,100')
        self.assertEqual(ctx.exception.returncode, EXIT_CONFIG_ERROR)

    def test_spectral_passes_for_bernoulli_links(self):
        output = self.call('spectral', '--p', '0.5,0.3,0.9,0.7')
        self.assertIn("PASS", output)
        report = json.loads(output[:output.rindex('}') + 1])
        self.assertLess(report['rho'], report['bound_general'])

    def test_spectral_for_k_of_m(self):
        output = self.call('spectral', '--k', '5', '--m', '10')
        report = json.loads(output[:output.rindex('}') + 1])
        self.assertAlmostEqual(report['rho'], 1 - 4 / 9)
        self.assertIn("PASS", output)

    def test_spectral_bound_violation_exits_with_two(self):
        with mock.patch('analysis.mixing.general_bound', return_value=0.0):
            with self.assertRaises(CommandError) as ctx:
                self.call('spectral', '--p', '0.5,0.5,0.5')
        self.assertEqual(ctx.exception.returncode, EXIT_INTERNAL_ERROR)

    def test_spectral_needs_probabilities_or_k(self):
        with self.assertRaises(CommandError) as ctx:
            self.call('spectral')
        self.assertEqual(ctx.exception.returncode, EXIT_CONFIG_ERROR)


class ExperimentRunModelTest(TempDirMixin, TestCase):
    def test_run_command_records_the_summary(self):
        path = self.write_config(**SMALL)
        call_command('run', str(path), '--seed', '2', '--out', str(self.tmp / 'r.jsonl'), '--record', stdout=StringIO())
        run = ExperimentRun.objects.get()
        self.assertEqual(run.seed, 2)
        self.assertEqual(run.rounds, 30)
        self.assertEqual(run.config_digest, parse_config(SMALL).digest)
        self.assertEqual(json.loads(run.config_json), parse_config(SMALL).as_dict())
        self.assertEqual(str(run), "FedPBC on Markov (seed 2)")

    def test_sweep_command_records_every_run(self):
        path = self.write_config(**{**SMALL, 'rounds': 4})
        call_command('sweep', str(path), '--grid', 'p1=0.5,0.9', '--seeds', '0,1',
                     '--out', str(self.tmp / 'sweep'), '--record', stdout=StringIO())
        self.assertEqual(ExperimentRun.objects.count(), 4)

    def test_clean_rejects_negative_seeds_and_non_finite_metrics(self):
        cfg = parse_config(SMALL)
        _, summary = run_experiment(parse_config({**SMALL, 'rounds': 2}), 0)
        run = ExperimentRun.record(cfg, summary)
        run.seed = -1
        run.final_distance = float('inf')
        with self.assertRaises(ValidationError) as ctx:
            run.full_clean()
        self.assertIn('seed', ctx.exception.message_dict)
        self.assertIn('final_distance', ctx.exception.message_dict)

    def test_config_defaults_match_the_dataclass(self):
        self.assertEqual(parse_config({}), ExperimentConfig())
