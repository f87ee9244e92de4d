"""
Defines the `run` command, which runs one experiment under one seed and
writes its round records and summary as JSON Lines.
"""

# Standard Library Imports
from pathlib import Path

# Django Imports
from django.db import transaction

# Local Imports
from core.exceptions import ConfigurationError
from core.management.base import SimulationCommand
from harness.forms import load_config
from harness.models import ExperimentRun
from harness.runner import Simulation
from harness.writers import default_output_path, trace_path, write_csv, write_jsonl, write_trace


class Command(SimulationCommand):
    help = "Runs one experiment and writes one JSONL record per round followed by a summary record."

    def add_arguments(self, parser):
        parser.add_argument('config', help="Path to a JSON configuration file.")
        parser.add_argument('--seed', type=int, help="Root seed (defaults to the first of the configured seeds).")
        parser.add_argument('--out', help="Output JSONL file (defaults to the configured output, then SIMULATION_OUTPUT_DIR).")
        parser.add_argument('--csv', action='store_true', help="Also write the round records as CSV next to the JSONL file.")
        parser.add_argument('--trace', action='store_true', help="Also write the active set of every round to <out>.trace.jsonl.")
        parser.add_argument('--record', action='store_true', help="Store the run summary in the database.")

    def handle(self, *args, **options):
        cfg = load_config(options['config'])
        seed = options['seed'] if options['seed'] is not None else cfg.seeds[0] if cfg.seeds else 0
        if seed < 0:
            raise ConfigurationError({'seed': ["The seed must be non-negative."]})
        out_path = Path(options['out']) if options['out'] else default_output_path(cfg, seed)

        simulation = Simulation(cfg, seed)
        rounds, trace = [], []
        for metrics in simulation.rounds():
            rounds.append(metrics)
            trace.append(simulation.last_active_set)
        summary = simulation.summary()

        write_jsonl(out_path, [metrics.as_record() for metrics in rounds] + [summary.as_record()])
        self.stdout.write(f"Wrote {len(rounds)} round records to {out_path}")
        if options['csv']:
            csv_path = write_csv(out_path.with_suffix('.csv'), rounds)
            self.stdout.write(f"Wrote CSV projection to {csv_path}")
        if options['trace']:
            self.stdout.write(f"Wrote link trace to {write_trace(trace_path(out_path), trace)}")
        if options['record']:
            with transaction.atomic():
                run = ExperimentRun.record(cfg, summary, out_path)
            self.stdout.write(f"Recorded run #{run.pk}.")

        self.stdout.write(self.style.SUCCESS(
            f"Finished {cfg.algorithm} on {cfg.link_scheme} links (seed {seed}): "
            f"final distance {summary.final_distance:.6g}"
        ))
