"""
Defines the `sweep` command, which runs an experiment template over a grid
of parameter values and several seeds, and writes a mean/std table per cell.
"""

# Standard Library Imports
from pathlib import Path

# Django Imports
from django.conf import settings
from django.db import transaction

# Local Imports
from core.management.base import SimulationCommand
from harness.forms import SweepForm, load_config, parse_config
from harness.models import ExperimentRun
from harness.runner import RunSummary
from harness.sweep import SUMMARY_FILE, run_sweep


class Command(SimulationCommand):
    help = "Runs every cell of a parameter grid over several seeds and writes sweep_summary.json."

    def add_arguments(self, parser):
        parser.add_argument('config', help="Path to the JSON configuration used as template.")
        parser.add_argument('--grid', required=True, help="Grid such as 'p1=0.1,0.5,0.9;algorithm=fedavg,fedpbc'.")
        parser.add_argument('--seeds', help="Comma-separated seeds (defaults to the template's seeds).")
        parser.add_argument('--workers', help="Worker processes (defaults to SIMULATION_SWEEP_WORKERS).")
        parser.add_argument('--out', help="Output directory (defaults to SIMULATION_OUTPUT_DIR/sweep-<digest>).")
        parser.add_argument('--record', action='store_true', help="Store every run summary in the database.")

    def handle(self, *args, **options):
        template = load_config(options['config'])
        cleaned = SweepForm(data={
            'grid': options['grid'], 'seeds': options['seeds'], 'workers': options['workers'],
        }).raise_for_errors()
        seeds = cleaned['seeds'] or template.seeds
        workers = cleaned['workers'] or settings.SIMULATION_SWEEP_WORKERS
        out_dir = Path(options['out']) if options['out'] else Path(settings.SIMULATION_OUTPUT_DIR) / f"sweep-{template.digest}"

        table = run_sweep(template, cleaned['grid'], seeds, out_dir, workers=workers)
        for row in table['cells']:
            metrics = row['metrics']['final_distance']
            self.stdout.write(
                f"  cell {row['cell']} {row['params']}: final distance "
                f"{metrics['mean']:.6g} +/- {metrics['std']:.3g}"
            )

        if options['record']:
            with transaction.atomic():
                for row in table['cells']:
                    cfg = parse_config({**template.as_dict(), **row['params']})
                    for run in row['runs']:
                        fields = {name: value for name, value in run.items() if name != 'type'}
                        ExperimentRun.record(cfg, RunSummary(**fields), out_dir / row['output'])
            self.stdout.write(f"Recorded {sum(len(row['runs']) for row in table['cells'])} runs.")

        self.stdout.write(self.style.SUCCESS(
            f"Swept {len(table['cells'])} cell(s) over {len(seeds)} seed(s); table written to {out_dir / SUMMARY_FILE}"
        ))
