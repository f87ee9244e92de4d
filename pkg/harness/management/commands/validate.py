"""
Defines the `validate` command, which checks an experiment configuration and
prints it with every default filled in.
"""

# Local Imports
from core.management.base import SimulationCommand
from harness.forms import load_config


class Command(SimulationCommand):
    help = "Validates an experiment configuration file and prints the fully-defaulted configuration."

    def add_arguments(self, parser):
        parser.add_argument('config', help="Path to a JSON configuration file.")

    def handle(self, *args, **options):
        cfg = load_config(options['config'])
        self.stdout.write(cfg.dumps(), ending='')
