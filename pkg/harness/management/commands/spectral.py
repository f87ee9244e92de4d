"""
Defines the `spectral` command, which prints M = E[W^2], its second-largest
eigenvalue and the ergodicity bounds it is held to.
"""

# Standard Library Imports
import json

# Local Imports
from analysis.mixing import ergodicity_check
from core.management.base import SimulationCommand
from harness.forms import SpectralForm


class Command(SimulationCommand):
    help = "Computes E[W^2] exactly and checks its second-largest eigenvalue against the ergodicity bounds."

    def add_arguments(self, parser):
        parser.add_argument('--p', help="Activation probabilities of independent Bernoulli links, e.g. '0.5,0.3,0.9'.")
        parser.add_argument('--k', help="Size of the uniformly sampled active set (k-of-m sampler).")
        parser.add_argument('--m', help="Number of clients for the k-of-m sampler.")

    def handle(self, *args, **options):
        cleaned = SpectralForm(data={'p': options['p'], 'k': options['k'], 'm': options['m']}).raise_for_errors()
        if cleaned['k'] is not None:
            report = ergodicity_check(m=cleaned['m'], k=cleaned['k'])
        else:
            report = ergodicity_check(cleaned['p'])

        self.stdout.write(json.dumps(report.as_dict(), indent=2, sort_keys=True))
        if not report.bound_applies:
            self.stdout.write(self.style.WARNING("No rho bound applies to this link model; rho is reported only."))
        report.assert_bounds()
        self.stdout.write(self.style.SUCCESS(f"PASS: rho={report.rho:.12g}, bound={report.bound}"))
