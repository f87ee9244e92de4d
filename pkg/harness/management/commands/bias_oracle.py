"""
Defines the `bias_oracle` command, which prints the FedAvg limit from the
closed form together with its enumeration cross-check.
"""

# Standard Library Imports
import json

# Third-Party Imports
import numpy as np

# Local Imports
from analysis.bias import (
    IDENTITY_TOLERANCE, fedavg_bias_closedform, fedavg_bias_enumeration, inclusion_weight_closed_form,
    two_group_bias,
)
from analysis.enumeration import MAX_ENUMERATION_CLIENTS
from core.exceptions import OracleMismatch
from core.management.base import SimulationCommand
from harness.forms import BiasOracleForm


class Command(SimulationCommand):
    help = "Prints FedAvg's long-run limit under Bernoulli links, cross-checked by enumerating every active set."

    def add_arguments(self, parser):
        parser.add_argument('--p', required=True, help="Activation probabilities, e.g. '0.5,0.25' (or p0,p1 with --split).")
        parser.add_argument('--u', required=True, help="Client optima: '0,100' for d=1, or JSON rows '[[0,1],[2,3]]'.")
        parser.add_argument('--split', help="Number of clients in the first group when --p gives two group probabilities.")

    def handle(self, *args, **options):
        form = BiasOracleForm(data={'p': options['p'], 'u': options['u'], 'split': options['split']})
        cleaned = form.raise_for_errors()
        probs, optima = np.array(form.client_probabilities()), np.array(cleaned['u'])

        report = {'m': int(probs.shape[0]), 'p': probs.tolist()}
        if cleaned['split'] is not None:
            report['two_group'] = two_group_bias(cleaned['p'][0], cleaned['p'][1], optima, split=cleaned['split']).tolist()
        if cleaned['split'] is None or probs.shape[0] <= MAX_ENUMERATION_CLIENTS:
            closed = fedavg_bias_closedform(probs, optima)
            enumerated = fedavg_bias_enumeration(probs, optima)
            difference = float(np.max(np.abs(closed - enumerated)))
            report.update({
                'closed_form': closed.tolist(),
                'enumeration': enumerated.tolist(),
                'inclusion_weights': [inclusion_weight_closed_form(probs, i) for i in range(probs.shape[0])],
                'max_abs_difference': difference,
            })
            if 'two_group' in report:
                difference = max(difference, float(np.max(np.abs(closed - np.array(report['two_group'])))))
            if difference > IDENTITY_TOLERANCE:
                self.stdout.write(json.dumps(report, indent=2, sort_keys=True))
                raise OracleMismatch(f"Closed form and enumeration differ by {difference:.3g}.")

        self.stdout.write(json.dumps(report, indent=2, sort_keys=True))
        if 'closed_form' in report:
            self.stdout.write(self.style.SUCCESS("Closed form and enumeration agree."))
        else:
            self.stdout.write(self.style.WARNING(
                f"m > {MAX_ENUMERATION_CLIENTS}: only the two-group reduction was evaluated."
            ))
