"""
Forms that validate experiment configurations and the options of the
analysis commands. Each form reports problems keyed by field through
`core.forms.BaseConfigForm.raise_for_errors`.
"""

# Standard Library Imports
import json
import logging
from pathlib import Path
from typing import Dict, List

# Django Imports
from django import forms

# Local Imports
from algorithms.config import AlgorithmKind, ScheduleKind
from core.exceptions import ConfigurationError
from core.forms import BaseConfigForm, FloatListField, FloatMatrixField, IntegerListField
from link_models.probabilities import ProbConstructionConfig

from .config import ExperimentConfig, LinkScheme, ObjectiveKind, OptimaSource, ProbSource, TIME_VARYING_SCHEMES

logger = logging.getLogger(__name__)


def _probability_error(value):
    if not 0.0 < value <= 1.0:
        return f"{value} is not a probability in (0, 1]."
    return None


class ExperimentConfigForm(BaseConfigForm):
    """
    Validates one experiment configuration. The form is always bound to a
    complete mapping: defaults from ExperimentConfig are merged in before
    binding.
    """
    m = forms.IntegerField(min_value=1)
    d = forms.IntegerField(min_value=1)
    rounds = forms.IntegerField(min_value=0)
    seeds = IntegerListField()

    algorithm = forms.ChoiceField(choices=AlgorithmKind.choices)
    local_steps = forms.IntegerField(min_value=1)
    lr = forms.FloatField()
    lr_schedule = forms.ChoiceField(choices=ScheduleKind.choices)
    sigma = forms.FloatField(min_value=0.0)

    link_scheme = forms.ChoiceField(choices=LinkScheme.choices)
    gamma = forms.FloatField(min_value=0.0, max_value=1.0)
    period = forms.FloatField()
    cycle_length = forms.IntegerField(min_value=1)
    k = forms.IntegerField(min_value=1)
    allow_zero_floor = forms.BooleanField(required=False)

    prob_source = forms.ChoiceField(choices=ProbSource.choices)
    probs = FloatListField(required=False)
    p0 = forms.FloatField()
    p1 = forms.FloatField()
    p_uniform = forms.FloatField()
    num_classes = forms.IntegerField()
    alpha = forms.FloatField()
    mu0 = forms.FloatField()
    sigma0 = forms.FloatField()
    delta = forms.FloatField()

    objective = forms.ChoiceField(choices=ObjectiveKind.choices)
    optima_source = forms.ChoiceField(choices=OptimaSource.choices)
    optima = FloatMatrixField(required=False)
    optimum_scale = forms.FloatField()
    optimum_std = forms.FloatField(min_value=0.0)
    ls_rows = forms.IntegerField(min_value=1)
    x0 = FloatListField(required=False)

    output = forms.CharField(required=False)

    def clean_lr(self):
        lr = self.cleaned_data['lr']
        if lr <= 0:
            raise forms.ValidationError("The learning rate must be positive.")
        return lr

    def clean_period(self):
        period = self.cleaned_data['period']
        if period <= 0:
            raise forms.ValidationError("The sine period must be positive.")
        return period

    def clean_seeds(self):
        seeds = self.cleaned_data['seeds']
        if any(seed < 0 for seed in seeds):
            raise forms.ValidationError("Seeds must be non-negative.")
        return seeds

    def clean(self):
        cleaned_data = super().clean()
        if self.errors:
            return cleaned_data
        m, d = cleaned_data['m'], cleaned_data['d']

        if cleaned_data['link_scheme'] == LinkScheme.K_OF_M and cleaned_data['k'] > m:
            self.add_error('k', f"k must not exceed the client count m={m}.")

        self._clean_probabilities(cleaned_data, m)
        self._clean_floor(cleaned_data)

        optima = cleaned_data['optima']
        if cleaned_data['objective'] == ObjectiveKind.QUADRATIC and cleaned_data['optima_source'] == OptimaSource.EXPLICIT:
            if len(optima) != m or any(len(row) != d for row in optima):
                self.add_error('optima', f"Explicit optima must form {m} rows of {d} values.")
        elif optima:
            self.add_error('optima', "Optima rows are only read when optima_source is 'explicit'.")

        if len(cleaned_data['x0']) not in (0, 1, d):
            self.add_error('x0', f"The initial model needs 1 or {d} values (or none for zeros).")
        return cleaned_data

    def _clean_probabilities(self, cleaned_data, m):
        source = cleaned_data['prob_source']
        if source == ProbSource.EXPLICIT:
            probs = cleaned_data['probs']
            if len(probs) != m:
                self.add_error('probs', f"Expected {m} probabilities, got {len(probs)}.")
            for value in probs:
                if _probability_error(value):
                    self.add_error('probs', _probability_error(value))
                    break
        elif cleaned_data['probs']:
            self.add_error('probs', "Probabilities are only read when prob_source is 'explicit'.")
        if source == ProbSource.HALVES:
            for name in ('p0', 'p1'):
                if _probability_error(cleaned_data[name]):
                    self.add_error(name, _probability_error(cleaned_data[name]))
        if source == ProbSource.UNIFORM and _probability_error(cleaned_data['p_uniform']):
            self.add_error('p_uniform', _probability_error(cleaned_data['p_uniform']))
        if source == ProbSource.DIRICHLET:
            try:
                self.construction_config(cleaned_data).clean()
            except ConfigurationError as exc:
                for name, messages in exc.message_dict.items():
                    for message in messages:
                        self.add_error(name if name in self.fields else None, message)

    def _clean_floor(self, cleaned_data):
        """A time-varying scheme with gamma >= 1/2 has no positive lower bound on p_i^t."""
        if cleaned_data['link_scheme'] not in TIME_VARYING_SCHEMES or cleaned_data['gamma'] < 0.5:
            return
        message = (
            f"gamma={cleaned_data['gamma']} lets p_i^t reach 0 at the sine trough; "
            f"set allow_zero_floor to run it anyway."
        )
        if cleaned_data['allow_zero_floor']:
            logger.warning(message)
        else:
            self.add_error('gamma', message)

    @staticmethod
    def construction_config(cleaned_data) -> ProbConstructionConfig:
        return ProbConstructionConfig(
            m=cleaned_data['m'], num_classes=cleaned_data['num_classes'], alpha=cleaned_data['alpha'],
            mu0=cleaned_data['mu0'], sigma0=cleaned_data['sigma0'], delta=cleaned_data['delta'],
            period=cleaned_data['period'],
        )


def parse_config(raw) -> ExperimentConfig:
    """
    Validates a mapping of configuration values, filling in defaults.

    Raises:
        ConfigurationError: For unknown keys or invalid values, keyed by field.
    """
    if not isinstance(raw, dict):
        raise ConfigurationError({'config': ["The configuration must be a JSON object."]})
    unknown = sorted(set(raw) - set(ExperimentConfig.field_names()))
    if unknown:
        raise ConfigurationError({key: ["Unknown configuration field."] for key in unknown})
    data = {**ExperimentConfig().as_dict(), **raw}
    cleaned = ExperimentConfigForm(data=data).raise_for_errors()
    return ExperimentConfig(**{name: cleaned[name] for name in ExperimentConfig.field_names()})


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigurationError({'config': [f"No such file: {path}"]})
    except json.JSONDecodeError as exc:
        raise ConfigurationError({'config': [f"{path} is not valid JSON: {exc}"]})
    return parse_config(raw)


SCALAR_GRID_EXCLUDED = frozenset({'seeds', 'probs', 'optima', 'x0', 'output'})


def parse_grid(text: str) -> Dict[str, List[str]]:
    """
    Parses ``"p1=0.1,0.5;algorithm=fedavg,fedpbc"`` into an ordered mapping of
    field name to candidate values. Values stay strings; ExperimentConfigForm
    coerces them per cell. An empty grid has a single cell.

    Raises:
        ConfigurationError: For malformed entries, unknown or list-valued fields.
    """
    grid: Dict[str, List[str]] = {}
    for entry in filter(None, (part.strip() for part in text.split(';'))):
        name, sep, values = entry.partition('=')
        name = name.strip()
        candidates = [value.strip() for value in values.split(',') if value.strip()]
        if not sep or not candidates:
            raise ConfigurationError({'grid': [f"'{entry}' is not of the form field=value1,value2."]})
        if name not in ExperimentConfig.field_names():
            raise ConfigurationError({'grid': [f"Unknown configuration field '{name}'."]})
        if name in SCALAR_GRID_EXCLUDED:
            raise ConfigurationError({'grid': [f"'{name}' cannot be swept; only scalar fields can."]})
        if name in grid:
            raise ConfigurationError({'grid': [f"'{name}' appears more than once."]})
        grid[name] = candidates
    return grid


class SweepForm(BaseConfigForm):
    """Options of `sweep`. Seeds default to the template's seeds; workers to SIMULATION_SWEEP_WORKERS."""
    grid = forms.CharField(required=False)
    seeds = IntegerListField(required=False)
    workers = forms.IntegerField(required=False, min_value=1)

    def clean_grid(self):
        try:
            return parse_grid(self.cleaned_data['grid'])
        except ConfigurationError as exc:
            raise forms.ValidationError(exc.message_dict['grid'])

    def clean_seeds(self):
        seeds = self.cleaned_data['seeds']
        if any(seed < 0 for seed in seeds):
            raise forms.ValidationError("Seeds must be non-negative.")
        return seeds


class BiasOracleForm(BaseConfigForm):
    """
    Options of `bias_oracle`: activation probabilities and one optimum row per
    client. With `split`, `p` holds the two group probabilities (p0, p1) and
    the first `split` clients form group 0.
    """
    p = FloatListField()
    u = FloatMatrixField()
    split = forms.IntegerField(required=False, min_value=0)

    def clean(self):
        cleaned_data = super().clean()
        if self.errors:
            return cleaned_data
        p, u, split = cleaned_data['p'], cleaned_data['u'], cleaned_data['split']
        if split is None and len(p) != len(u):
            self.add_error('u', f"Expected one optimum per client ({len(p)}), got {len(u)}.")
        if split is not None:
            if len(p) != 2:
                self.add_error('p', "With --split, give exactly two probabilities (p0, p1).")
            if split > len(u):
                self.add_error('split', f"The split must not exceed the {len(u)} clients.")
        if any(not 0.0 <= value <= 1.0 for value in p):
            self.add_error('p', "Every probability must lie in [0, 1].")
        elif not any(value > 0 for value in p):
            self.add_error('p', "At least one probability must be positive.")
        return cleaned_data

    def client_probabilities(self):
        """One probability per client, expanding (p0, p1) when split is given."""
        p, u, split = self.cleaned_data['p'], self.cleaned_data['u'], self.cleaned_data['split']
        if split is None:
            return list(p)
        return [p[0]] * split + [p[1]] * (len(u) - split)


class SpectralForm(BaseConfigForm):
    """
    Options of `spectral`: probabilities of independent links, or a k-of-m
    sampler given by k and m (m defaults to the number of probabilities).
    """
    p = FloatListField(required=False)
    k = forms.IntegerField(required=False, min_value=1)
    m = forms.IntegerField(required=False, min_value=1)

    def clean(self):
        cleaned_data = super().clean()
        if self.errors:
            return cleaned_data
        p, k, m = cleaned_data['p'], cleaned_data['k'], cleaned_data['m']
        if k is None:
            if not p:
                self.add_error('p', "Give the activation probabilities, or k and m.")
            elif any(not 0.0 < value <= 1.0 for value in p):
                self.add_error('p', "Every probability must lie in (0, 1].")
            if m is not None and p and m != len(p):
                self.add_error('m', f"m={m} does not match the {len(p)} probabilities.")
            return cleaned_data
        m = m if m is not None else len(p)
        if not m:
            self.add_error('m', "The k-of-m sampler needs m (or a probability list to count).")
        elif k > m:
            self.add_error('k', f"k must not exceed m={m}.")
        cleaned_data['m'] = m
        return cleaned_data
