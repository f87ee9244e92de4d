"""
Experiment configuration.

A configuration is one flat JSON object. Every field has a default, so a
config file only lists what differs from the quadratic counterexample
(m = 100 clients, d = 100, s = 100 local steps, eta = 1e-4, T = 2500, two
halves of clients with probabilities p0 and p1). Parsing and validation live
in `harness.forms`.
"""

# Standard Library Imports
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from typing import List

# Django Imports
from django.db import models

# Local Imports
from algorithms.config import AlgorithmConfig, AlgorithmKind, ScheduleKind


class LinkScheme(models.TextChoices):
    BERNOULLI = 'bernoulli', "Bernoulli"
    BERNOULLI_TIME_VARYING = 'bernoulli_time_varying', "Bernoulli, time-varying"
    MARKOV = 'markov', "Markov"
    MARKOV_TIME_VARYING = 'markov_time_varying', "Markov, time-varying"
    CYCLIC = 'cyclic', "Cyclic"
    CYCLIC_RESET = 'cyclic_reset', "Cyclic with periodic reset"
    K_OF_M = 'k_of_m', "Uniform k of m"


TIME_VARYING_SCHEMES = (LinkScheme.BERNOULLI_TIME_VARYING, LinkScheme.MARKOV_TIME_VARYING)


class ProbSource(models.TextChoices):
    EXPLICIT = 'explicit', "Explicit list"
    HALVES = 'halves', "Two halves (p0, p1)"
    UNIFORM = 'uniform', "One value for every client"
    DIRICHLET = 'dirichlet', "Dirichlet / lognormal construction"


class ObjectiveKind(models.TextChoices):
    QUADRATIC = 'quadratic', "Quadratic"
    LEAST_SQUARES = 'least_squares', "Least squares"


class OptimaSource(models.TextChoices):
    COUNTEREXAMPLE = 'counterexample', "Gaussian around (i/1000) * 1"
    EXPLICIT = 'explicit', "Explicit rows"


@dataclass(frozen=True)
class ExperimentConfig:
    # Population and horizon
    m: int = 100
    d: int = 100
    rounds: int = 2500
    seeds: List[int] = field(default_factory=lambda: [0, 1, 2])

    # Algorithm
    algorithm: str = AlgorithmKind.FEDPBC.value
    local_steps: int = 100
    lr: float = 1e-4
    lr_schedule: str = ScheduleKind.CONSTANT.value
    sigma: float = 0.0

    # Links
    link_scheme: str = LinkScheme.BERNOULLI.value
    gamma: float = 0.0
    period: float = 40.0
    cycle_length: int = 100
    k: int = 1
    allow_zero_floor: bool = False

    # Activation probabilities
    prob_source: str = ProbSource.HALVES.value
    probs: List[float] = field(default_factory=list)
    p0: float = 0.5
    p1: float = 0.9
    p_uniform: float = 0.5
    num_classes: int = 10
    alpha: float = 0.1
    mu0: float = 0.0
    sigma0: float = 10.0
    delta: float = 0.02

    # Objective
    objective: str = ObjectiveKind.QUADRATIC.value
    optima_source: str = OptimaSource.COUNTEREXAMPLE.value
    optima: List[List[float]] = field(default_factory=list)
    optimum_scale: float = 1e-3
    optimum_std: float = 0.1
    ls_rows: int = 20
    x0: List[float] = field(default_factory=list)

    output: str = ''

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]

    @property
    def algorithm_config(self) -> AlgorithmConfig:
        return AlgorithmConfig(
            kind=self.algorithm, local_steps=self.local_steps, lr=self.lr,
            lr_schedule=self.lr_schedule, sigma=self.sigma,
        )

    @property
    def is_time_varying(self) -> bool:
        return self.link_scheme in TIME_VARYING_SCHEMES

    def as_dict(self):
        return asdict(self)

    def dumps(self) -> str:
        """Canonical JSON: sorted keys, two-space indent, trailing newline."""
        return json.dumps(self.as_dict(), sort_keys=True, indent=2) + "\n"

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.dumps().encode()).hexdigest()[:16]
