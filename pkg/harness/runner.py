"""
Runs one experiment: builds the activation probabilities, the link model, the
objective and the initial state from an ExperimentConfig, then applies the
configured round function T times, emitting one RoundMetrics per round and a
RunSummary at the end.
"""

# Standard Library Imports
import logging
import math
from dataclasses import asdict, dataclass
from typing import Iterator, List, Optional, Tuple, Union

# Third-Party Imports
import numpy as np

# Local Imports
from algorithms.config import AlgorithmKind
from algorithms.rounds import round_function
from analysis.consensus import consensus_error
from core.exceptions import OracleMismatch
from core.rng import derive_stream
from core.types import ActiveSet, ClientProfile, SimState
from link_models.probabilities import construct_base_probs, half_split_probs
from link_models.schemes import LinkModel, build_link_model, sample_active_set
from link_models.staleness import StalenessTracker
from objectives.functions import (
    LeastSquaresObjective, Objective, QuadraticObjective, counterexample_optima, global_metrics,
)

from .config import ExperimentConfig, ObjectiveKind, OptimaSource, ProbSource
from .forms import ExperimentConfigForm

logger = logging.getLogger(__name__)

SUMMARY_WINDOW = 100


@dataclass(frozen=True)
class RoundMetrics:
    """Metrics after round t: distance and |A^t| refer to the server model and round t's active set."""
    t: int
    distance: float
    grad_norm: float
    objective: float
    consensus_error: float
    active_count: int
    mean_staleness: Optional[float]

    def __post_init__(self):
        for name in ('distance', 'grad_norm', 'objective', 'consensus_error'):
            if not math.isfinite(getattr(self, name)):
                raise OracleMismatch(f"Round {self.t}: {name} is not finite.")

    def as_record(self):
        return {'type': 'round', **asdict(self)}


@dataclass(frozen=True)
class RunSummary:
    final_distance: float
    mean_distance_last_100: float
    final_grad_norm: float
    final_consensus_error: float
    mean_staleness: Optional[float]
    mean_active_count: Optional[float]
    rounds: int
    seed: int
    algorithm: str
    link_scheme: str
    config_digest: str

    def as_record(self):
        return {'type': 'summary', **asdict(self)}


def build_probabilities(cfg: ExperimentConfig, seed: int) -> np.ndarray:
    if cfg.prob_source == ProbSource.EXPLICIT:
        return np.array(cfg.probs, dtype=np.float64)
    if cfg.prob_source == ProbSource.HALVES:
        return half_split_probs(cfg.m, cfg.p0, cfg.p1)
    if cfg.prob_source == ProbSource.UNIFORM:
        return np.full(cfg.m, cfg.p_uniform)
    construction = ExperimentConfigForm.construction_config(cfg.as_dict())
    return construct_base_probs(construction, derive_stream(seed, 'probs'))


def build_objective(cfg: ExperimentConfig, seed: int) -> Objective:
    if cfg.objective == ObjectiveKind.LEAST_SQUARES:
        return LeastSquaresObjective.random(cfg.m, cfg.d, cfg.ls_rows, derive_stream(seed, 'objective'))
    if cfg.optima_source == OptimaSource.EXPLICIT:
        return QuadraticObjective(cfg.optima)
    optima = counterexample_optima(
        cfg.m, cfg.d, derive_stream(seed, 'optima'), scale=cfg.optimum_scale, std=cfg.optimum_std,
    )
    return QuadraticObjective(optima)


def build_link(cfg: ExperimentConfig, probs: np.ndarray) -> LinkModel:
    return build_link_model(
        cfg.link_scheme, probs, gamma=cfg.gamma, period=cfg.period, cycle_length=cfg.cycle_length, k=cfg.k,
    )


def build_clients(link: LinkModel, objective: Objective) -> Tuple[ClientProfile, ...]:
    """Per-client view of the run: the link model's p_i and parameters and, for quadratics, u_i."""
    optima = objective.optima if isinstance(objective, QuadraticObjective) else None
    return tuple(
        ClientProfile(
            id=i, base_prob=float(p), optimum=None if optima is None else optima[i].copy(),
            link_params=link.client_params(i),
        )
        for i, p in enumerate(link.base_probs)
    )


def initial_model(cfg: ExperimentConfig) -> np.ndarray:
    if not cfg.x0:
        return np.zeros(cfg.d)
    if len(cfg.x0) == 1:
        return np.full(cfg.d, cfg.x0[0])
    return np.array(cfg.x0, dtype=np.float64)


class Simulation:
    """
    One run of one configuration under one root seed. Iterating over
    `rounds()` advances the run; the active set of the latest round is kept
    in `last_active_set`.
    """
    def __init__(self, cfg: ExperimentConfig, seed: int):
        self.cfg = cfg
        self.seed = int(seed)
        self.algorithm = cfg.algorithm_config.clean()
        self.step = round_function(cfg.algorithm)
        self.probs = build_probabilities(cfg, self.seed)
        self.link = build_link(cfg, self.probs)
        self.objective = build_objective(cfg, self.seed)
        self.clients = build_clients(self.link, self.objective)
        self.state = SimState.initial(cfg.m, initial_model(cfg), with_memory=cfg.algorithm == AlgorithmKind.MIFA)
        self.staleness = StalenessTracker(cfg.m)
        self.last_active_set: Optional[ActiveSet] = None
        self.history: List[RoundMetrics] = []

    @property
    def initial_distance(self) -> float:
        return float(np.linalg.norm(initial_model(self.cfg) - self.objective.optimum))

    def measure(self, t: int, active: ActiveSet) -> RoundMetrics:
        at_average = global_metrics(self.objective, self.state.client_average())
        return RoundMetrics(
            t=t,
            distance=float(np.linalg.norm(self.state.server_model - self.objective.optimum)),
            grad_norm=at_average.grad_norm,
            objective=at_average.value,
            consensus_error=consensus_error(self.state.client_models),
            active_count=len(active),
            mean_staleness=self.staleness.mean,
        )

    def rounds(self) -> Iterator[RoundMetrics]:
        for t in range(self.state.round, self.cfg.rounds):
            active = sample_active_set(self.link, t, self.seed)
            self.staleness.observe(active)
            probs = self.link.probs_at(t) if self.cfg.algorithm == AlgorithmKind.FEDAVG_KNOWN_P else None
            self.state = self.step(self.state, active, self.algorithm, self.objective, self.seed, probs)
            self.last_active_set = active
            metrics = self.measure(t, active)
            self.history.append(metrics)
            yield metrics

    def summary(self) -> RunSummary:
        if self.history:
            last = self.history[-1]
            window = self.history[-SUMMARY_WINDOW:]
            final_distance = last.distance
            mean_distance = float(np.mean([metrics.distance for metrics in window]))
            final_grad_norm, final_consensus = last.grad_norm, last.consensus_error
            mean_active = float(np.mean([metrics.active_count for metrics in self.history]))
        else:
            at_start = global_metrics(self.objective, self.state.client_average())
            final_distance = mean_distance = self.initial_distance
            final_grad_norm = at_start.grad_norm
            final_consensus = consensus_error(self.state.client_models)
            mean_active = None
        return RunSummary(
            final_distance=final_distance,
            mean_distance_last_100=mean_distance,
            final_grad_norm=final_grad_norm,
            final_consensus_error=final_consensus,
            mean_staleness=self.staleness.mean,
            mean_active_count=mean_active,
            rounds=len(self.history),
            seed=self.seed,
            algorithm=str(self.cfg.algorithm),
            link_scheme=str(self.cfg.link_scheme),
            config_digest=self.cfg.digest,
        )


def iter_experiment(cfg: ExperimentConfig, seed: int) -> Iterator[Union[RoundMetrics, RunSummary]]:
    """Yields one RoundMetrics per round, then the RunSummary."""
    simulation = Simulation(cfg, seed)
    logger.info("Starting %s on %s links: m=%d, T=%d, seed=%d", cfg.algorithm, cfg.link_scheme, cfg.m, cfg.rounds, seed)
    yield from simulation.rounds()
    summary = simulation.summary()
    logger.info("Finished seed %d: final distance %.6g", seed, summary.final_distance)
    yield summary


def run_experiment(cfg: ExperimentConfig, seed: int):
    """
    Runs the experiment to completion.

    Returns:
        (rounds, summary): the list of RoundMetrics and the RunSummary.
    """
    records = list(iter_experiment(cfg, seed))
    return records[:-1], records[-1]
