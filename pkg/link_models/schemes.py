"""
Uplink availability schemes.

Each scheme is a LinkModel covering all m clients at once. A model produces
the active set A^t of round t from the round's "link" stream; the models that
carry state (the Markov chains) must be sampled for consecutive rounds
starting at round 0.
"""

# Standard Library Imports
import logging
from abc import ABC, abstractmethod
from typing import ClassVar, Dict, Tuple

# Third-Party Imports
import numpy as np

# Local Imports
from core.exceptions import ConfigurationError, DomainError
from core.rng import RngStream, derive_stream
from core.types import ActiveSet

from .probabilities import time_varying_probs

logger = logging.getLogger(__name__)

# Off-to-on transition probability chosen before balancing the chain.
MARKOV_BASE_RATE = 0.05

LINK_PURPOSE = 'link'
OFFSET_PURPOSE = 'link-offset'


def markov_transitions(p: float) -> Tuple[float, float]:
    """
    Transition probabilities of a two-state ON/OFF chain whose stationary
    ON-probability is p.

    Returns:
        (q, q_star): q is the ON -> OFF probability, q_star the OFF -> ON
        probability. They satisfy q * p == q_star * (1 - p).

    Raises:
        DomainError: If p is not in the open interval (0, 1).
    """
    if not 0.0 < p < 1.0:
        raise DomainError(f"Markov activation probability must lie in (0, 1), got {p}.")
    if MARKOV_BASE_RATE * (1.0 - p) <= p:
        q_star = MARKOV_BASE_RATE
        return q_star * (1.0 - p) / p, q_star
    return 1.0, p / (1.0 - p)


def _transition_arrays(probs: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Vectorized markov_transitions. p = 1 gives a chain that stays ON and p = 0
    one that stays OFF.
    """
    q = np.empty_like(probs)
    q_star = np.empty_like(probs)
    for index, p in enumerate(probs):
        if p >= 1.0:
            q[index], q_star[index] = 0.0, 1.0
        elif p <= 0.0:
            q[index], q_star[index] = 1.0, 0.0
        else:
            q[index], q_star[index] = markov_transitions(float(p))
    return q, q_star


def _validated_probs(base_probs) -> np.ndarray:
    probs = np.array(base_probs, dtype=np.float64, ndmin=1)
    if probs.ndim != 1 or probs.size == 0:
        raise ConfigurationError({'probs': ["Base probabilities must be a non-empty list."]})
    if np.any(probs <= 0) or np.any(probs > 1):
        raise ConfigurationError({'probs': ["Every base probability must lie in (0, 1]."]})
    return probs


class LinkModel(ABC):
    """
    A family of per-client availability processes.

    Subclasses define `probs_at` (the activation parameter of every client in
    round t), `prob_lower_bound` and `_sample_mask`.
    """
    scheme: ClassVar[str]
    memoryless: ClassVar[bool] = True

    def __init__(self, base_probs):
        self.base_probs = _validated_probs(base_probs)

    @property
    def m(self) -> int:
        return self.base_probs.shape[0]

    @property
    @abstractmethod
    def prob_lower_bound(self) -> float:
        """A constant c with p_i^t >= c for every client and round."""

    @abstractmethod
    def probs_at(self, t: int) -> np.ndarray:
        """The activation parameter p_i^t of every client in round t."""

    def prob_at(self, i: int, t: int) -> float:
        if t < 0:
            raise DomainError(f"Round index must be non-negative, got {t}.")
        return float(self.probs_at(t)[i])

    @abstractmethod
    def _sample_mask(self, t: int, stream: RngStream) -> np.ndarray:
        """Boolean activity of every client in round t."""

    def reset(self) -> None:
        """Forgets all per-run state so the model can drive a new run."""

    def fresh(self) -> 'LinkModel':
        """A new model with the same parameters and no run state."""
        clone = self.__class__.__new__(self.__class__)
        clone.__dict__.update(self.__dict__)
        clone.reset()
        return clone

    def sample(self, t: int, stream: RngStream) -> ActiveSet:
        if t < 0:
            raise DomainError(f"Round index must be non-negative, got {t}.")
        return ActiveSet.from_mask(t, self._sample_mask(t, stream))

    def describe(self) -> Dict[str, object]:
        return {'scheme': self.scheme, 'm': self.m, 'prob_lower_bound': self.prob_lower_bound}

    def client_params(self, i: int) -> Dict[str, float]:
        """Scheme parameters of client i beyond its base probability."""
        return {}


class BernoulliStatic(LinkModel):
    """Client i is active independently with the time-invariant probability p_i."""
    scheme = 'bernoulli'

    @property
    def prob_lower_bound(self) -> float:
        return float(self.base_probs.min())

    def probs_at(self, t: int) -> np.ndarray:
        return self.base_probs

    def _sample_mask(self, t, stream):
        return stream.generator().random(self.m) < self.probs_at(t)


class BernoulliTimeVarying(BernoulliStatic):
    """Client i is active independently with probability p_i^t."""
    scheme = 'bernoulli_time_varying'

    def __init__(self, base_probs, gamma: float, period: float):
        super().__init__(base_probs)
        if not 0.0 <= gamma <= 1.0:
            raise ConfigurationError({'gamma': ["The fluctuation amplitude must lie in [0, 1]."]})
        if not period > 0:
            raise ConfigurationError({'period': ["The sine period must be positive."]})
        self.gamma = float(gamma)
        self.period = float(period)

    @property
    def prob_lower_bound(self) -> float:
        return max(float(self.base_probs.min()) * (1.0 - 2.0 * self.gamma), 0.0)

    def probs_at(self, t: int) -> np.ndarray:
        return time_varying_probs(self.base_probs, self.gamma, self.period, t)

    def client_params(self, i):
        return {'gamma': self.gamma, 'period': self.period}


class MarkovHomogeneous(LinkModel):
    """
    Each uplink is a two-state ON/OFF chain with fixed transition
    probabilities balanced so that the chain is ON a fraction p_i of the time.
    The initial state is drawn from Bernoulli(p_i^0).
    """
    scheme = 'markov'
    memoryless = False

    def __init__(self, base_probs):
        super().__init__(base_probs)
        self._fixed_transitions = _transition_arrays(self.base_probs)
        self.reset()

    def reset(self):
        self._state = None
        self._next_round = 0

    @property
    def prob_lower_bound(self) -> float:
        return float(self.base_probs.min())

    def probs_at(self, t: int) -> np.ndarray:
        return self.base_probs

    def transitions_at(self, t: int) -> Tuple[np.ndarray, np.ndarray]:
        return self._fixed_transitions

    def client_params(self, i):
        q, q_star = self.transitions_at(0)
        return {'q': float(q[i]), 'q_star': float(q_star[i])}

    def _sample_mask(self, t, stream):
        if t != self._next_round:
            raise DomainError(
                f"{self.__class__.__name__} must be sampled round by round; "
                f"expected round {self._next_round}, got {t}."
            )
        draws = stream.generator().random(self.m)
        if self._state is None:
            self._state = draws < self.probs_at(t)
        else:
            q, q_star = self.transitions_at(t)
            self._state = np.where(self._state, draws >= q, draws < q_star)
        self._next_round += 1
        return self._state.copy()


class MarkovNonHomogeneous(MarkovHomogeneous):
    """
    Markov uplinks whose transition probabilities are recomputed every round
    from p_i^t. Only the transition probabilities follow p_i^t; the current
    state is carried over unchanged.
    """
    scheme = 'markov_time_varying'

    def __init__(self, base_probs, gamma: float, period: float):
        self._bernoulli = BernoulliTimeVarying(base_probs, gamma, period)
        super().__init__(base_probs)

    @property
    def gamma(self) -> float:
        return self._bernoulli.gamma

    @property
    def period(self) -> float:
        return self._bernoulli.period

    @property
    def prob_lower_bound(self) -> float:
        return self._bernoulli.prob_lower_bound

    def probs_at(self, t: int) -> np.ndarray:
        return self._bernoulli.probs_at(t)

    def transitions_at(self, t: int) -> Tuple[np.ndarray, np.ndarray]:
        return _transition_arrays(self.probs_at(t))

    def client_params(self, i):
        return {**super().client_params(i), 'gamma': self.gamma, 'period': self.period}


class CyclicFixed(LinkModel):
    """
    Deterministic duty cycles. Client i waits a random offset drawn once from
    Uniform{0, ..., inactive_i}, then alternates between active_i active
    rounds and inactive_i inactive rounds, where
    active_i = round(p_i * cycle_length) (at least 1) and
    inactive_i = cycle_length - active_i.

    `fixed_offsets` pins the offsets instead of drawing them.
    """
    scheme = 'cyclic'

    def __init__(self, base_probs, cycle_length: int, fixed_offsets=None):
        super().__init__(base_probs)
        if int(cycle_length) < 1:
            raise ConfigurationError({'cycle_length': ["The cycle length must be at least one round."]})
        self.cycle_length = int(cycle_length)
        self.active_lengths = np.clip(
            np.floor(self.base_probs * self.cycle_length + 0.5).astype(np.int64), 1, self.cycle_length
        )
        self.inactive_lengths = self.cycle_length - self.active_lengths
        self.fixed_offsets = None if fixed_offsets is None else np.array(fixed_offsets, dtype=np.int64)
        if self.fixed_offsets is not None and self.fixed_offsets.shape != (self.m,):
            raise ConfigurationError({'offsets': [f"Expected {self.m} offsets."]})
        self.reset()

    def reset(self):
        self._cached_key = None
        self._cached_offsets = None

    @property
    def duty_fractions(self) -> np.ndarray:
        return self.active_lengths / self.cycle_length

    @property
    def prob_lower_bound(self) -> float:
        return float(self.duty_fractions.min())

    def probs_at(self, t: int) -> np.ndarray:
        return self.duty_fractions

    def client_params(self, i):
        return {'active_rounds': int(self.active_lengths[i]), 'inactive_rounds': int(self.inactive_lengths[i])}

    def offsets(self, root_seed: int, cycle: int) -> np.ndarray:
        """
        Per-client offsets for one cycle, each drawn from the client's own
        (seed, 'link-offset', client, cycle) substream. The latest cycle is
        cached.
        """
        if self.fixed_offsets is not None:
            return self.fixed_offsets
        key = (root_seed, cycle)
        if key != self._cached_key:
            self._cached_offsets = np.array([
                derive_stream(root_seed, OFFSET_PURPOSE, i, cycle).generator().integers(0, gap, endpoint=True)
                for i, gap in enumerate(self.inactive_lengths)
            ], dtype=np.int64)
            self._cached_key = key
        return self._cached_offsets

    def _sample_mask(self, t, stream):
        shifted = t - self.offsets(stream.root_seed, 0)
        return (shifted >= 0) & (np.mod(shifted, self.cycle_length) < self.active_lengths)


class CyclicReset(CyclicFixed):
    """
    Duty cycles whose offset is redrawn at the start of every cycle: within
    cycle k = t // cycle_length, client i is active on
    [offset_k, offset_k + active_i).
    """
    scheme = 'cyclic_reset'

    def _sample_mask(self, t, stream):
        cycle, position = divmod(t, self.cycle_length)
        offsets = self.offsets(stream.root_seed, cycle)
        return (position >= offsets) & (position < offsets + self.active_lengths)


class UniformKOfM(LinkModel):
    """Exactly k clients, chosen uniformly without replacement, every round."""
    scheme = 'k_of_m'

    def __init__(self, m: int, k: int):
        if not 1 <= int(k) <= int(m):
            raise ConfigurationError({'k': [f"k must lie in [1, {m}]."]})
        super().__init__(np.full(int(m), int(k) / int(m)))
        self.k = int(k)

    @property
    def prob_lower_bound(self) -> float:
        return self.k / self.m

    def probs_at(self, t: int) -> np.ndarray:
        return self.base_probs

    def client_params(self, i):
        return {'k': self.k}

    def _sample_mask(self, t, stream):
        mask = np.zeros(self.m, dtype=bool)
        mask[stream.generator().choice(self.m, size=self.k, replace=False)] = True
        return mask


LINK_MODELS = {
    model.scheme: model
    for model in (
        BernoulliStatic, BernoulliTimeVarying, MarkovHomogeneous,
        MarkovNonHomogeneous, CyclicFixed, CyclicReset, UniformKOfM,
    )
}


def build_link_model(scheme: str, base_probs, *, gamma: float = 0.0, period: float = 40.0,
                     cycle_length: int = 100, k: int = 1) -> LinkModel:
    """Builds the link model named `scheme` from the experiment parameters."""
    if scheme not in LINK_MODELS:
        raise ConfigurationError({'link_scheme': [f"Unknown link scheme '{scheme}'."]})
    if scheme in (BernoulliTimeVarying.scheme, MarkovNonHomogeneous.scheme):
        model = LINK_MODELS[scheme](base_probs, gamma=gamma, period=period)
    elif scheme in (CyclicFixed.scheme, CyclicReset.scheme):
        model = LINK_MODELS[scheme](base_probs, cycle_length=cycle_length)
    elif scheme == UniformKOfM.scheme:
        model = UniformKOfM(len(base_probs), k)
    else:
        model = LINK_MODELS[scheme](base_probs)
    logger.debug("Built link model %s", model.describe())
    return model


def sample_active_set(model: LinkModel, t: int, root_seed: int) -> ActiveSet:
    """Samples A^t from the round's link stream (seed, 'link', all clients, t)."""
    return model.sample(t, derive_stream(root_seed, LINK_PURPOSE, round_=t))
