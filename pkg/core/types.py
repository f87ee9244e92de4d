"""
Domain types shared by the link, algorithm, analysis and harness apps.
"""

# Standard Library Imports
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Optional, Tuple

# Third-Party Imports
import numpy as np

# Local Imports
from .exceptions import DomainError

NEVER_ACTIVE = -1


@dataclass(frozen=True)
class ClientProfile:
    """
    A client's base probability p_i, its local optimum u_i (quadratic
    objective only) and the parameters of its link scheme.
    """
    id: int
    base_prob: float
    optimum: Optional[np.ndarray] = None
    link_params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 < self.base_prob <= 1.0:
            raise DomainError(f"Client {self.id}: base probability {self.base_prob} is outside (0, 1].")


@dataclass(frozen=True)
class ActiveSet:
    """The clients whose uplink is on in one round (A^t)."""
    round: int
    members: Tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, 'members', tuple(sorted(set(int(i) for i in self.members))))

    @classmethod
    def from_mask(cls, round_: int, mask: np.ndarray) -> 'ActiveSet':
        return cls(round_, tuple(np.flatnonzero(mask).tolist()))

    def mask(self, m: int) -> np.ndarray:
        """Boolean membership vector of length m."""
        if self.members and (self.members[0] < 0 or self.members[-1] >= m):
            raise DomainError(f"Active set {self.members} is not a subset of [0, {m}).")
        mask = np.zeros(m, dtype=bool)
        mask[list(self.members)] = True
        return mask

    def __len__(self):
        return len(self.members)

    def __contains__(self, client):
        return client in self.members

    def __iter__(self):
        return iter(self.members)


@dataclass
class SimState:
    """
    The state of one simulation run between rounds.

    `client_models` holds x_i^t as rows of an (m, d) array; `last_active[i]`
    is the last round in which client i was active (-1 if never). The MIFA
    memory is only allocated for MIFA runs.
    """
    round: int
    server_model: np.ndarray
    client_models: np.ndarray
    last_active: np.ndarray
    mifa_memory: Optional[np.ndarray] = None

    @classmethod
    def initial(cls, m: int, x0: np.ndarray, with_memory: bool = False) -> 'SimState':
        x0 = np.array(x0, dtype=np.float64)
        return cls(
            round=0,
            server_model=x0.copy(),
            client_models=np.tile(x0, (m, 1)),
            last_active=np.full(m, NEVER_ACTIVE, dtype=np.int64),
            mifa_memory=np.zeros((m, x0.shape[0])) if with_memory else None,
        )

    @property
    def m(self) -> int:
        return self.client_models.shape[0]

    @property
    def d(self) -> int:
        return self.client_models.shape[1]

    def client_average(self) -> np.ndarray:
        """x̄^t, the plain average of the client models."""
        return self.client_models.mean(axis=0)

    def copy(self) -> 'SimState':
        return replace(
            self,
            server_model=self.server_model.copy(),
            client_models=self.client_models.copy(),
            last_active=self.last_active.copy(),
            mifa_memory=None if self.mifa_memory is None else self.mifa_memory.copy(),
        )

    def mark_active(self, members: Iterable[int]) -> None:
        members = list(members)
        if members:
            self.last_active[members] = self.round
