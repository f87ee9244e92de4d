"""
Staleness of client links: the gap t - tau_i(t) between a round t and the
last round tau_i(t) < t in which client i was active.
"""

# Standard Library Imports
from dataclasses import dataclass
from typing import Optional, Sequence

# Third-Party Imports
import numpy as np

# Local Imports
from core.exceptions import DomainError
from core.types import NEVER_ACTIVE, ActiveSet

DEFAULT_BATCHES = 50


@dataclass(frozen=True)
class StalenessStats:
    """
    Per-client mean gap over the trace, with batch-means standard errors
    (NaN where a client has too few measured rounds).
    """
    mean: np.ndarray
    standard_error: np.ndarray
    counts: np.ndarray


class StalenessTracker:
    """
    Online mean of t - tau_i(t) over every (round, client) pair for which
    client i had been active before round t.
    """
    def __init__(self, m: int):
        self.last_active = np.full(m, NEVER_ACTIVE, dtype=np.int64)
        self.total_gap = 0
        self.count = 0

    def observe(self, active: ActiveSet) -> None:
        seen = self.last_active >= 0
        self.total_gap += int((active.round - self.last_active[seen]).sum())
        self.count += int(seen.sum())
        if len(active):
            self.last_active[list(active.members)] = active.round

    @property
    def mean(self) -> Optional[float]:
        """None until some client has been active."""
        return self.total_gap / self.count if self.count else None


def staleness_gaps(trace: Sequence[ActiveSet], m: int) -> np.ndarray:
    """
    The gap matrix of a trace: entry (k, i) is t_k - tau_i(t_k) for the k-th
    round of the trace, or -1 where client i had not yet been active.
    """
    if not trace:
        raise DomainError("Staleness needs a trace of at least one round.")
    rounds = sorted(trace, key=lambda active: active.round)
    last_active = np.full(m, NEVER_ACTIVE, dtype=np.int64)
    gaps = np.full((len(rounds), m), -1, dtype=np.int64)
    for k, active in enumerate(rounds):
        seen = last_active >= 0
        gaps[k, seen] = active.round - last_active[seen]
        mask = active.mask(m)
        last_active[mask] = active.round
    return gaps


def staleness_stats(trace: Sequence[ActiveSet], m: int, batches: int = DEFAULT_BATCHES) -> StalenessStats:
    """
    Empirical mean of t - tau_i(t) per client, excluding rounds before the
    client's first activation.

    Gaps at consecutive rounds are correlated, so the standard error is
    estimated from the means of `batches` contiguous blocks of each client's
    gap sequence.
    """
    gaps = staleness_gaps(trace, m)
    mean = np.full(m, np.nan)
    standard_error = np.full(m, np.nan)
    counts = np.zeros(m, dtype=np.int64)
    for i in range(m):
        measured = gaps[gaps[:, i] >= 0, i].astype(np.float64)
        counts[i] = measured.size
        if measured.size == 0:
            continue
        mean[i] = measured.mean()
        usable = (measured.size // batches) * batches
        if batches > 1 and usable >= batches:
            block_means = measured[:usable].reshape(batches, -1).mean(axis=1)
            standard_error[i] = block_means.std(ddof=1) / np.sqrt(batches)
    return StalenessStats(mean=mean, standard_error=standard_error, counts=counts)
