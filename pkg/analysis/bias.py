"""
The long-run limit of FedAvg under independent Bernoulli links.

With X_i ~ Bernoulli(p_i), FedAvg's expected iterate converges to

    sum_i u_i E[X_i / sum_j X_j] / [1 - prod_i (1 - p_i)]

(0/0 read as 0). The inclusion weight E[X_i / sum_j X_j] equals
p_i E[1 / (1 + K_i)] with K_i the number of other active clients, and

    E[1 / (1 + K_i)] = sum_k (-1)^k e_k(p_{-i}) / (k + 1)

where e_k(p_{-i}) sums prod_{z in S} p_z over the k-subsets S of the other
clients. Both sides are computed here, the left one by enumeration.
"""

# Standard Library Imports
import logging
import math

# Third-Party Imports
import numpy as np

# Local Imports
from core.exceptions import DomainError, OracleMismatch
from core.vectors import as_model_matrix

from .enumeration import activation_patterns, check_enumerable, validate_probs

logger = logging.getLogger(__name__)

IDENTITY_TOLERANCE = 1e-10


def elementary_symmetric(values) -> np.ndarray:
    """e_0, ..., e_n of the given values."""
    e = np.zeros(len(values) + 1)
    e[0] = 1.0
    for count, value in enumerate(values, start=1):
        e[1:count + 1] = e[1:count + 1] + value * e[:count]
    return e


def _alternating_sum(others) -> float:
    """E[1 / (1 + K)] for K a sum of independent Bernoulli(others)."""
    e = elementary_symmetric(others)
    k = np.arange(e.size)
    return float(np.sum((-1.0) ** k * e / (k + 1)))


def _validated(probs) -> np.ndarray:
    probs = validate_probs(probs)
    check_enumerable(probs.shape[0])
    if not np.any(probs > 0):
        raise DomainError("At least one activation probability must be positive.")
    return probs


def inclusion_weight_enumeration(probs, i: int) -> float:
    """E[X_i / sum_j X_j] summed over all 2^m activation patterns."""
    probs = _validated(probs)
    total = 0.0
    for masks, weights in activation_patterns(probs):
        sizes = masks.sum(axis=1)
        active = masks[:, i]
        total += float(np.sum(weights[active] / sizes[active]))
    return total


def inclusion_weight_closed_form(probs, i: int) -> float:
    probs = _validated(probs)
    return float(probs[i]) * _alternating_sum(np.delete(probs, i))


def inclusion_weight_oracle(probs, i: int) -> float:
    """
    E[X_i / sum_j X_j], by enumeration, after checking it against the
    alternating-sum identity.

    Raises:
        OracleMismatch: If the two computations differ by more than 1e-10.
    """
    probs = _validated(probs)
    if not 0 <= i < probs.shape[0]:
        raise DomainError(f"Client {i} is outside [0, {probs.shape[0]}).")
    enumerated = inclusion_weight_enumeration(probs, i)
    closed = inclusion_weight_closed_form(probs, i)
    if abs(enumerated - closed) > IDENTITY_TOLERANCE:
        raise OracleMismatch(
            f"Inclusion weight of client {i}: enumeration gives {enumerated!r}, the identity gives {closed!r}."
        )
    return enumerated


def participation_probability(probs) -> float:
    """P(A^t is not empty) = 1 - prod_i (1 - p_i)."""
    return 1.0 - float(np.prod(1.0 - np.asarray(probs, dtype=np.float64)))


def fedavg_bias_closedform(probs, optima) -> np.ndarray:
    """The limit of E[x^T] under FedAvg, from the alternating-sum identity (m <= 20)."""
    probs = _validated(probs)
    optima = as_model_matrix(optima, m=probs.shape[0])
    weights = np.array([inclusion_weight_closed_form(probs, i) for i in range(probs.shape[0])])
    return weights @ optima / participation_probability(probs)


def fedavg_bias_enumeration(probs, optima) -> np.ndarray:
    """The same limit, with every inclusion weight cross-checked by enumeration."""
    probs = _validated(probs)
    optima = as_model_matrix(optima, m=probs.shape[0])
    weights = np.array([inclusion_weight_oracle(probs, i) for i in range(probs.shape[0])])
    return weights @ optima / participation_probability(probs)


def _binomial_pmf(n: int, p: float) -> np.ndarray:
    return np.array([math.comb(n, k) * p ** k * (1.0 - p) ** (n - k) for k in range(n + 1)])


def two_group_bias(p0: float, p1: float, optima, split=None) -> np.ndarray:
    """
    The FedAvg limit when the first `split` clients (default m // 2) have
    probability p0 and the others p1.

    Clients within a group share one inclusion weight, and the number of other
    active clients is a sum of two binomials, so the weights cost O(m^2)
    instead of 2^m.
    """
    optima = as_model_matrix(optima)
    m = optima.shape[0]
    split = m // 2 if split is None else int(split)
    if not 0 <= split <= m:
        raise DomainError(f"The group split must lie in [0, {m}], got {split}.")
    validate_probs([p0, p1])
    sizes = (split, m - split)
    probs = (float(p0), float(p1))
    if not any(size and p > 0 for size, p in zip(sizes, probs)):
        raise DomainError("At least one activation probability must be positive.")

    weights = []
    for group, (size, p) in enumerate(zip(sizes, probs)):
        if size == 0:
            weights.append(0.0)
            continue
        other_size, other_p = sizes[1 - group], probs[1 - group]
        others = np.convolve(_binomial_pmf(size - 1, p), _binomial_pmf(other_size, other_p))
        weights.append(p * float(np.sum(others / np.arange(1, others.size + 1))))

    participation = 1.0 - (1.0 - probs[0]) ** sizes[0] * (1.0 - probs[1]) ** sizes[1]
    limit = (weights[0] * optima[:split].sum(axis=0) + weights[1] * optima[split:].sum(axis=0)) / participation
    logger.debug("Two-group limit for m=%d, p=(%g, %g): weights %s", m, p0, p1, weights)
    return limit
