"""
Exhaustive enumeration of the 2^m activation patterns of m independent
Bernoulli links.
"""

# Standard Library Imports
from typing import Iterator, Tuple

# Third-Party Imports
import numpy as np

# Local Imports
from core.exceptions import DomainError

MAX_ENUMERATION_CLIENTS = 20
CHUNK_SIZE = 1 << 14


def check_enumerable(m: int) -> None:
    if m < 1:
        raise DomainError("Enumeration needs at least one client.")
    if m > MAX_ENUMERATION_CLIENTS:
        raise DomainError(
            f"Exact enumeration is limited to m <= {MAX_ENUMERATION_CLIENTS} clients (got m={m}); "
            f"use the Monte Carlo estimate instead."
        )


def validate_probs(probs) -> np.ndarray:
    probs = np.array(probs, dtype=np.float64, ndmin=1)
    if probs.ndim != 1:
        raise DomainError(f"Probabilities must form a vector, got shape {probs.shape}.")
    if np.any(probs < 0) or np.any(probs > 1) or not np.all(np.isfinite(probs)):
        raise DomainError("Every probability must lie in [0, 1].")
    return probs


def activation_patterns(probs, chunk_size: int = CHUNK_SIZE) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
    """
    Yields (masks, weights) chunks covering all 2^m patterns in Gray-code
    order: masks is (n, m) boolean, weights[k] = prod_i p_i^a_i (1-p_i)^(1-a_i).

    Weights are computed as direct products, so p_i = 1 and p_i = 0 are exact.
    Chunks come in a fixed order, which keeps every reduction over them
    reproducible.
    """
    probs = validate_probs(probs)
    m = probs.shape[0]
    check_enumerable(m)
    bits = np.arange(m, dtype=np.int64)
    total = 1 << m
    for start in range(0, total, chunk_size):
        codes = np.arange(start, min(start + chunk_size, total), dtype=np.int64)
        gray = codes ^ (codes >> 1)
        masks = ((gray[:, None] >> bits) & 1).astype(bool)
        weights = np.where(masks, probs, 1.0 - probs).prod(axis=1)
        yield masks, weights
