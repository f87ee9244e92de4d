"""
Helpers for model vectors.

A model vector is a dense one-dimensional float64 numpy array of the
experiment's dimension d. Collections of m client models are stored as an
(m, d) array, one client per row.
"""

# Standard Library Imports
from typing import Optional

# Third-Party Imports
import numpy as np

# Local Imports
from .exceptions import DomainError, OracleMismatch


def as_model_vector(values, d: Optional[int] = None) -> np.ndarray:
    """
    Converts `values` to a float64 model vector, checking its dimension.

    Raises:
        DomainError: If the input is not one-dimensional or its length is not `d`.
    """
    vector = np.array(values, dtype=np.float64, ndmin=1)
    if vector.ndim != 1:
        raise DomainError(f"A model vector must be one-dimensional, got shape {vector.shape}.")
    if d is not None and vector.shape[0] != d:
        raise DomainError(f"Dimension mismatch: expected {d}, got {vector.shape[0]}.")
    return vector


def as_model_matrix(rows, m: Optional[int] = None, d: Optional[int] = None) -> np.ndarray:
    """Converts `rows` to an (m, d) float64 array; scalars per client become d = 1."""
    matrix = np.array(rows, dtype=np.float64)
    if matrix.ndim == 1:
        matrix = matrix[:, None]
    if matrix.ndim != 2:
        raise DomainError(f"Client models must form an (m, d) array, got shape {matrix.shape}.")
    if m is not None and matrix.shape[0] != m:
        raise DomainError(f"Expected {m} client rows, got {matrix.shape[0]}.")
    if d is not None and matrix.shape[1] != d:
        raise DomainError(f"Dimension mismatch: expected {d}, got {matrix.shape[1]}.")
    return matrix


def ensure_finite(array: np.ndarray, what: str) -> np.ndarray:
    """
    Raises:
        OracleMismatch: If any entry of `array` is NaN or infinite.
    """
    if not np.all(np.isfinite(array)):
        raise OracleMismatch(f"Non-finite values in {what}.")
    return array
