"""Consensus error of the client models."""

# Third-Party Imports
import numpy as np

# Local Imports
from core.vectors import as_model_matrix


def consensus_error(client_models) -> float:
    """(1/m) sum_i ||x_bar - x_i||^2, where x_bar is the plain mean of the client models."""
    X = as_model_matrix(client_models)
    return float(np.mean(np.sum((X - X.mean(axis=0)) ** 2, axis=1)))
