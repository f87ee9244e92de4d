"""
One-round state transitions of FedPBC and the baseline aggregation rules.

Every round function has the signature

    round_fn(state, active, cfg, obj, root_seed, probs=None) -> SimState

and returns a new state for round t + 1; the input state is not modified.
Local work of client i in round t draws its noise from the
(root_seed, 'grad', i, t) stream, so results do not depend on the order in
which clients are processed.
"""

# Standard Library Imports
import logging
from typing import Callable, Dict, Optional

# Third-Party Imports
import numpy as np

# Local Imports
from core.exceptions import DomainError
from core.rng import as_generator, derive_stream
from core.types import ActiveSet, SimState
from core.vectors import as_model_vector, ensure_finite
from objectives.functions import Objective, grad_stochastic

from .config import AlgorithmConfig, AlgorithmKind

logger = logging.getLogger(__name__)

GRAD_PURPOSE = 'grad'


def local_sgd(x, obj: Objective, i: int, s: int, eta: float, sigma: float, rng) -> np.ndarray:
    """
    s stochastic-gradient steps x <- x - eta * g from x on client i's
    objective, with eta fixed over the s steps. Returns x_i^{t*}.
    """
    if s < 1:
        raise DomainError(f"local_sgd needs s >= 1, got {s}.")
    x = as_model_vector(x, obj.d)
    generator = as_generator(rng) if sigma > 0 else None
    for _ in range(s):
        x = x - eta * grad_stochastic(obj, i, x, sigma, generator)
    return x


def local_sgd_all(X: np.ndarray, obj: Objective, s: int, eta: float, sigma: float,
                  root_seed: int, t: int) -> np.ndarray:
    """
    local_sgd for every client at once, row i of X starting client i. Client
    i's noise comes from its own (root_seed, 'grad', i, t) stream and is drawn
    in the same order as local_sgd draws it.
    """
    m, d = X.shape
    noise = None
    if sigma > 0:
        noise = np.stack([
            derive_stream(root_seed, GRAD_PURPOSE, i, t).generator().standard_normal((s, d))
            for i in range(m)
        ], axis=1)
    for k in range(s):
        gradients = obj.grads(X)
        if noise is not None:
            gradients = gradients + sigma * noise[k]
        X = X - eta * gradients
    return X


def _average(X_star: np.ndarray, members) -> np.ndarray:
    return X_star[list(members)].mean(axis=0)


def _weighted_server_step(x: np.ndarray, deltas: np.ndarray, weights: np.ndarray, m: int) -> np.ndarray:
    """x + (1/m) * sum_i weights_i * deltas_i"""
    return x + (weights[:, None] * deltas).sum(axis=0) / m


def _local_updates(state: SimState, starts: np.ndarray, cfg: AlgorithmConfig, obj: Objective, root_seed: int):
    return local_sgd_all(starts, obj, cfg.local_steps, cfg.lr_at(state.round), cfg.sigma, root_seed, state.round)


def _advance(state: SimState, active: ActiveSet, server_model, client_models, mifa_memory=None) -> SimState:
    ensure_finite(server_model, f"the server model after round {state.round}")
    ensure_finite(client_models, f"the client models after round {state.round}")
    following = SimState(
        round=state.round,
        server_model=server_model,
        client_models=client_models,
        last_active=state.last_active.copy(),
        mifa_memory=mifa_memory,
    )
    following.mark_active(active)
    following.round = state.round + 1
    return following


def _check_round(state: SimState, active: ActiveSet):
    if active.round != state.round:
        raise DomainError(f"Active set of round {active.round} applied to the state of round {state.round}.")
    active.mask(state.m)


def fedpbc_round(state: SimState, active: ActiveSet, cfg: AlgorithmConfig, obj: Objective,
                 root_seed: int, probs: Optional[np.ndarray] = None) -> SimState:
    """
    Every client runs its local steps from its own model. The server averages
    the results of the active clients and sends the average back to them
    only; inactive clients carry on from their own x_i^{t*}. With no active
    client the server model is unchanged.
    """
    _check_round(state, active)
    X_star = _local_updates(state, state.client_models, cfg, obj, root_seed)
    if not len(active):
        return _advance(state, active, state.server_model.copy(), X_star)
    server_model = _average(X_star, active)
    X_star[list(active)] = server_model
    return _advance(state, active, server_model, X_star)


def _broadcast_start(state: SimState) -> np.ndarray:
    return np.tile(state.server_model, (state.m, 1))


def fedavg_round(state, active, cfg, obj, root_seed, probs=None) -> SimState:
    """All clients restart from x^t; the server averages the active clients and broadcasts to everyone."""
    _check_round(state, active)
    X_star = _local_updates(state, _broadcast_start(state), cfg, obj, root_seed)
    server_model = _average(X_star, active) if len(active) else state.server_model.copy()
    return _advance(state, active, server_model, np.tile(server_model, (state.m, 1)))


def fedavg_all_round(state, active, cfg, obj, root_seed, probs=None) -> SimState:
    """
    x^{t+1} = x^t + (1/m) sum_{i in A^t} (x_i^{t*} - x^t): inactive clients
    count as zero updates.
    """
    _check_round(state, active)
    X_star = _local_updates(state, _broadcast_start(state), cfg, obj, root_seed)
    weights = active.mask(state.m).astype(np.float64)
    server_model = _weighted_server_step(state.server_model, X_star - state.server_model, weights, state.m)
    return _advance(state, active, server_model, np.tile(server_model, (state.m, 1)))


def fedavg_knownp_round(state, active, cfg, obj, root_seed, probs=None) -> SimState:
    """
    x^{t+1} = x^t + (1/m) sum_{i in A^t} (x_i^{t*} - x^t) / p_i^t, which is
    unbiased for the full-participation update.
    """
    _check_round(state, active)
    if probs is None:
        raise DomainError("FedAvg with known probabilities needs p_i^t for every client.")
    probs = np.asarray(probs, dtype=np.float64)
    if probs.shape != (state.m,):
        raise DomainError(f"Expected {state.m} activation probabilities, got shape {probs.shape}.")
    mask = active.mask(state.m)
    if np.any(probs[mask] <= 0):
        raise DomainError(f"Round {state.round}: an active client has activation probability 0.")
    weights = np.zeros(state.m)
    weights[mask] = 1.0 / probs[mask]
    X_star = _local_updates(state, _broadcast_start(state), cfg, obj, root_seed)
    server_model = _weighted_server_step(state.server_model, X_star - state.server_model, weights, state.m)
    return _advance(state, active, server_model, np.tile(server_model, (state.m, 1)))


def mifa_round(state, active, cfg, obj, root_seed, probs=None) -> SimState:
    """
    Active clients overwrite their stored update with x_i^{t*} - x^t; the
    server adds the mean of all stored updates, stale ones included. A client
    that has never been active contributes zero.
    """
    _check_round(state, active)
    memory = np.zeros_like(state.client_models) if state.mifa_memory is None else state.mifa_memory.copy()
    X_star = _local_updates(state, _broadcast_start(state), cfg, obj, root_seed)
    members = list(active)
    memory[members] = X_star[members] - state.server_model
    server_model = _weighted_server_step(state.server_model, memory, np.ones(state.m), state.m)
    return _advance(state, active, server_model, np.tile(server_model, (state.m, 1)), mifa_memory=memory)


RoundFunction = Callable[..., SimState]

ROUND_FUNCTIONS: Dict[str, RoundFunction] = {
    AlgorithmKind.FEDPBC: fedpbc_round,
    AlgorithmKind.FEDAVG: fedavg_round,
    AlgorithmKind.FEDAVG_ALL: fedavg_all_round,
    AlgorithmKind.FEDAVG_KNOWN_P: fedavg_knownp_round,
    AlgorithmKind.MIFA: mifa_round,
}


def round_function(kind: str) -> RoundFunction:
    try:
        return ROUND_FUNCTIONS[AlgorithmKind(kind)]
    except ValueError:
        raise DomainError(f"Unknown algorithm '{kind}'.")
