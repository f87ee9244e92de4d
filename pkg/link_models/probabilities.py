"""
Construction of the base activation probabilities p_i and of their
time-varying form p_i^t = p_i * [(1 - gamma) + gamma * sin(2 pi t / P)].
"""

# Standard Library Imports
import logging
from dataclasses import dataclass

# Third-Party Imports
import numpy as np

# Local Imports
from core.exceptions import ConfigurationError, DomainError
from core.rng import RngStream

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ProbConstructionConfig:
    """
    Parameters of the base-probability pipeline: client class mixtures
    nu_i ~ Dirichlet(alpha), class contributions r' ~ lognormal(mu0, sigma0^2),
    clipping floor delta, and the fluctuation amplitude gamma and period P of
    p_i^t.
    """
    m: int
    num_classes: int = 10
    alpha: float = 0.1
    mu0: float = 0.0
    sigma0: float = 10.0
    delta: float = 0.02
    gamma: float = 0.0
    period: float = 40.0
    allow_zero_floor: bool = False

    @property
    def implied_floor(self) -> float:
        """The lower bound delta * (1 - 2 gamma) of p_i^t."""
        return self.delta * (1.0 - 2.0 * self.gamma)

    def clean(self):
        """
        Validates the configuration.

        A fluctuation amplitude gamma >= 1/2 lets p_i^t reach zero at the sine
        trough. Such configurations are rejected unless `allow_zero_floor` is
        set, in which case they are only logged.

        Raises:
            ConfigurationError: Keyed by the offending parameter.
        """
        errors = {}
        if self.m < 1:
            errors['m'] = ["The client count must be positive."]
        if self.num_classes < 1:
            errors['num_classes'] = ["The class count must be positive."]
        if not self.alpha > 0:
            errors['alpha'] = ["The Dirichlet concentration must be positive."]
        if self.sigma0 < 0:
            errors['sigma0'] = ["The lognormal scale must be non-negative."]
        if not 0.0 <= self.delta < 1.0:
            errors['delta'] = ["The clipping floor must lie in [0, 1)."]
        if not 0.0 <= self.gamma <= 1.0:
            errors['gamma'] = ["The fluctuation amplitude must lie in [0, 1]."]
        if not self.period > 0:
            errors['period'] = ["The sine period must be positive."]
        if errors:
            raise ConfigurationError(errors)

        if self.gamma >= 0.5:
            message = (
                f"gamma={self.gamma} lets p_i^t fall to {min(self.implied_floor, 0.0):g} at the sine "
                f"trough; the activation probabilities have no positive lower bound."
            )
            if not self.allow_zero_floor:
                raise ConfigurationError({'gamma': [message]})
            logger.warning(message)
        elif self.delta == 0.0:
            logger.debug("delta=0: the lower bound of p_i depends on the drawn probabilities.")


def construct_base_probs(cfg: ProbConstructionConfig, stream: RngStream) -> np.ndarray:
    """
    Draws the base probabilities p_i = <r, nu_i>, clipped to at least delta.

    The Dirichlet draws are normalized Gamma(alpha, 1) variates and the
    lognormal draws are exp(mu0 + sigma0 * z) with z standard normal. The
    contribution vector r' is normalized by its l1 norm.
    """
    cfg.clean()
    rng = stream.generator()

    gammas = rng.standard_gamma(cfg.alpha, size=(cfg.m, cfg.num_classes))
    totals = gammas.sum(axis=1, keepdims=True)
    if np.any(totals <= 0):
        raise DomainError("A Dirichlet draw underflowed to zero; increase alpha.")
    mixtures = gammas / totals

    # Computed in log space and shifted by the maximum so exp never overflows.
    log_r = cfg.mu0 + cfg.sigma0 * rng.standard_normal(cfg.num_classes)
    r = np.exp(log_r - log_r.max())
    r /= r.sum()

    probs = np.clip(mixtures @ r, 0.0, 1.0)
    probs = np.maximum(cfg.delta, probs)
    if np.any(probs <= 0):
        raise DomainError("A base probability underflowed to zero; set delta > 0.")
    return probs


def time_varying_probs(base_probs: np.ndarray, gamma: float, period: float, t: int) -> np.ndarray:
    """
    p_i^t = p_i * [(1 - gamma) + gamma * sin(2 pi t / P)], floored at zero
    when gamma > 1/2 would make it negative.
    """
    if t < 0:
        raise DomainError(f"Round index must be non-negative, got {t}.")
    factor = (1.0 - gamma) + gamma * np.sin(2.0 * np.pi * t / period)
    return np.maximum(np.asarray(base_probs, dtype=np.float64) * factor, 0.0)


def half_split_probs(m: int, p0: float, p1: float) -> np.ndarray:
    """The first m // 2 clients get p0, the remaining ones p1."""
    probs = np.full(m, float(p1))
    probs[: m // 2] = p0
    return probs
