"""
Local objectives F_i, their exact and stochastic gradients, and the global
objective F = (1/m) sum_i F_i.

Client models are handled in batches: `grads(X)` takes an (m, d) array whose
row i is client i's model and returns the matching (m, d) array of local
gradients.
"""

# Standard Library Imports
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass

# Third-Party Imports
import numpy as np

# Local Imports
from core.exceptions import DomainError
from core.rng import RngStream, as_generator
from core.vectors import as_model_matrix, as_model_vector

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GlobalMetrics:
    value: float
    grad_norm: float
    distance: float


@dataclass(frozen=True)
class GradSample:
    """One stochastic gradient and the per-coordinate noise level it was drawn with."""
    gradient: np.ndarray
    noise_std: float


class Objective(ABC):
    """A finite sum of m local objectives over R^d with a known minimizer x*."""
    kind = None

    @property
    @abstractmethod
    def m(self) -> int: ...

    @property
    @abstractmethod
    def d(self) -> int: ...

    @property
    @abstractmethod
    def optimum(self) -> np.ndarray:
        """The global minimizer x*."""

    @abstractmethod
    def local_values(self, x: np.ndarray) -> np.ndarray:
        """F_i(x) for every client."""

    @abstractmethod
    def grads(self, X: np.ndarray) -> np.ndarray:
        """Row i is the gradient of F_i at X[i]."""

    def value(self, x) -> float:
        return float(self.local_values(as_model_vector(x, self.d)).mean())

    def grad_exact(self, i: int, x) -> np.ndarray:
        x = as_model_vector(x, self.d)
        if not 0 <= i < self.m:
            raise DomainError(f"Client {i} is outside [0, {self.m}).")
        X = np.zeros((self.m, self.d))
        X[i] = x
        return self.grads(X)[i]

    def global_grad(self, x) -> np.ndarray:
        """The gradient of F, computed as the mean of the local gradients."""
        x = as_model_vector(x, self.d)
        return self.grads(np.tile(x, (self.m, 1))).mean(axis=0)


class QuadraticObjective(Objective):
    """F_i(x) = 1/2 ||x - u_i||^2, minimized globally at the mean of the u_i."""
    kind = 'quadratic'

    def __init__(self, optima):
        self.optima = as_model_matrix(optima)
        self._optimum = self.optima.mean(axis=0)

    @property
    def m(self):
        return self.optima.shape[0]

    @property
    def d(self):
        return self.optima.shape[1]

    @property
    def optimum(self):
        return self._optimum

    def local_values(self, x):
        return 0.5 * np.sum((x - self.optima) ** 2, axis=1)

    def grads(self, X):
        return X - self.optima

    def grad_exact(self, i, x):
        return as_model_vector(x, self.d) - self.optima[i]

    def global_grad(self, x):
        return as_model_vector(x, self.d) - self._optimum


class LeastSquaresObjective(Objective):
    """
    F_i(x) = 1/2 ||A_i x - b_i||^2 with per-client design matrices A_i of shape
    (n, d). The global minimizer solves (sum_i A_i^T A_i) x = sum_i A_i^T b_i.
    """
    kind = 'least_squares'

    def __init__(self, designs, targets):
        self.designs = np.asarray(designs, dtype=np.float64)
        self.targets = np.asarray(targets, dtype=np.float64)
        if self.designs.ndim != 3 or self.targets.shape != self.designs.shape[:2]:
            raise DomainError(
                f"Designs must be (m, n, d) and targets (m, n); got {self.designs.shape} and {self.targets.shape}."
            )
        gram = np.einsum('inj,ink->jk', self.designs, self.designs)
        moment = np.einsum('inj,in->j', self.designs, self.targets)
        try:
            self._optimum = np.linalg.solve(gram, moment)
        except np.linalg.LinAlgError as exc:
            raise DomainError("The stacked design matrix is rank deficient; x* is not unique.") from exc

    @classmethod
    def random(cls, m: int, d: int, rows: int, stream: RngStream, noise: float = 0.1) -> 'LeastSquaresObjective':
        """
        Synthetic heterogeneous instance: A_i has standard normal entries scaled
        by 1/sqrt(rows), and b_i = A_i w_i + noise with a client-specific w_i.
        """
        rng = stream.generator()
        designs = rng.standard_normal((m, rows, d)) / np.sqrt(rows)
        centers = rng.standard_normal((m, d))
        targets = np.einsum('inj,ij->in', designs, centers) + noise * rng.standard_normal((m, rows))
        return cls(designs, targets)

    @property
    def m(self):
        return self.designs.shape[0]

    @property
    def d(self):
        return self.designs.shape[2]

    @property
    def optimum(self):
        return self._optimum

    @property
    def smoothness(self) -> float:
        """The largest local smoothness constant max_i ||A_i||_2^2."""
        return float(max(np.linalg.norm(design, 2) ** 2 for design in self.designs))

    def local_values(self, x):
        residuals = np.einsum('inj,j->in', self.designs, x) - self.targets
        return 0.5 * np.sum(residuals ** 2, axis=1)

    def grads(self, X):
        residuals = np.einsum('inj,ij->in', self.designs, X) - self.targets
        return np.einsum('inj,in->ij', self.designs, residuals)


def sample_grad(obj: Objective, i: int, x, sigma: float, rng) -> GradSample:
    """The exact gradient of F_i at x plus isotropic Gaussian noise of std sigma."""
    if sigma < 0:
        raise DomainError(f"Gradient noise must be non-negative, got {sigma}.")
    gradient = obj.grad_exact(i, x)
    if sigma > 0:
        gradient = gradient + sigma * as_generator(rng).standard_normal(obj.d)
    return GradSample(gradient=gradient, noise_std=float(sigma))


def grad_stochastic(obj: Objective, i: int, x, sigma: float, rng) -> np.ndarray:
    return sample_grad(obj, i, x, sigma, rng).gradient


def global_metrics(obj: Objective, x_bar) -> GlobalMetrics:
    """F(x_bar), ||grad F(x_bar)|| and ||x_bar - x*||, in closed form."""
    x_bar = as_model_vector(x_bar, obj.d)
    return GlobalMetrics(
        value=obj.value(x_bar),
        grad_norm=float(np.linalg.norm(obj.global_grad(x_bar))),
        distance=float(np.linalg.norm(x_bar - obj.optimum)),
    )


def counterexample_optima(m: int, d: int, stream: RngStream, scale: float = 1e-3, std: float = 0.1) -> np.ndarray:
    """
    Local optima of the quadratic counterexample: client i (0-based) draws
    u_i ~ N(((i + 1) * scale) * 1, std^2 I).
    """
    if m < 1 or d < 1:
        raise DomainError(f"Counterexample needs positive m and d, got m={m}, d={d}.")
    means = (np.arange(1, m + 1, dtype=np.float64) * scale)[:, None]
    optima = means + std * stream.generator().standard_normal((m, d))
    logger.debug("Drew %d counterexample optima, mean of x* = %.6f", m, optima.mean())
    return optima
