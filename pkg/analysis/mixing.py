"""
The mixing matrix W induced by an active set, its expected square
M = E[W^2], the second-largest eigenvalue rho = lambda_2(M), and the
ergodicity bounds rho is checked against.

W averages the models of the active clients and leaves everybody else alone.
It is a symmetric projection, so W^2 = W and
(W^2)_{jj'} = 1{j in A} 1{j' in A} / |A| off the inactive diagonal.
"""

# Standard Library Imports
import logging
from dataclasses import dataclass
from typing import Optional, Union

# Third-Party Imports
import numpy as np

# Local Imports
from core.exceptions import DomainError, OracleMismatch
from core.rng import derive_stream
from core.types import ActiveSet
from link_models.schemes import LinkModel

from .enumeration import activation_patterns, validate_probs

logger = logging.getLogger(__name__)

MC_PURPOSE = 'mixing-mc'
SYMMETRY_TOLERANCE = 1e-12
POWER_TOLERANCE = 1e-10
POWER_MAX_ITERATIONS = 100_000


def mixing_matrix(active: ActiveSet, m: int) -> np.ndarray:
    """
    W[i][j] = 1/|A| if i and j are both active, 1 on the diagonal of inactive
    clients and 0 elsewhere. The identity when |A| <= 1.
    """
    mask = active.mask(m)
    W = np.diag((~mask).astype(np.float64))
    if mask.any():
        W[np.ix_(mask, mask)] = 1.0 / mask.sum()
    return W


def mixing_square_closed_form(active: ActiveSet, m: int) -> np.ndarray:
    """(W^2)_{jj'} = 1{j in A} 1{j' in A} / |A|, plus 1 on the diagonal for j not in A."""
    a = active.mask(m).astype(np.float64)
    size = a.sum()
    outer = np.outer(a, a) / size if size else np.zeros((m, m))
    return outer + np.diag(1.0 - a)


def _pattern_sums(masks: np.ndarray, weights: np.ndarray, power: int = 1) -> np.ndarray:
    """
    sum_k weights[k] * W(A_k)^power for the patterns in `masks`, entrywise
    powers of W. A binary mask makes the cross terms of the diagonal vanish.
    """
    a = masks.astype(np.float64)
    sizes = a.sum(axis=1)
    inverse = np.divide(1.0, sizes, out=np.zeros_like(sizes), where=sizes > 0) ** power
    block = a.T @ (a * (weights * inverse)[:, None])
    return block + np.diag(((1.0 - a) * weights[:, None]).sum(axis=0))


def expected_W2_exact(probs) -> np.ndarray:
    """
    E[W^2] under independent Bernoulli(p_i) links, summed exactly over all
    2^m activation patterns (m <= 20).
    """
    probs = validate_probs(probs)
    if np.any(probs <= 0):
        raise DomainError("Every probability must lie in (0, 1].")
    m = probs.shape[0]
    M = np.zeros((m, m))
    for masks, weights in activation_patterns(probs):
        M += _pattern_sums(masks, weights)
    return M


def expected_W2_k_of_m(m: int, k: int) -> np.ndarray:
    """
    E[W^2] when exactly k of m clients are active, chosen uniformly: the
    off-diagonal entries are (k-1) / (m(m-1)) and the diagonal ones
    1 - k/m + 1/m.
    """
    if not 1 <= k <= m:
        raise DomainError(f"k must lie in [1, {m}], got {k}.")
    off_diagonal = (k - 1) / (m * (m - 1)) if m > 1 else 0.0
    M = np.full((m, m), off_diagonal)
    np.fill_diagonal(M, 1.0 - k / m + 1.0 / m)
    return M


@dataclass(frozen=True)
class MixingEstimate:
    """A Monte Carlo estimate of E[W^2] with its entrywise standard errors."""
    matrix: np.ndarray
    standard_error: np.ndarray
    samples: int

    @property
    def frobenius_error(self) -> float:
        """Standard error of the Frobenius distance to the exact matrix."""
        return float(np.sqrt(np.sum(self.standard_error ** 2)))


def _sample_seed(root_seed: int, index: int) -> int:
    """Root seed of one Monte Carlo sample. Per-run draws keyed on the root seed, such as cyclic offsets, differ between samples."""
    return derive_stream(root_seed, MC_PURPOSE, index).key


def _sample_masks(source: Union[LinkModel, np.ndarray], t: int, samples: int, root_seed: int) -> np.ndarray:
    if not isinstance(source, LinkModel):
        probs = validate_probs(source)
        return derive_stream(root_seed, MC_PURPOSE, round_=t).generator().random((samples, probs.size)) < probs
    masks = np.empty((samples, source.m), dtype=bool)
    for index in range(samples):
        seed = _sample_seed(root_seed, index)
        # Every sample starts from a model without run state.
        model = source.fresh()
        if model.memoryless:
            masks[index] = model.sample(t, derive_stream(seed, MC_PURPOSE, round_=t)).mask(model.m)
            continue
        # Chains are replayed from round 0.
        for r in range(t + 1):
            active = model.sample(r, derive_stream(seed, MC_PURPOSE, round_=r))
        masks[index] = active.mask(model.m)
    return masks


def sample_W2(source: Union[LinkModel, np.ndarray], t: int, samples: int, root_seed: int) -> MixingEstimate:
    """
    Averages W(A)^2 over `samples` draws of A^t, from independent Bernoulli
    links when `source` is a probability vector and from the link model
    otherwise.
    """
    if samples < 2:
        raise DomainError("The Monte Carlo estimate needs at least two samples.")
    masks = _sample_masks(source, t, samples, root_seed)
    weights = np.full(samples, 1.0 / samples)
    mean = _pattern_sums(masks, weights)
    mean_square = _pattern_sums(masks, weights, power=2)
    variance = np.clip(mean_square - mean ** 2, 0.0, None) * samples / (samples - 1)
    return MixingEstimate(matrix=mean, standard_error=np.sqrt(variance / samples), samples=samples)


def expected_W2_mc(source: Union[LinkModel, np.ndarray], t: int, samples: int, root_seed: int) -> np.ndarray:
    return sample_W2(source, t, samples, root_seed).matrix


def _check_symmetric(M: np.ndarray) -> np.ndarray:
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DomainError(f"Expected a square matrix, got shape {M.shape}.")
    if not np.allclose(M, M.T, rtol=0.0, atol=SYMMETRY_TOLERANCE):
        raise DomainError("The matrix is not symmetric.")
    return M


def rho_power_iteration(M: np.ndarray, tol: float = POWER_TOLERANCE, max_iterations: int = POWER_MAX_ITERATIONS) -> float:
    """
    lambda_2 of a symmetric, doubly stochastic, positive semidefinite M by
    power iteration on M - 11^T/m, which removes the top eigenvector 1/sqrt(m).
    """
    M = _check_symmetric(M)
    m = M.shape[0]
    if m == 1:
        return 0.0
    deflated = M - np.full((m, m), 1.0 / m)
    vector = derive_stream(0, 'power-iteration').generator().standard_normal(m)
    vector -= vector.mean()
    estimate = 0.0
    for _ in range(max_iterations):
        norm = np.linalg.norm(vector)
        if norm == 0:
            return 0.0
        vector = vector / norm
        following = deflated @ vector
        updated = float(vector @ following)
        if abs(updated - estimate) <= tol:
            return updated
        estimate, vector = updated, following
    logger.warning("Power iteration stopped after %d iterations without reaching %g.", max_iterations, tol)
    return estimate


def rho_of(M: np.ndarray) -> float:
    """
    The second-largest eigenvalue of a symmetric M, from a symmetric
    eigensolve. A 1x1 matrix has no second eigenvalue and gives 0.
    """
    M = _check_symmetric(M)
    if M.shape[0] == 1:
        return 0.0
    return float(np.linalg.eigvalsh(M)[-2])


def general_bound(c: float, m: int) -> float:
    """1 - c^4 [1 - (1-c)^m]^2 / 8"""
    return 1.0 - c ** 4 * (1.0 - (1.0 - c) ** m) ** 2 / 8.0


def uniform_k_bound(k: int, m: int) -> float:
    """1 - (k/m)^2 / 8"""
    return 1.0 - (k / m) ** 2 / 8.0


def irreducibility_bound(c: float, m: int) -> float:
    """Lower bound c^2 [1 - (1-c)^m] / m on every entry of M."""
    return c ** 2 * (1.0 - (1.0 - c) ** m) / m


@dataclass(frozen=True)
class SpectralReport:
    """
    M = E[W^2], rho = lambda_2(M) and the bounds rho is held to.

    `bound_general` applies to independent Bernoulli links. `bound_uniform_k`
    applies to the uniform k-of-m sampler with k >= 2: with k = 1 every W is
    the identity and rho = 1, so no bound below 1 can hold.
    """
    M: np.ndarray
    rho: float
    c: float
    bound_general: Optional[float]
    bound_uniform_k: Optional[float] = None
    k: Optional[int] = None
    min_entry: float = 0.0
    bound_irreducibility: Optional[float] = None

    @property
    def m(self) -> int:
        return self.M.shape[0]

    @property
    def bound(self) -> Optional[float]:
        return self.bound_uniform_k if self.k is not None else self.bound_general

    @property
    def bound_applies(self) -> bool:
        return self.bound is not None

    @property
    def passed(self) -> bool:
        rho_ok = not self.bound_applies or self.rho <= self.bound + POWER_TOLERANCE
        floor_ok = self.bound_irreducibility is None or self.min_entry >= self.bound_irreducibility - 1e-15
        return rho_ok and floor_ok

    def assert_bounds(self) -> 'SpectralReport':
        """
        Raises:
            OracleMismatch: If rho exceeds the applicable bound, or an entry of
            M falls below the irreducibility bound.
        """
        if not self.passed:
            raise OracleMismatch(
                f"Spectral bound violated: rho={self.rho:.12g}, bound={self.bound}, "
                f"min entry={self.min_entry:.12g}, irreducibility bound={self.bound_irreducibility}."
            )
        return self

    def as_dict(self):
        return {
            'm': self.m,
            'k': self.k,
            'c': self.c,
            'rho': self.rho,
            'bound_general': self.bound_general,
            'bound_uniform_k': self.bound_uniform_k,
            'min_entry': self.min_entry,
            'bound_irreducibility': self.bound_irreducibility,
            'passed': self.passed,
            'M': self.M.tolist(),
        }


def ergodicity_check(probs=None, m: Optional[int] = None, k: Optional[int] = None) -> SpectralReport:
    """
    Computes M exactly and compares rho = lambda_2(M) with the ergodicity
    bounds.

    With `k` set, the links follow the uniform k-of-m sampler (c = k/m) and
    `m` is required; otherwise they are independent Bernoulli links with the
    given probabilities (c = min p_i, m <= 20). The report is returned
    unchecked; call `assert_bounds` to enforce it.
    """
    if k is not None:
        if m is None:
            raise DomainError("The k-of-m sampler needs the client count m.")
        M = expected_W2_k_of_m(m, k)
        c = k / m
        report = SpectralReport(
            M=M, rho=rho_of(M), c=c, bound_general=None,
            bound_uniform_k=uniform_k_bound(k, m) if k >= 2 else None, k=k,
            min_entry=float(M.min()),
        )
    else:
        probs = validate_probs(probs)
        if m is not None and probs.shape[0] != m:
            raise DomainError(f"Expected {m} probabilities, got {probs.shape[0]}.")
        M = expected_W2_exact(probs)
        m = probs.shape[0]
        c = float(probs.min())
        report = SpectralReport(
            M=M, rho=rho_of(M), c=c, bound_general=general_bound(c, m),
            min_entry=float(M.min()), bound_irreducibility=irreducibility_bound(c, m),
        )
    if k == 1:
        logger.info("k=1: every round's W is the identity, so rho=1 and the k-of-m bound does not apply.")
    logger.debug("Spectral report: m=%d c=%.4f rho=%.6f", report.m, report.c, report.rho)
    return report
