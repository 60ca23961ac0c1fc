#!/usr/bin/env python3
"""Joint outage probabilities of branch sets under a Gaussian copula.

Each branch i has a latent normal variable X_i ~ N(1, sigma_i^2) and is out
when X_i <= 0, so sigma_i is chosen to make P(X_i <= 0) equal the branch's
independent outage probability. Latent variables are correlated by

    rho_ij = rho0 * exp(-d_ij / L)

with d_ij the inter-branch distance, and the joint outage probability of
a set is the orthant probability P(X <= 0).
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import DomainError, NotRepairable, ToleranceNotMet, ValidationError
from .geometry import BranchDistances
from .grid_model import GridCase
from .mvn import DEFAULT_ABS_TOL, DEFAULT_REL_TOL, lower_orthant

logger = logging.getLogger(__name__)

MIN_SET_SIZE = 2
MAX_SET_SIZE = 5
BIVARIATE_TOL = 1e-10
PSD_TOL = 1e-10
REPAIR_TOL = 1e-6

DistanceFunction = Callable[[int, int], float]


@dataclass(frozen=True)
class Marginal:
    p: float
    sigma: float
    mu: float = 1.0

    @property
    def threshold(self) -> float:
        """Standardized outage threshold (0 - mu) / sigma."""
        return -self.mu / self.sigma

    def cdf_at_zero(self) -> float:
        return float(ndtr(self.threshold))


def calibrate_marginal(p: float) -> Marginal:
    """Marginal with mean 1 whose CDF at 0 equals ``p``.

    sigma = -1 / (erfinv(2p - 1) * sqrt(2)), evaluated as -1 / ndtri(p),
    which is the same quantity without the cancellation in 2p - 1.

    Raises:
        DomainError: unless 0 < p < 0.5
    """
    if not 0.0 < p < 0.5:
        raise DomainError(f"Marginal calibration needs 0 < p < 0.5, got {p}")
    return Marginal(p=float(p), sigma=float(-1.0 / ndtri(p)))


@dataclass(frozen=True)
class CorrelationModel:
    """Exponential-decay spatial correlation.

    L = 0 is accepted as the limit of no spatial reach: only coincident
    (parallel) branches are correlated, at rho0.
    """

    rho0: float
    L: float
    distance: Optional[DistanceFunction] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if not 0.0 <= self.rho0 < 1.0:
            raise ValidationError(f"rho0 must lie in [0, 1), got {self.rho0}")
        if not self.L >= 0.0:
            raise ValidationError(f"L must be >= 0 km, got {self.L}")

    @property
    def key(self) -> tuple[float, float]:
        return (self.rho0, self.L)

    def bind(self, case: GridCase, distances: Optional[BranchDistances] = None) -> "CorrelationModel":
        """Attach the case's spatial distance when no distance function is set."""
        if self.distance is not None:
            return self
        return replace(self, distance=distances or BranchDistances(case))


def correlation(model: CorrelationModel, d_km: float) -> float:
    if d_km < 0:
        raise DomainError(f"Distance must be >= 0, got {d_km}")
    if model.rho0 == 0.0:
        return 0.0
    if model.L == 0.0:
        return model.rho0 if d_km == 0.0 else 0.0
    return model.rho0 * math.exp(-d_km / model.L)


@dataclass(frozen=True)
class CovarianceMatrix:
    matrix: np.ndarray
    repaired: bool = False

    @property
    def k(self) -> int:
        return self.matrix.shape[0]

    @property
    def sigmas(self) -> np.ndarray:
        return np.sqrt(np.diag(self.matrix))

    @property
    def correlation(self) -> np.ndarray:
        s = self.sigmas
        return self.matrix / np.outer(s, s)


def _repair(cov: np.ndarray) -> np.ndarray:
    values, vectors = np.linalg.eigh(cov)
    values = np.maximum(values, 0.0)
    return vectors @ np.diag(values) @ vectors.T


def build_covariance(
    marginals: Sequence[Marginal], model: CorrelationModel, branches: Sequence[int]
) -> CovarianceMatrix:
    """C_ii = sigma_i^2 and C_ij = rho_ij sigma_i sigma_j.

    A matrix whose smallest eigenvalue is below -1e-10 * trace is repaired
    by clipping negative eigenvalues to zero.

    Raises:
        ValidationError: for set sizes outside 2..5 or a model without distance
        NotRepairable: if the repair moves any correlation by more than 1e-6
    """
    k = len(marginals)
    if not MIN_SET_SIZE <= k <= MAX_SET_SIZE:
        raise ValidationError(f"Covariance supports {MIN_SET_SIZE}..{MAX_SET_SIZE} branches, got {k}")
    if len(branches) != k:
        raise ValidationError(f"{len(branches)} branches for {k} marginals")
    if model.distance is None and model.rho0 > 0:
        raise ValidationError("Correlation model has no distance function; call bind(case) first")

    rho = np.eye(k)
    for i in range(k):
        for j in range(i + 1, k):
            d = model.distance(branches[i], branches[j]) if model.rho0 > 0 else 0.0
            rho[i, j] = rho[j, i] = correlation(model, d)

    sigmas = np.array([m.sigma for m in marginals])
    cov = rho * np.outer(sigmas, sigmas)
    smallest = float(np.linalg.eigvalsh(cov).min())
    if smallest >= -PSD_TOL * float(np.trace(cov)):
        return CovarianceMatrix(cov)

    repaired = _repair(cov)
    s = np.sqrt(np.diag(repaired))
    drift = float(np.max(np.abs(repaired / np.outer(s, s) - rho)))
    if drift > REPAIR_TOL:
        raise NotRepairable(
            f"Covariance for branches {list(branches)} is indefinite (min eigenvalue {smallest:.3e}); "
            f"repair would move correlations by {drift:.3e}"
        )
    logger.warning("Repaired indefinite covariance for branches %s (min eigenvalue %.3e)", list(branches), smallest)
    return CovarianceMatrix(repaired, repaired=True)


@dataclass(frozen=True)
class JointOutageProbability:
    value: float
    abs_error_estimate: float
    method: str = ""
    tolerance_met: bool = True


def frechet_bounds(probabilities: Sequence[float]) -> tuple[float, float]:
    return max(0.0, sum(probabilities) - (len(probabilities) - 1)), min(probabilities)


def joint_outage_probability(
    marginals: Sequence[Marginal],
    cov: CovarianceMatrix,
    rng: Optional[np.random.Generator] = None,
    abs_tol: float = DEFAULT_ABS_TOL,
    rel_tol: float = DEFAULT_REL_TOL,
    strict: bool = False,
) -> JointOutageProbability:
    """P(X <= 0) for X ~ N(mu, C) with the marginals' means.

    Two branches are evaluated deterministically; three or more by lattice
    integration with an error estimate. The lattice refines toward
    min(abs_tol, rel_tol * value), but the result only has to meet abs_tol.

    Raises:
        ToleranceNotMet: if ``strict`` and the error estimate exceeds the target
    """
    k = len(marginals)
    if cov.k != k:
        raise ValidationError(f"Covariance is {cov.k}x{cov.k} for {k} marginals")
    sigmas = cov.sigmas
    upper = np.array([-m.mu for m in marginals]) / sigmas
    result = lower_orthant(upper, cov.correlation, rng=rng, abs_tol=abs_tol, rel_tol=rel_tol)

    value = result.value
    probabilities = [m.p for m in marginals]
    lower, upper_bound = frechet_bounds(probabilities)
    if value > upper_bound or value < lower:
        if value > upper_bound + result.error + 1e-15 or value < lower - result.error - 1e-15:
            logger.warning(
                "Joint probability %.6e outside Frechet bounds [%.6e, %.6e]", value, lower, upper_bound
            )
        value = min(max(value, lower), upper_bound)
    target = BIVARIATE_TOL if k == 2 else abs_tol
    met = result.error <= target
    if not met:
        message = f"Orthant error estimate {result.error:.3e} exceeds target {target:.3e} (k={k})"
        if strict:
            raise ToleranceNotMet(message)
        logger.warning(message)
    return JointOutageProbability(value, result.error, result.method, met)


def contingency_joint(
    case: GridCase, omega: Sequence[int], model: CorrelationModel, **kwargs
) -> JointOutageProbability:
    """Joint outage probability of branch set ``omega`` on ``case``."""
    branches = tuple(sorted(omega))
    if len(set(branches)) != len(branches):
        raise ValidationError(f"Branch set repeats a branch: {omega}")
    probabilities = [case.branch_probability(b) for b in branches]
    if min(probabilities) == 0.0:
        return JointOutageProbability(0.0, 0.0, "zero-marginal")
    marginals = [calibrate_marginal(p) for p in probabilities]
    cov = build_covariance(marginals, model.bind(case), branches)
    return joint_outage_probability(marginals, cov, **kwargs)


def contingency_probability(case: GridCase, omega: Sequence[int], model: CorrelationModel) -> float:
    return contingency_joint(case, omega, model).value


class ProbabilityCache:
    """Joint probabilities keyed by (sorted branch set, rho0, L) for one case.

    Values are deterministic, so concurrent inserts of the same key agree.
    """

    def __init__(self, case: GridCase):
        self.case = case
        self.distances = BranchDistances(case)
        self._values: dict[tuple, JointOutageProbability] = {}
        self.hits = 0

    def __len__(self) -> int:
        return len(self._values)

    def joint(self, omega: Sequence[int], model: CorrelationModel) -> JointOutageProbability:
        key = (tuple(sorted(omega)), model.rho0, model.L)
        if key in self._values:
            self.hits += 1
            return self._values[key]
        value = contingency_joint(self.case, omega, model.bind(self.case, self.distances))
        self._values[key] = value
        return value

    def probability(self, omega: Sequence[int], model: CorrelationModel) -> float:
        return self.joint(omega, model).value
