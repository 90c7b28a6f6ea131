"""Thresholded orthogonal series estimator and its weighted-norm risk."""
from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from .errors import IndexDomainError
from .model import ObservationSet, ProblemInstance
from .weights import WeightSequence


@dataclass(frozen=True)
class EstimatorOutput:
    """Coefficients of the estimator with dimension ``k``.

    ``prefix_norms[m-1]`` is ``sum_{l<=m} omega_l c_l**2``, so the weighted
    distance between the estimators of dimension ``j >= k`` is
    ``prefix_norms[j-1] - prefix_norms[k-1]``.
    """

    k: int
    coeffs: np.ndarray
    prefix_norms: np.ndarray

    def truncate(self, k: int) -> "EstimatorOutput":
        if not 1 <= k <= self.k:
            raise IndexDomainError(f"dimension {k} outside 1..{self.k}")
        return EstimatorOutput(k, self.coeffs[:k], self.prefix_norms[:k])


def coefficient(Yj: float, Xj: float, eps: float) -> float:
    """``Y_j / X_j`` if ``X_j**2 >= eps``, else 0."""
    if Xj * Xj >= eps:
        return Yj / Xj
    return 0.0


def coefficients(Y, X, eps: float) -> np.ndarray:
    """Vectorized :func:`coefficient`; division only where the threshold passes."""
    Y = np.asarray(Y, dtype=float)
    X = np.asarray(X, dtype=float)
    keep = X * X >= eps
    return np.divide(Y, X, out=np.zeros(np.broadcast(Y, X).shape), where=keep)


def estimate(obs: ObservationSet, k: int, omega: WeightSequence) -> EstimatorOutput:
    if not 1 <= k <= obs.J:
        raise IndexDomainError(f"dimension k={k} outside 1..{obs.J}")
    c = coefficients(obs.Y[:k], obs.X[:k], obs.noise.eps)
    return EstimatorOutput(k, c, np.cumsum(omega.values(k) * c * c))


def tail_sums(instance: ProblemInstance, omega: WeightSequence) -> np.ndarray:
    """``T[k] = sum_{k < l <= J} omega_l f_l**2`` for ``k = 0..J``."""
    w = omega.values(instance.J) * instance.coeffs ** 2
    out = np.zeros(instance.J + 1)
    out[:-1] = np.cumsum(w[::-1])[::-1]
    return out


def projection_bias_sq(instance: ProblemInstance, omega: WeightSequence, k: int) -> float:
    """Squared projection bias ``sup_{j>=k} ||f - f_j||_omega**2``.

    Tail sums shrink as ``j`` grows, so the supremum is the tail beyond ``k``.
    """
    if not 1 <= k <= instance.J:
        raise IndexDomainError(f"dimension k={k} outside 1..{instance.J}")
    w = omega.values(instance.J)[k:] * instance.coeffs[k:] ** 2
    return math.fsum(w)


def risk_error_sq(est: EstimatorOutput, instance: ProblemInstance,
                  omega: WeightSequence, tails: np.ndarray | None = None) -> float:
    """``||f_hat_k - f||_omega**2`` against the truncated truth.

    ``tails`` may hold precomputed :func:`tail_sums` of the instance.
    """
    if est.k > instance.J:
        raise IndexDomainError("estimator dimension exceeds the instance length")
    w = omega.values(est.k)
    diff = est.coeffs - instance.coeffs[: est.k]
    if tails is None:
        tail = math.fsum(omega.values(instance.J)[est.k:] * instance.coeffs[est.k:] ** 2)
    else:
        tail = float(tails[est.k])
    return math.fsum(w * diff * diff) + tail


def projection_errors(est: EstimatorOutput, instance: ProblemInstance,
                      omega: WeightSequence) -> np.ndarray:
    """``||f_hat_j - f_j||_omega**2`` for ``j = 1..est.k``."""
    w = omega.values(est.k)
    diff = est.coeffs - instance.coeffs[: est.k]
    return np.cumsum(w * diff * diff)
