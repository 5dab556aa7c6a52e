"""Soft assignments, the sharpened target distribution and the KL objectives."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateClusterError, DimensionError, InfiniteDivergenceError, ParameterError
from .tensor import LOG_FLOOR, as_matrix, student_t_assign

ALPHA = 0.1
BETA = 0.01


@dataclass
class ClusterCenters:
    mu: np.ndarray
    v: float = 1.0

    def __post_init__(self):
        self.mu = as_matrix(self.mu)
        if self.mu.shape[0] < 1:
            raise ParameterError("need at least one center")
        if self.v <= 0:
            raise ParameterError("degrees of freedom must be positive")
        if not np.all(np.isfinite(self.mu)):
            raise ParameterError("centers must be finite")

    @property
    def k(self) -> int:
        return self.mu.shape[0]


def soft_assignment(h, centers: ClusterCenters) -> np.ndarray:
    return student_t_assign(h, centers.mu, centers.v)


def target_distribution(q) -> np.ndarray:
    """Square each assignment, divide by the soft cluster frequency, renormalise rows."""
    q = as_matrix(q)
    f = q.sum(axis=0)
    if np.any(f <= 0):
        raise DegenerateClusterError(f"clusters {np.flatnonzero(f <= 0).tolist()} have zero frequency")
    w = q * q / f
    return w / w.sum(axis=1, keepdims=True)


def kl_divergence(p, q) -> float:
    """sum_ij p_ij log(p_ij / q_ij) with 0 log 0 = 0."""
    p = as_matrix(p)
    q = as_matrix(q)
    if p.shape != q.shape:
        raise DimensionError(f"{p.shape} vs {q.shape}")
    pos = p > 0
    if np.any(q[pos] <= 0):
        raise InfiniteDivergenceError("q vanishes where p has mass")
    return float(np.sum(p[pos] * np.log(p[pos] / q[pos])))


def clamped_kl(p, q) -> float:
    """KL with q floored at 1e-12, the form used inside training."""
    return kl_divergence(p, np.maximum(as_matrix(q), LOG_FLOOR))


def total_loss(l_res: float, l_clu: float, l_gcn: float, alpha: float = ALPHA, beta: float = BETA) -> float:
    return l_res + alpha * l_clu + beta * l_gcn


def hard_labels(z) -> np.ndarray:
    # argmax returns the first maximal index, i.e. the lowest cluster id on ties
    return np.argmax(as_matrix(z), axis=1)


def row_entropy(p) -> np.ndarray:
    p = as_matrix(p)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, -p * np.log(p), 0.0)
    return terms.sum(axis=1)
