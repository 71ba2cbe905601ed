"""Importance weights for a population of N proposals x K samples."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .linalg import (
    DegenerateWeightsError,
    log_gaussian_pdf,
    log_gaussian_pdf_matrix,
    logsumexp,
    normalize_log_weights,
)

log = logging.getLogger(__name__)


@dataclass
class Proposal:
    """Gaussian proposal: location vector and SPD scale."""

    mean: np.ndarray
    scale: object  # SpdMatrix


@dataclass
class WeightedPopulation:
    """Samples ``(N, K, d)`` drawn row-wise from proposal ``n`` with their log-weights.

    ``log_target`` caches ``log_pi`` at each sample so adaptation can reuse it.
    """

    samples: np.ndarray
    log_weights: np.ndarray
    log_target: np.ndarray
    iteration: int = 1
    rule: str = "dm"

    @property
    def N(self) -> int:
        return self.samples.shape[0]

    @property
    def K(self) -> int:
        return self.samples.shape[1]

    @property
    def ancestor(self) -> np.ndarray:
        return np.repeat(np.arange(self.N)[:, None], self.K, axis=1)


def _flat(samples):
    N, K, d = samples.shape
    return samples.reshape(N * K, d)


def proposal_log_density_matrix(samples, proposals) -> np.ndarray:
    """``out[n, k, i] = log q_i(x_{n,k})``."""
    N, K, _ = samples.shape
    means = np.stack([p.mean for p in proposals])
    scales = [p.scale for p in proposals]
    return log_gaussian_pdf_matrix(_flat(samples), means, scales).reshape(N, K, len(proposals))


def smis_log_weights(samples, proposals, log_target) -> np.ndarray:
    """Standard MIS: ``log pi(x_{n,k}) - log q_n(x_{n,k})``."""
    own = np.stack(
        [np.atleast_1d(log_gaussian_pdf(samples[n], p.mean, p.scale)) for n, p in enumerate(proposals)]
    )
    return np.asarray(log_target) - own


def dmmis_log_weights(samples, proposals, log_target, strict: bool = True) -> np.ndarray:
    """Deterministic-mixture weights against the equal-weight mixture of the current proposals.

    With ``strict`` an all ``-inf`` result raises :class:`DegenerateWeightsError`;
    the samplers pass ``strict=False`` and count the event instead.
    """
    logq = proposal_log_density_matrix(samples, proposals)
    log_mix = logsumexp(logq, axis=2) - math.log(len(proposals))
    logw = np.asarray(log_target) - log_mix
    if strict and not np.any(np.isfinite(logw)):
        raise DegenerateWeightsError("every sample has zero weight")
    return logw


def global_normalize(log_weights) -> np.ndarray:
    """Weights normalized over all N*K cells; uniform if degenerate."""
    log_weights = np.asarray(log_weights, dtype=float)
    try:
        w, _ = normalize_log_weights(log_weights.ravel())
    except DegenerateWeightsError:
        log.warning("degenerate population weights; falling back to uniform")
        return np.full(log_weights.shape, 1.0 / log_weights.size)
    return w.reshape(log_weights.shape)


def local_normalize(log_weights) -> np.ndarray:
    """Weights normalized within each row; a degenerate row becomes uniform."""
    log_weights = np.atleast_2d(np.asarray(log_weights, dtype=float))
    out = np.empty_like(log_weights)
    for n, row in enumerate(log_weights):
        try:
            out[n], _ = normalize_log_weights(row)
        except DegenerateWeightsError:
            log.warning("degenerate weights in row %d; falling back to uniform", n)
            out[n] = 1.0 / row.size
    return out


def degenerate_rows(log_weights) -> np.ndarray:
    return ~np.any(np.isfinite(np.atleast_2d(log_weights)), axis=1)
