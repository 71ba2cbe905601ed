"""Global, local and glocal resampling of (ancestor, sample) index pairs.

Indices are 0-based. Each resampled proposal inherits the location of the
selected sample and the scale object of its ancestor proposal.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .linalg import SeededRng
from .weighting import WeightedPopulation, degenerate_rows, global_normalize, local_normalize


class Scheme(str, Enum):
    GR = "GR"
    LR = "LR"
    GLR = "GLR"


@dataclass(frozen=True)
class ResamplingScheme:
    kind: Scheme = Scheme.LR
    period: int | None = None
    offset: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", Scheme(self.kind))
        if self.kind is Scheme.GLR:
            if self.period is None:
                raise ValueError("GLR resampling requires a period")
            if int(self.period) < 1:
                raise ValueError("GLR period must be >= 1")

    def is_global_at(self, t: int) -> bool:
        if self.kind is Scheme.GR:
            return True
        if self.kind is Scheme.LR:
            return False
        return (t - self.offset) % self.period == 0


@dataclass
class ResamplingOutcome:
    pairs: np.ndarray  # (N, 2): ancestor i_n, sample j_n
    means: np.ndarray  # (N, d)
    scales: list
    kind: Scheme
    degenerate: int = 0


def _generator(rng):
    return rng.generator() if isinstance(rng, SeededRng) else rng


def _inverse_cdf(weights: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Row-wise inverse-CDF lookup; ``weights`` is (R, C), ``u`` is (R,) in [0, 1)."""
    cums = np.cumsum(weights, axis=1)
    idx = np.sum(cums <= (u * cums[:, -1])[:, None], axis=1)
    return np.minimum(idx, weights.shape[1] - 1)


def _outcome(pop, proposals, ancestors, picks, kind, degenerate):
    pairs = np.stack([ancestors, picks], axis=1)
    return ResamplingOutcome(
        pairs=pairs,
        means=pop.samples[ancestors, picks].copy(),
        scales=[proposals[i].scale for i in ancestors],
        kind=kind,
        degenerate=degenerate,
    )


def resample_gr(pop: WeightedPopulation, proposals, rng) -> ResamplingOutcome:
    """N i.i.d. multinomial draws over all N*K cells."""
    N, K = pop.N, pop.K
    degenerate = int(np.all(degenerate_rows(pop.log_weights)))
    cums = np.cumsum(global_normalize(pop.log_weights).ravel())
    u = _generator(rng).random(N)
    flat = np.minimum(np.searchsorted(cums, u * cums[-1], side="right"), N * K - 1)
    return _outcome(pop, proposals, flat // K, flat % K, Scheme.GR, degenerate)


def resample_lr(pop: WeightedPopulation, proposals, rng) -> ResamplingOutcome:
    """One multinomial draw per row; ancestor ``i_n = n`` is kept."""
    N = pop.N
    degenerate = int(np.sum(degenerate_rows(pop.log_weights)))
    w = local_normalize(pop.log_weights)
    # u[n] is row n's own uniform, so rows do not depend on each other
    u = _generator(rng).random(N)
    return _outcome(pop, proposals, np.arange(N), _inverse_cdf(w, u), Scheme.LR, degenerate)


def resample_glr(pop, proposals, rng, t: int, period: int | None, offset: int = 0) -> ResamplingOutcome:
    """LR, except a GR step whenever ``(t - offset) % period == 0``; ``period=None`` never triggers."""
    if t < 1:
        raise ValueError("iterations are numbered from 1")
    if period is not None and (t - offset) % period == 0:
        return resample_gr(pop, proposals, rng)
    return resample_lr(pop, proposals, rng)


def resample(scheme: ResamplingScheme, pop, proposals, rng, t: int) -> ResamplingOutcome:
    if scheme.kind is Scheme.GR:
        return resample_gr(pop, proposals, rng)
    if scheme.kind is Scheme.LR:
        return resample_lr(pop, proposals, rng)
    return resample_glr(pop, proposals, rng, t, scheme.period, scheme.offset)
