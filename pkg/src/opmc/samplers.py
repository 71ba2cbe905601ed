"""PMC iteration loops and the importance-sampling estimators built on them.

Three loops share one driver:

* standard PMC: one sample per proposal, s-MIS weights, global resampling of
  the locations, fixed isotropic scale;
* DM-PMC (GR-PMC / LR-PMC): K samples per proposal, deterministic-mixture
  weights, resampled locations become the next means, fixed scale;
* O-PMC: as DM-PMC, followed by a damped-Newton step on every resampled
  proposal that moves the mean and replaces the scale.

Randomness is keyed by ``(t, stage)`` substreams of the run's
:class:`~opmc.linalg.SeededRng`, so a run is a pure function of its seed.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .adaptation import AdaptationConfig, NumericalTargetError, adapt_proposal
from .linalg import SeededRng, SpdMatrix, logsumexp
from .resampling import ResamplingScheme, Scheme, resample
from .weighting import Proposal, WeightedPopulation, dmmis_log_weights, smis_log_weights

log = logging.getLogger(__name__)

STAGE_INIT = 0
STAGE_SAMPLE = 1
STAGE_RESAMPLE = 2


class Algorithm(str, Enum):
    STANDARD_PMC = "STANDARD_PMC"
    DM_PMC = "DM_PMC"
    OPMC = "OPMC"


class Quantity(str, Enum):
    Z = "Z"
    MEAN = "MEAN"
    SECOND_MOMENT = "SECOND_MOMENT"


@dataclass
class SamplerConfig:
    N: int = 50
    K: int = 20
    T: int = 20
    sigma: float = 1.0
    algorithm: Algorithm = Algorithm.OPMC
    scheme: ResamplingScheme = field(default_factory=ResamplingScheme)
    adaptation: AdaptationConfig = field(default_factory=AdaptationConfig)
    init_means: np.ndarray | None = None
    retain_populations: bool = True

    def __post_init__(self):
        self.algorithm = Algorithm(self.algorithm)
        if not isinstance(self.scheme, ResamplingScheme):
            self.scheme = ResamplingScheme(self.scheme)

    def validate(self) -> None:
        for name in ("N", "K", "T"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.init_means is not None and np.shape(self.init_means)[0] != self.N:
            raise ValueError("init_means must have N rows")
        if self.algorithm is Algorithm.STANDARD_PMC:
            if self.K != 1:
                raise ValueError("standard PMC draws one sample per proposal (K = 1)")
            if self.scheme.kind is not Scheme.GR:
                raise ValueError("standard PMC uses global resampling")
        elif self.algorithm is Algorithm.DM_PMC and self.scheme.kind is Scheme.GLR:
            raise ValueError("DM-PMC supports GR or LR resampling")

    def budget(self) -> dict:
        """Worst-case target evaluation counts for one run."""
        NT = self.N * self.T
        opt = self.algorithm is Algorithm.OPMC
        return {
            "log_pi_weighting": self.N * self.K * self.T,
            "grad": NT if opt else 0,
            "hess": NT if opt else 0,
            "log_pi_backtracking": NT * (self.adaptation.max_backtracks + 1) if opt else 0,
        }


@dataclass
class IterationSummary:
    """Per-iteration reductions sufficient for any windowed estimator."""

    log_weight_sum: float
    n_samples: int
    mean: np.ndarray
    second_moment: np.ndarray


@dataclass
class RunDiagnostics:
    log_pi_weighting: int = 0
    log_pi_adaptation: int = 0
    grad_evals: int = 0
    hess_evals: int = 0
    hessian_used: int = 0
    inherited: int = 0
    backtracks: int = 0
    theta_zero: int = 0
    degenerate_fallbacks: int = 0
    monotone_violations: int = 0
    global_resampling_steps: int = 0

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class RunRecord:
    config: SamplerConfig
    seed: int
    summaries: list[IterationSummary] = field(default_factory=list)
    populations: list[WeightedPopulation] | None = None
    proposal_means: list[np.ndarray] = field(default_factory=list)
    proposal_scales: list[list[SpdMatrix]] = field(default_factory=list)
    diagnostics: RunDiagnostics = field(default_factory=RunDiagnostics)
    wall_time: float = 0.0

    @property
    def T(self) -> int:
        return len(self.summaries)


def _summarize(samples: np.ndarray, log_weights: np.ndarray) -> IterationSummary:
    d = samples.shape[-1]
    x = samples.reshape(-1, d)
    lw = log_weights.ravel()
    lse = float(logsumexp(lw)) if np.any(np.isfinite(lw)) else -np.inf
    if np.isfinite(lse):
        w = np.exp(lw - lse)
    else:
        w = np.full(lw.size, 1.0 / lw.size)
    return IterationSummary(lse, lw.size, w @ x, w @ (x * x))


def _draw(means: np.ndarray, scales, K: int, gen: np.random.Generator) -> np.ndarray:
    N, d = means.shape
    z = gen.standard_normal((N, K, d))
    chols = np.stack([s.chol for s in scales])
    return means[:, None, :] + z @ np.swapaxes(chols, 1, 2)


def _as_rng(rng) -> SeededRng:
    return rng if isinstance(rng, SeededRng) else SeededRng(int(rng))


def run_pmc(target, cfg: SamplerConfig, rng) -> RunRecord:
    """Run the loop selected by ``cfg.algorithm``."""
    cfg.validate()
    rng = _as_rng(rng)
    started = time.perf_counter()
    N, K, T, d = cfg.N, cfg.K, cfg.T, target.dim
    record = RunRecord(config=cfg, seed=rng.seed, populations=[] if cfg.retain_populations else None)
    diag = record.diagnostics

    if cfg.init_means is not None:
        means = np.array(cfg.init_means, dtype=float).reshape(N, d)
    else:
        means = target.initial_means(rng.spawn(0, STAGE_INIT).generator(), N)
    base_scale = SpdMatrix.identity(d, cfg.sigma**2)
    scales = [base_scale] * N
    optimize = cfg.algorithm is Algorithm.OPMC
    if optimize and cfg.scheme.kind is Scheme.GR:
        log.warning("O-PMC with global resampling at every iteration loses proposal diversity")

    for t in range(1, T + 1):
        record.proposal_means.append(means.copy())
        record.proposal_scales.append(list(scales))
        proposals = [Proposal(means[n], scales[n]) for n in range(N)]

        samples = _draw(means, scales, K, rng.spawn(t, STAGE_SAMPLE).generator())
        log_target = target.log_pi(samples.reshape(N * K, d)).reshape(N, K)
        diag.log_pi_weighting += N * K
        if cfg.algorithm is Algorithm.STANDARD_PMC:
            log_w = smis_log_weights(samples, proposals, log_target)
        else:
            log_w = dmmis_log_weights(samples, proposals, log_target, strict=False)
        pop = WeightedPopulation(samples, log_w, log_target, iteration=t,
                                 rule="smis" if cfg.algorithm is Algorithm.STANDARD_PMC else "dm")
        record.summaries.append(_summarize(samples, log_w))
        if record.populations is not None:
            record.populations.append(pop)

        outcome = resample(cfg.scheme, pop, proposals, rng.spawn(t, STAGE_RESAMPLE), t)
        diag.degenerate_fallbacks += outcome.degenerate
        diag.global_resampling_steps += int(outcome.kind is Scheme.GR)

        if not optimize:
            means = outcome.means
            continue

        new_means = np.empty_like(means)
        new_scales = []
        for n, (i, j) in enumerate(outcome.pairs):
            try:
                adapted = adapt_proposal(
                    target, outcome.means[n], outcome.scales[n], cfg.adaptation,
                    log_pi_mu=float(log_target[i, j]),
                )
            except NumericalTargetError as exc:
                raise NumericalTargetError(f"iteration {t}, proposal {n}: {exc}", exc.point) from exc
            except AssertionError:
                diag.monotone_violations += 1
                raise
            new_means[n] = adapted.mean
            new_scales.append(adapted.scale)
            diag.log_pi_adaptation += adapted.log_pi_evals
            diag.grad_evals += adapted.grad_evals
            diag.hess_evals += adapted.hess_evals
            diag.hessian_used += int(adapted.used_hessian)
            diag.inherited += int(adapted.hess_evals > 0 and not adapted.used_hessian)
            diag.backtracks += adapted.backtrack_count
            diag.theta_zero += int(adapted.theta == 0.0)
        means, scales = new_means, new_scales

    record.wall_time = time.perf_counter() - started
    return record


def _require(cfg: SamplerConfig, algorithm: Algorithm) -> None:
    if Algorithm(cfg.algorithm) is not algorithm:
        raise ValueError(f"config algorithm is {cfg.algorithm.value}, expected {algorithm.value}")


def run_standard_pmc(target, cfg: SamplerConfig, rng) -> RunRecord:
    _require(cfg, Algorithm.STANDARD_PMC)
    return run_pmc(target, cfg, rng)


def run_dm_pmc(target, cfg: SamplerConfig, rng) -> RunRecord:
    _require(cfg, Algorithm.DM_PMC)
    return run_pmc(target, cfg, rng)


def run_opmc(target, cfg: SamplerConfig, rng) -> RunRecord:
    _require(cfg, Algorithm.OPMC)
    return run_pmc(target, cfg, rng)


def second_half(T: int) -> tuple[int, int]:
    """1-based inclusive window covering the second half of ``T`` iterations."""
    return T // 2 + 1 if T > 1 else 1, T


def estimate(record: RunRecord, which: Quantity | str, window: tuple[int, int] | None = None):
    """Pooled estimator over iterations ``window = (first, last)`` (1-based, inclusive).

    ``Z`` is the plain average of the raw weights; ``MEAN`` and
    ``SECOND_MOMENT`` are self-normalized over the pooled window.
    """
    which = Quantity(which)
    first, last = window if window is not None else second_half(record.T)
    if not 1 <= first <= last <= record.T:
        raise ValueError(f"empty or out-of-range window ({first}, {last}) for T = {record.T}")
    summaries = record.summaries[first - 1 : last]
    lse = np.array([s.log_weight_sum for s in summaries])
    count = sum(s.n_samples for s in summaries)
    finite = np.isfinite(lse)

    if which is Quantity.Z:
        if not np.any(finite):
            return 0.0
        return float(np.exp(logsumexp(lse[finite]) - np.log(count)))

    if np.any(finite):
        mix = np.zeros(len(summaries))
        mix[finite] = np.exp(lse[finite] - logsumexp(lse[finite]))
    else:
        mix = np.full(len(summaries), 1.0 / len(summaries))
    attr = "mean" if which is Quantity.MEAN else "second_moment"
    return sum(m * getattr(s, attr) for m, s in zip(mix, summaries) if m > 0)


def cumulative_estimate_trace(record: RunRecord, which: Quantity | str = Quantity.MEAN) -> np.ndarray:
    """Estimator at each ``t`` pooling iterations ``1..t``."""
    return np.array([estimate(record, which, (1, t)) for t in range(1, record.T + 1)])
