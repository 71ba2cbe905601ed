"""Damped-Newton adaptation of a resampled proposal.

The new location is ``mu + theta * Gamma @ grad log_pi(mu)`` and the new scale
is ``theta * Gamma``, where ``Gamma`` is the inverse negative Hessian when that
is SPD and the inherited scale otherwise, and ``theta`` is backtracked on the
ladder ``1, tau, tau**2, ...`` until log_pi does not decrease.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import NotSPDError, SpdMatrix, invert_spd, try_cholesky


class NumericalTargetError(ArithmeticError):
    """The target returned a non-finite derivative at an interior point."""

    def __init__(self, message: str, point=None):
        super().__init__(message)
        self.point = None if point is None else np.asarray(point, dtype=float).copy()


@dataclass(frozen=True)
class AdaptationConfig:
    tau: float = 0.5
    theta_min: float = 2.0**-20
    max_backtracks: int = 20
    # re-evaluate log_pi at every new mean and assert it did not decrease
    check_monotone: bool = False

    def __post_init__(self):
        if not 0.0 < self.tau < 1.0:
            raise ValueError("tau must lie in (0, 1)")
        if not self.theta_min > 0.0:
            raise ValueError("theta_min must be positive")
        if self.max_backtracks < 0:
            raise ValueError("max_backtracks must be >= 0")


@dataclass
class AdaptedProposal:
    mean: np.ndarray
    scale: SpdMatrix
    used_hessian: bool
    theta: float
    backtrack_count: int
    log_pi_evals: int = 0
    grad_evals: int = 0
    hess_evals: int = 0


def scaling_base(target, mu, sigma_tilde: SpdMatrix) -> tuple[SpdMatrix, bool]:
    """Inverse negative Hessian at ``mu`` if SPD, else the inherited scale."""
    if not target.is_interior(mu):
        return sigma_tilde, False
    neg_h = -np.asarray(target.hess_log_pi(mu), dtype=float)
    if not np.all(np.isfinite(neg_h)):
        return sigma_tilde, False
    neg_h = 0.5 * (neg_h + neg_h.T)
    chol = try_cholesky(neg_h)
    if chol is None:
        return sigma_tilde, False
    try:
        return invert_spd(SpdMatrix(neg_h, chol=chol)), True
    except NotSPDError:
        return sigma_tilde, False


def _backtrack(target, mu, gamma: SpdMatrix, grad, log_pi_mu, cfg: AdaptationConfig):
    theta = 1.0
    evals = 0
    for i in range(cfg.max_backtracks + 1):
        if theta < cfg.theta_min:
            break
        cand = mu + (theta * gamma.matrix) @ grad
        evals += 1
        if target.log_pi(cand) >= log_pi_mu:
            return theta, i, cand, evals
        theta *= cfg.tau
    return 0.0, evals, mu, evals


def backtrack_theta(target, mu, gamma, cfg: AdaptationConfig | None = None) -> float:
    """Largest ``theta`` on the ladder with ``log_pi(mu + theta Gamma grad) >= log_pi(mu)``; 0 if none."""
    cfg = cfg or AdaptationConfig()
    mu = np.asarray(mu, dtype=float)
    gamma = gamma if isinstance(gamma, SpdMatrix) else SpdMatrix(gamma)
    grad = target.grad_log_pi(mu)
    return _backtrack(target, mu, gamma, grad, target.log_pi(mu), cfg)[0]


def adapt_proposal(
    target,
    mu_tilde,
    sigma_tilde: SpdMatrix,
    cfg: AdaptationConfig | None = None,
    log_pi_mu: float | None = None,
) -> AdaptedProposal:
    """One optimization step for a resampled proposal.

    ``log_pi_mu`` lets the caller pass the already known ``log_pi(mu_tilde)``
    (the resampled location is a weighted sample). Points outside the support
    interior are left unmoved with their inherited scale.
    """
    cfg = cfg or AdaptationConfig()
    mu = np.asarray(mu_tilde, dtype=float)
    evals = 0
    if log_pi_mu is None:
        log_pi_mu = target.log_pi(mu)
        evals += 1
    if not np.isfinite(log_pi_mu) or not target.is_interior(mu):
        return AdaptedProposal(mu.copy(), sigma_tilde, False, 0.0, 0, log_pi_evals=evals)

    gamma, used_hessian = scaling_base(target, mu, sigma_tilde)
    grad = np.asarray(target.grad_log_pi(mu), dtype=float)
    if not np.all(np.isfinite(grad)):
        raise NumericalTargetError(f"non-finite gradient at {mu.tolist()}", mu)

    theta, count, new_mean, n_bt = _backtrack(target, mu, gamma, grad, log_pi_mu, cfg)
    evals += n_bt
    if theta == 0.0:
        scale = sigma_tilde
        new_mean = mu.copy()
    elif theta == 1.0:
        scale = gamma
    else:
        scale = gamma.scaled(theta)

    if cfg.check_monotone:
        lp_new = target.log_pi(new_mean)
        evals += 1
        if not lp_new >= log_pi_mu:
            raise AssertionError(f"adaptation decreased log_pi at {mu.tolist()}")

    return AdaptedProposal(
        mean=new_mean,
        scale=scale,
        used_hessian=used_hessian,
        theta=theta,
        backtrack_count=count,
        log_pi_evals=evals,
        grad_evals=1,
        hess_evals=1,
    )
