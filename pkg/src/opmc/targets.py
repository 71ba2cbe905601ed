"""Benchmark target densities with analytic gradients and Hessians.

Every target exposes a vectorized ``log_pi`` (input ``(d,)`` or ``(M, d)``)
plus single-point ``grad_log_pi`` and ``hess_log_pi``. Ground-truth
quantities are attached when they are known in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .linalg import SeededRng, SpdMatrix, as_spd, log_gaussian_pdf_matrix, logsumexp

_LOG_2PI = math.log(2.0 * math.pi)


class OracleUndefinedError(ValueError):
    """Finite differences requested where log_pi is not finite."""


class TargetDensity:
    """Unnormalized log-target with derivative oracles.

    Subclasses implement ``_log_pi_batch``, ``grad_log_pi`` and
    ``hess_log_pi``.
    """

    dim: int
    known_Z: float | None = None
    known_mean: np.ndarray | None = None
    known_second_moment: np.ndarray | None = None
    init_box: tuple[float, float] = (-1.0, 1.0)

    def log_pi(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return float(self._log_pi_batch(x[None, :])[0])
        return self._log_pi_batch(x)

    def _log_pi_batch(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def grad_log_pi(self, x) -> np.ndarray:
        raise NotImplementedError

    def hess_log_pi(self, x) -> np.ndarray:
        raise NotImplementedError

    def is_interior(self, x) -> bool:
        return bool(np.all(np.isfinite(x)))

    def initial_means(self, gen: np.random.Generator, n: int) -> np.ndarray:
        """Uniform draws in the hypercube ``init_box ** dim``."""
        lo, hi = self.init_box
        return gen.uniform(lo, hi, size=(n, self.dim))


class GaussianTarget(TargetDensity):
    """Normalized N(mean, cov). Used for the quadratic-exactness checks."""

    def __init__(self, mean, cov, init_box=(-1.0, 1.0)):
        self.mean = np.asarray(mean, dtype=float)
        self.cov = as_spd(cov)
        self.precision = self.cov.chol_inv.T @ self.cov.chol_inv
        self.dim = self.mean.size
        self.known_Z = 1.0
        self.known_mean = self.mean.copy()
        self.known_second_moment = np.diag(self.cov.matrix) + self.mean**2
        self.init_box = init_box

    def _log_pi_batch(self, x):
        return log_gaussian_pdf_matrix(x, self.mean[None, :], [self.cov])[:, 0]

    def grad_log_pi(self, x):
        return self.precision @ (self.mean - np.asarray(x, dtype=float))

    def hess_log_pi(self, x):
        return -self.precision.copy()


@dataclass(frozen=True)
class GaussianMixtureSpec:
    weights: np.ndarray
    means: np.ndarray
    covariances: tuple[SpdMatrix, ...]

    def __init__(self, weights, means, covariances):
        weights = np.asarray(weights, dtype=float)
        means = np.atleast_2d(np.asarray(means, dtype=float))
        covs = tuple(as_spd(c) for c in covariances)
        if not (len(weights) == len(means) == len(covs)) or len(weights) == 0:
            raise ValueError("mixture weights, means and covariances must have equal, nonzero length")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError("mixture weights must lie on the simplex")
        if any(c.dim != means.shape[1] for c in covs):
            raise ValueError("covariance dimension does not match means")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "covariances", covs)


def gm2d_spec() -> GaussianMixtureSpec:
    """The five-component bivariate mixture of the GM-2D benchmark."""
    means = [[-10, -10], [0, 16], [13, 8], [-9, 7], [14, -4]]
    covs = [
        [[5, 2], [2, 5]],
        [[2, -1.3], [-1.3, 2]],
        [[2, 0.8], [0.8, 2]],
        [[3, 1.2], [1.2, 0.5]],
        [[0.2, -0.1], [-0.1, 0.2]],
    ]
    return GaussianMixtureSpec(np.full(5, 0.2), means, covs)


class GaussianMixtureTarget(TargetDensity):
    def __init__(self, spec: GaussianMixtureSpec, init_box=(-15.0, 15.0)):
        self.spec = spec
        self.dim = spec.means.shape[1]
        self._log_w = np.log(spec.weights)
        self._prec = np.stack([c.chol_inv.T @ c.chol_inv for c in spec.covariances])
        self._linv = np.stack([c.chol_inv for c in spec.covariances])
        self._log_coef = self._log_w - 0.5 * np.array(
            [self.dim * _LOG_2PI + c.log_det for c in spec.covariances]
        )
        self.known_Z = 1.0
        self.known_mean = spec.weights @ spec.means
        diag = np.stack([np.diag(c.matrix) for c in spec.covariances])
        self.known_second_moment = spec.weights @ (diag + spec.means**2)
        self.init_box = init_box

    def _log_pi_batch(self, x):
        diff = x[:, None, :] - self.spec.means[None, :, :]
        z = np.einsum("nij,mnj->mni", self._linv, diff)
        return logsumexp(self._log_coef[None, :] - 0.5 * np.einsum("mni,mni->mn", z, z), axis=1)

    def _parts(self, x):
        diff = self.spec.means - np.asarray(x, dtype=float)[None, :]
        z = np.einsum("nij,nj->ni", self._linv, diff)
        logc = self._log_coef - 0.5 * np.einsum("ni,ni->n", z, z)
        resp = np.exp(logc - logc.max())
        resp /= resp.sum()
        # per-component score P_i (gamma_i - x)
        g = np.einsum("nij,nj->ni", self._prec, diff)
        return resp, g

    def grad_log_pi(self, x):
        resp, g = self._parts(x)
        return resp @ g

    def hess_log_pi(self, x):
        resp, g = self._parts(x)
        gbar = resp @ g
        h = np.einsum("n,ni,nj->ij", resp, g, g) - np.einsum("n,nij->ij", resp, self._prec)
        h -= np.outer(gbar, gbar)
        return 0.5 * (h + h.T)


def gaussian_mixture_target(spec: GaussianMixtureSpec, **kw) -> GaussianMixtureTarget:
    return GaussianMixtureTarget(spec, **kw)


@dataclass(frozen=True)
class BananaSpec:
    dim: int = 2
    b: float = 3.0
    c: float = 1.0

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError("banana target needs dim >= 2")
        if self.c == 0:
            raise ValueError("banana shape parameter c must be nonzero")


class BananaTarget(TargetDensity):
    """Sheared Gaussian: ``x_2 = xbar_2 - b (xbar_1**2 - c**2)``, xbar ~ N(0, diag(c^2, 1, ...))."""

    def __init__(self, spec: BananaSpec, init_box=(-4.0, 4.0)):
        self.spec = spec
        self.dim = spec.dim
        b, c = spec.b, spec.c
        self._inv_var = np.ones(spec.dim)
        self._inv_var[0] = 1.0 / c**2
        self._log_norm = -0.5 * spec.dim * _LOG_2PI - math.log(abs(c))
        self.known_Z = 1.0
        self.known_mean = np.zeros(spec.dim)
        m2 = np.ones(spec.dim)
        m2[0] = c**2
        m2[1] = 1.0 + 2.0 * b**2 * c**4
        self.known_second_moment = m2
        self.init_box = init_box

    def unshear(self, x):
        z = np.array(x, dtype=float, copy=True)
        z[..., 1] += self.spec.b * (z[..., 0] ** 2 - self.spec.c**2)
        return z

    def shear(self, xbar):
        x = np.array(xbar, dtype=float, copy=True)
        x[..., 1] -= self.spec.b * (x[..., 0] ** 2 - self.spec.c**2)
        return x

    def sample(self, gen: np.random.Generator, n: int) -> np.ndarray:
        """Exact draws (Gaussian draw followed by the shear)."""
        xbar = gen.standard_normal((n, self.dim))
        xbar[:, 0] *= abs(self.spec.c)
        return self.shear(xbar)

    def _log_pi_batch(self, x):
        z = self.unshear(x)
        return self._log_norm - 0.5 * (z * z) @ self._inv_var

    def grad_log_pi(self, x):
        x = np.asarray(x, dtype=float)
        gz = -self._inv_var * self.unshear(x)
        g = gz.copy()
        g[0] += gz[1] * 2.0 * self.spec.b * x[0]
        return g

    def hess_log_pi(self, x):
        x = np.asarray(x, dtype=float)
        b = self.spec.b
        z = self.unshear(x)
        h = np.diag(-self._inv_var)
        dz2 = 2.0 * b * x[0]  # d z_2 / d x_1
        h[0, 0] = -self._inv_var[0] - dz2**2 - z[1] * 2.0 * b
        h[0, 1] = h[1, 0] = -dz2
        return h


def banana_target(spec: BananaSpec, **kw) -> BananaTarget:
    return BananaTarget(spec, **kw)


@dataclass(frozen=True)
class SpectralSpec:
    """Multi-sinusoid model; parameters are ordered ``[freqs..., amps...]``."""

    frequencies: tuple[float, ...]
    amplitudes: tuple[float, ...]
    phases: tuple[float, ...] | None = None
    noise_std: float = 0.5
    n_obs: int | None = None
    init_amplitude_max: float = 3.0

    def __post_init__(self):
        S = len(self.frequencies)
        if S == 0 or len(self.amplitudes) != S:
            raise ValueError("need one amplitude per frequency")
        if self.phases is not None and len(self.phases) != S:
            raise ValueError("need one phase per frequency")
        f = np.asarray(self.frequencies)
        if np.any(np.diff(f) <= 0) or f[0] <= 0 or f[-1] >= 0.5:
            raise ValueError("frequencies must be strictly increasing in (0, 0.5)")
        if np.any(np.asarray(self.amplitudes) <= 0):
            raise ValueError("amplitudes must be positive")
        if self.noise_std < 0:
            raise ValueError("noise_std must be nonnegative")

    @property
    def S(self) -> int:
        return len(self.frequencies)

    @property
    def d_y(self) -> int:
        return self.n_obs if self.n_obs is not None else 30 * self.S

    @property
    def tau(self) -> np.ndarray:
        return np.linspace(1.0, float(self.d_y), self.d_y)

    @property
    def phase_array(self) -> np.ndarray:
        return np.zeros(self.S) if self.phases is None else np.asarray(self.phases, dtype=float)

    @property
    def true_params(self) -> np.ndarray:
        return np.concatenate([self.frequencies, self.amplitudes]).astype(float)

    def clean_signal(self, params) -> np.ndarray:
        params = np.asarray(params, dtype=float)
        S = self.S
        arg = 2.0 * np.pi * params[:S, None] * self.tau[None, :] + self.phase_array[:, None]
        return params[S:] @ np.sin(arg)


def default_spectral_spec(S: int) -> SpectralSpec:
    """Ground truth used by the ``spectral-S*`` presets."""
    return SpectralSpec(
        frequencies=tuple(np.linspace(0.1, 0.4, S).tolist()),
        amplitudes=tuple(np.linspace(1.0, 2.0, S).tolist()),
    )


def generate_spectral_data(spec: SpectralSpec, rng: SeededRng | np.random.Generator) -> np.ndarray:
    clean = spec.clean_signal(spec.true_params)
    if spec.noise_std == 0:
        return clean
    gen = rng.generator() if isinstance(rng, SeededRng) else rng
    return clean + spec.noise_std * gen.standard_normal(spec.d_y)


class SpectralTarget(TargetDensity):
    def __init__(self, spec: SpectralSpec, y):
        y = np.asarray(y, dtype=float)
        if y.shape != (spec.d_y,):
            raise ValueError(f"data must have length {spec.d_y}")
        self.spec = spec
        self.y = y
        self.S = spec.S
        self.dim = 2 * spec.S
        self._tau = spec.tau
        self._phi = spec.phase_array
        self._prec = 1.0 / spec.noise_std**2 if spec.noise_std > 0 else 1.0
        # ground truth is the data-generating parameter vector
        self.known_mean = spec.true_params

    def in_support(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        f, a = x[:, : self.S], x[:, self.S :]
        ordered = np.all(np.diff(f, axis=1) >= 0, axis=1) if self.S > 1 else np.ones(len(x), bool)
        return ordered & (f[:, 0] >= 0) & (f[:, -1] <= 0.5) & np.all(a >= 0, axis=1)

    def is_interior(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        f, a = x[: self.S], x[self.S :]
        return bool(
            np.all(np.diff(f) > 0) and f[0] > 0 and f[-1] < 0.5 and np.all(a > 0) and np.all(np.isfinite(x))
        )

    def _log_pi_batch(self, x):
        S = self.S
        arg = 2.0 * np.pi * x[:, :S, None] * self._tau[None, None, :] + self._phi[None, :, None]
        model = np.einsum("ms,msj->mj", x[:, S:], np.sin(arg))
        resid = self.y[None, :] - model
        out = -0.5 * self._prec * np.sum(resid * resid, axis=1)
        out[~self.in_support(x)] = -np.inf
        return out

    def _jac(self, x):
        S = self.S
        f, a = x[:S], x[S:]
        two_pi_tau = 2.0 * np.pi * self._tau
        arg = f[:, None] * two_pi_tau[None, :] + self._phi[:, None]
        s, c = np.sin(arg), np.cos(arg)
        resid = self.y - a @ s
        jac = np.concatenate([a[:, None] * two_pi_tau[None, :] * c, s])  # (2S, J)
        return resid, jac, s, c, two_pi_tau

    def grad_log_pi(self, x):
        resid, jac, *_ = self._jac(np.asarray(x, dtype=float))
        return self._prec * (jac @ resid)

    def hess_log_pi(self, x):
        x = np.asarray(x, dtype=float)
        S = self.S
        resid, jac, s, c, two_pi_tau = self._jac(x)
        a = x[S:]
        h = -jac @ jac.T
        # second derivatives of the model, contracted with the residual
        d_ff = -(a[:, None] * two_pi_tau[None, :] ** 2 * s) @ resid
        d_fa = (two_pi_tau[None, :] * c) @ resid
        idx = np.arange(S)
        h[idx, idx] += d_ff
        h[idx, S + idx] += d_fa
        h[S + idx, idx] += d_fa
        h *= self._prec
        return 0.5 * (h + h.T)

    def initial_means(self, gen, n):
        """Draws from the prior: sorted uniform frequencies, uniform amplitudes."""
        f = np.sort(gen.uniform(0.0, 0.5, size=(n, self.S)), axis=1)
        a = gen.uniform(0.0, self.spec.init_amplitude_max, size=(n, self.S))
        return np.concatenate([f, a], axis=1)


def spectral_target(spec: SpectralSpec, y) -> SpectralTarget:
    return SpectralTarget(spec, y)


def _fd_step(x, h):
    return 1e-5 * max(1.0, float(np.max(np.abs(x)))) if h is None else h


def _checked(target, pts):
    vals = target.log_pi(pts)
    if not np.all(np.isfinite(vals)):
        raise OracleUndefinedError("log_pi is not finite on the finite-difference stencil")
    return vals


def fd_gradient(target: TargetDensity, x, h: float | None = None) -> np.ndarray:
    """Central-difference gradient of ``target.log_pi``."""
    x = np.asarray(x, dtype=float)
    h = _fd_step(x, h)
    eye = np.eye(x.size) * h
    vals = _checked(target, np.concatenate([x + eye, x - eye]))
    return (vals[: x.size] - vals[x.size :]) / (2.0 * h)


def fd_hessian(target: TargetDensity, x, h: float | None = None) -> np.ndarray:
    """Central-difference Hessian of ``target.log_pi`` from function values only."""
    x = np.asarray(x, dtype=float)
    h = _fd_step(x, h)
    d = x.size
    eye = np.eye(d) * h
    pts = []
    for i in range(d):
        for j in range(d):
            for si, sj in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
                pts.append(x + si * eye[i] + sj * eye[j])
    vals = _checked(target, np.array(pts)).reshape(d, d, 4)
    hess = (vals[..., 0] - vals[..., 1] - vals[..., 2] + vals[..., 3]) / (4.0 * h * h)
    return 0.5 * (hess + hess.T)


__all__ = [
    "BananaSpec",
    "BananaTarget",
    "GaussianMixtureSpec",
    "GaussianMixtureTarget",
    "GaussianTarget",
    "OracleUndefinedError",
    "SpectralSpec",
    "SpectralTarget",
    "TargetDensity",
    "banana_target",
    "default_spectral_spec",
    "fd_gradient",
    "fd_hessian",
    "gaussian_mixture_target",
    "generate_spectral_data",
    "gm2d_spec",
    "spectral_target",
]
