"""Dense SPD helpers, Gaussian densities and log-space weight normalization."""

from __future__ import annotations

import math

import numpy as np
from numpy.random import Generator, Philox, SeedSequence
from scipy.linalg import solve_triangular

PD_EPS = 1e-12
SYM_TOL = 1e-12

_LOG_2PI = math.log(2.0 * math.pi)


class NotSPDError(ValueError):
    """Raised when a matrix fails the Cholesky-based positive definiteness test."""


class DegenerateWeightsError(ValueError):
    """Raised when every log-weight is -inf."""


def _check_square_symmetric(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    if np.max(np.abs(m - m.T), initial=0.0) > SYM_TOL:
        raise ValueError("matrix is not symmetric within 1e-12")
    return m


def try_cholesky(m) -> np.ndarray | None:
    """Lower Cholesky factor of ``m``, or ``None`` if ``m`` is not SPD.

    A matrix counts as SPD when the factorization succeeds and every pivot
    ``L[i, i]**2`` exceeds ``PD_EPS``. Non-square or asymmetric input raises
    ``ValueError``.
    """
    m = _check_square_symmetric(m)
    try:
        chol = np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        return None
    pivots = np.diag(chol) ** 2
    if not np.all(pivots > PD_EPS):
        return None
    return chol


class SpdMatrix:
    """Immutable symmetric positive definite matrix with its Cholesky factor.

    Construction runs the SPD test and raises :class:`NotSPDError` on failure.
    """

    __slots__ = ("matrix", "chol", "log_det", "_chol_inv")

    def __init__(self, m, chol: np.ndarray | None = None):
        m = np.array(m, dtype=float)
        if chol is None:
            chol = try_cholesky(m)
            if chol is None:
                raise NotSPDError("matrix is not symmetric positive definite")
        m.setflags(write=False)
        chol = np.array(chol, dtype=float)
        chol.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "chol", chol)
        object.__setattr__(self, "log_det", 2.0 * float(np.sum(np.log(chol.diagonal()))))
        object.__setattr__(self, "_chol_inv", None)

    def __setattr__(self, name, value):
        raise AttributeError("SpdMatrix is immutable")

    @classmethod
    def identity(cls, dim: int, scale: float = 1.0) -> "SpdMatrix":
        return cls(scale * np.eye(dim), chol=math.sqrt(scale) * np.eye(dim))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def chol_inv(self) -> np.ndarray:
        """Inverse of the lower Cholesky factor (cached)."""
        if self._chol_inv is None:
            inv = solve_triangular(self.chol, np.eye(self.dim), lower=True)
            inv.setflags(write=False)
            object.__setattr__(self, "_chol_inv", inv)
        return self._chol_inv

    def scaled(self, factor: float) -> "SpdMatrix":
        """Return ``factor * self`` (``factor > 0``) without refactorizing."""
        if not factor > 0:
            raise ValueError("scale factor must be positive")
        return SpdMatrix(factor * self.matrix, chol=math.sqrt(factor) * self.chol)

    def __repr__(self) -> str:
        return f"SpdMatrix({self.matrix.tolist()!r})"


def as_spd(m) -> SpdMatrix:
    return m if isinstance(m, SpdMatrix) else SpdMatrix(m)


def invert_spd(m) -> SpdMatrix:
    """Inverse of an SPD matrix computed from its Cholesky factor.

    Raises :class:`NotSPDError` when ``m`` is not SPD.
    """
    m = as_spd(m)
    linv = m.chol_inv
    inv = linv.T @ linv
    inv = 0.5 * (inv + inv.T)
    return SpdMatrix(inv)


class SeededRng:
    """Splittable seeded random stream.

    A stream is identified by a 64-bit seed and a tuple of integer keys;
    ``spawn`` extends the key path, so every (run, iteration, stage, ...)
    tuple maps to its own deterministic Philox substream.
    """

    __slots__ = ("seed", "key")

    def __init__(self, seed: int, key: tuple[int, ...] = ()):
        seed = int(seed)
        if not 0 <= seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        self.seed = seed
        self.key = tuple(int(k) for k in key)

    def spawn(self, *key: int) -> "SeededRng":
        return SeededRng(self.seed, self.key + tuple(key))

    def generator(self) -> Generator:
        return Generator(Philox(SeedSequence(self.seed, spawn_key=self.key)))

    def __repr__(self) -> str:
        return f"SeededRng(seed={self.seed}, key={self.key})"


def sample_gaussian(mean, scale, rng: SeededRng | Generator, z=None) -> np.ndarray:
    """Draw ``mean + L z`` with ``L`` the Cholesky factor of ``scale``.

    ``z`` may be supplied directly (useful for pinning the noise in tests).
    """
    mean = np.asarray(mean, dtype=float)
    scale = as_spd(scale)
    if mean.shape != (scale.dim,):
        raise ValueError("mean and scale dimensions differ")
    if z is None:
        gen = rng.generator() if isinstance(rng, SeededRng) else rng
        z = gen.standard_normal(scale.dim)
    return mean + scale.chol @ np.asarray(z, dtype=float)


def log_gaussian_pdf(x, mean, scale) -> np.ndarray | float:
    """Exact log-density of N(mean, scale) at ``x`` (shape ``(d,)`` or ``(M, d)``)."""
    scale = as_spd(scale)
    x = np.asarray(x, dtype=float)
    diff = x - np.asarray(mean, dtype=float)
    z = solve_triangular(scale.chol, diff.T, lower=True)
    maha = np.sum(z * z, axis=0)
    out = -0.5 * scale.dim * _LOG_2PI - 0.5 * scale.log_det - 0.5 * maha
    return float(out) if x.ndim == 1 else out


def log_gaussian_pdf_matrix(x: np.ndarray, means: np.ndarray, scales) -> np.ndarray:
    """Matrix ``out[m, n] = log N(x_m; means[n], scales[n])``.

    When every proposal shares one scale object the points are whitened once
    instead of once per proposal.
    """
    x = np.asarray(x, dtype=float)
    means = np.asarray(means, dtype=float)
    d = x.shape[1]
    first = scales[0]
    if all(s is first for s in scales):
        linv = first.chol_inv
        xw = x @ linv.T
        mw = means @ linv.T
        diff = xw[:, None, :] - mw[None, :, :]
        maha = np.einsum("mni,mni->mn", diff, diff)
        return -0.5 * d * _LOG_2PI - 0.5 * first.log_det - 0.5 * maha

    linvs = np.stack([s.chol_inv for s in scales])  # (N, d, d)
    log_dets = np.array([s.log_det for s in scales])
    diff = x[None, :, :] - means[:, None, :]  # (N, M, d)
    z = diff @ np.swapaxes(linvs, 1, 2)
    maha = np.einsum("nmi,nmi->mn", z, z)
    return -0.5 * d * _LOG_2PI - 0.5 * log_dets[None, :] - 0.5 * maha


def logsumexp(a, axis=None):
    """``log(sum(exp(a)))`` with the max shift; all ``-inf`` input gives ``-inf``."""
    a = np.asarray(a, dtype=float)
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True)) + m
    return out.item() if axis is None else np.squeeze(out, axis=axis)


def normalize_log_weights(logw) -> tuple[np.ndarray, float]:
    """Normalize log-weights with the max-shift trick.

    Returns the normalized weights (same shape as ``logw``) and
    ``log(sum(exp(logw)))``. Raises :class:`DegenerateWeightsError` when no
    entry is finite.
    """
    logw = np.asarray(logw, dtype=float)
    if np.any(np.isnan(logw)) or np.any(logw == np.inf):
        raise ValueError("log-weights must be finite or -inf")
    if logw.size == 0 or not np.any(np.isfinite(logw)):
        raise DegenerateWeightsError("all log-weights are -inf")
    shift = np.max(logw)
    w = np.exp(logw - shift)
    total = np.sum(w)
    return w / total, float(shift + math.log(total))


__all__ = [
    "DegenerateWeightsError",
    "NotSPDError",
    "SeededRng",
    "SpdMatrix",
    "as_spd",
    "invert_spd",
    "log_gaussian_pdf",
    "log_gaussian_pdf_matrix",
    "logsumexp",
    "normalize_log_weights",
    "sample_gaussian",
    "try_cholesky",
]
