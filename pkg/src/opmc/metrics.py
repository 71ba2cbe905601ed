"""Error metrics across replicated runs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _runs(estimates, truth):
    est = np.asarray(estimates, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if est.size == 0:
        raise ValueError("no runs to aggregate")
    est = est.reshape(len(est), -1)
    return est, truth.reshape(-1)


def squared_errors(estimates, truth) -> np.ndarray:
    """Per-run ``||est - truth||^2``."""
    est, truth = _runs(estimates, truth)
    return np.sum((est - truth) ** 2, axis=1)


def rel_mse(estimates, truth) -> float:
    """Mean over runs of ``||est - truth||^2 / ||truth||^2``."""
    est, truth = _runs(estimates, truth)
    norm2 = float(truth @ truth)
    if norm2 == 0:
        raise ValueError("relative MSE needs a nonzero ground truth")
    return float(np.mean(squared_errors(est, truth)) / norm2)


def mse(estimates, truth) -> float:
    """Mean over runs of the coordinate-averaged squared error."""
    est, truth = _runs(estimates, truth)
    return float(np.mean(squared_errors(est, truth)) / truth.size)


def median_se(estimates, truth) -> float:
    """Median over runs of ``||est - truth||^2``."""
    return float(np.median(squared_errors(estimates, truth)))


def mad(values, axis=0) -> np.ndarray:
    """Median absolute deviation from the median."""
    values = np.asarray(values, dtype=float)
    med = np.median(values, axis=axis, keepdims=True)
    return np.median(np.abs(values - med), axis=axis)


def reconstructed_mse(params, spec) -> float:
    """Mean over the observation grid of the squared difference between clean signals."""
    est = spec.clean_signal(params)
    ref = spec.clean_signal(spec.true_params)
    return float(np.mean((est - ref) ** 2))


@dataclass
class MetricReport:
    quantity: str
    rel_mse: float
    mse: float
    median_se: float
    median: np.ndarray
    mad: np.ndarray
    runs: int
    truth: np.ndarray

    @classmethod
    def from_runs(cls, quantity: str, estimates, truth) -> "MetricReport":
        est, truth_v = _runs(estimates, truth)
        norm2 = float(truth_v @ truth_v)
        return cls(
            quantity=quantity,
            rel_mse=rel_mse(est, truth_v) if norm2 > 0 else float("nan"),
            mse=mse(est, truth_v),
            median_se=median_se(est, truth_v),
            median=np.median(est, axis=0),
            mad=mad(est, axis=0),
            runs=len(est),
            truth=truth_v,
        )
