"""Accuracy metrics for surrogate evaluation."""

from dataclasses import dataclass

import numpy as np

from .errors import MetricError, ShapeError


@dataclass(frozen=True)
class EvalSet:
    """Ground truth paired with predicted means and variances."""

    truth: np.ndarray
    pred_mean: np.ndarray
    pred_var: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.truth, dtype=float).ravel()
        m = np.asarray(self.pred_mean, dtype=float).ravel()
        v = np.asarray(self.pred_var, dtype=float).ravel()
        if not (t.size == m.size == v.size):
            raise ShapeError(
                f"truth, pred_mean and pred_var must have equal lengths, "
                f"got {t.size}, {m.size}, {v.size}"
            )
        if t.size == 0:
            raise MetricError("an evaluation set needs at least one point")
        if np.any(v < 0.0):
            raise MetricError("predicted variances must be nonnegative")
        for arr in (t, m, v):
            arr.flags.writeable = False
        object.__setattr__(self, "truth", t)
        object.__setattr__(self, "pred_mean", m)
        object.__setattr__(self, "pred_var", v)

    @property
    def n(self) -> int:
        return self.truth.size


def rmse(e: EvalSet) -> float:
    """Root mean squared prediction error."""
    return float(np.sqrt(np.mean((e.pred_mean - e.truth) ** 2)))


def maxae(e: EvalSet) -> float:
    """Largest absolute prediction error."""
    return float(np.max(np.abs(e.pred_mean - e.truth)))


def q2(e: EvalSet) -> float:
    """Predictivity coefficient, 1 - SSE/SST.

    SST is the total sum of squares of the truth about its mean; a constant
    truth leaves the coefficient undefined.
    """
    if e.n < 2:
        raise MetricError("q2 needs at least two points")
    sse = float(np.sum((e.pred_mean - e.truth) ** 2))
    sst = float(np.sum((e.truth - np.mean(e.truth)) ** 2))
    if sst <= 0.0:
        raise MetricError("q2 is undefined for constant truth (zero total sum of squares)")
    return 1.0 - sse / sst


def rimse(e: EvalSet) -> float:
    """Root of the mean predicted variance."""
    return float(np.sqrt(np.mean(e.pred_var)))
