"""Small statistical helpers used by the experiment reports."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats as sps


@dataclass
class Verdict:
    """One pass/fail decision with the numbers behind it.

    ``spread`` is a standard error, p-value or bound depending on the test;
    ``detail`` says which.
    """

    name: str
    value: float
    predicted: float | None
    spread: float | None
    passed: bool
    detail: str = ""

    def __post_init__(self):
        self.passed = bool(self.passed)
        self.value = float(self.value)


def mean_se(x) -> tuple[float, float]:
    """Sample mean and its i.i.d. standard error."""
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.size < 2:
        return float(x.mean()) if x.size else math.nan, math.nan
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))


def batch_means_se(x, batches: int = 50) -> tuple[float, float]:
    """Mean and batch-means standard error for an autocorrelated series."""
    x = np.asarray(x, dtype=np.float64).ravel()
    size = x.size // batches
    if size < 2:
        return mean_se(x)
    means = x[: size * batches].reshape(batches, size).mean(axis=1)
    return float(x.mean()), float(means.std(ddof=1) / math.sqrt(batches))


def lag1_autocorr(x) -> float:
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.size < 3:
        return math.nan
    d = x - x.mean()
    denom = float(np.dot(d, d))
    return float(np.dot(d[:-1], d[1:]) / denom) if denom > 0 else 0.0


def normal_ci(mean: float, se: float, level: float = 0.95) -> tuple[float, float]:
    z = sps.norm.ppf(0.5 + level / 2)
    return mean - z * se, mean + z * se


def z_score(observed: float, predicted: float, se: float) -> float:
    if not se > 0:
        return 0.0 if observed == predicted else math.inf
    return (observed - predicted) / se


def integer_chisquare(sample, pmf, support_max: int = 20, support_min: int = 1):
    """Chi-square goodness of fit for an integer law.

    Exact bins for support_min..support_max plus one tail bin; ``pmf(k)`` gives
    the model probability of k. Returns (statistic, p-value, dof).
    """
    sample = np.asarray(sample).astype(np.int64).ravel()
    ks = np.arange(support_min, support_max + 1)
    probs = np.array([pmf(int(k)) for k in ks])
    counts = np.array([(sample == k).sum() for k in ks], dtype=np.float64)
    probs = np.append(probs, max(0.0, 1.0 - probs.sum()))
    counts = np.append(counts, (sample > support_max).sum() + (sample < support_min).sum())
    expected = probs * sample.size
    # merge sparse bins from the top so every expected count is at least 5
    while expected.size > 2 and expected[-1] < 5:
        expected[-2] += expected[-1]
        counts[-2] += counts[-1]
        expected, counts = expected[:-1], counts[:-1]
    stat, p = sps.chisquare(counts, expected * counts.sum() / expected.sum())
    return float(stat), float(p), int(expected.size - 1)
