"""Small regression and resampling helpers shared by the tail and scaling fits."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import InsufficientDataError


@dataclass(frozen=True)
class RateFit:
    """Exponential decay fitted as ``log count = a - rate * x``.

    ``degenerate`` is set when no rate could be fitted; the numeric fields
    are then NaN and ``reason`` says why.
    """

    rate: float
    stderr: float
    r2: float
    n_points: int
    degenerate: bool = False
    reason: str = ""

    @classmethod
    def undefined(cls, reason: str) -> "RateFit":
        return cls(math.nan, math.nan, math.nan, 0, True, reason)

    def to_dict(self) -> dict:
        return {"rate": self.rate, "stderr": self.stderr, "r2": self.r2,
                "n_points": self.n_points, "degenerate": self.degenerate,
                "reason": self.reason}


def exceedance_counts(samples, thresholds) -> np.ndarray:
    """``counts[i] = #{s : s > thresholds[i]}``."""
    s = np.sort(np.asarray(samples, dtype=float))
    t = np.asarray(thresholds, dtype=float)
    return s.size - np.searchsorted(s, t, side="right")


def fit_log_counts(x, counts, min_count: int = 10, min_points: int = 2) -> RateFit:
    """Least squares of ``log(counts)`` on ``x`` over entries with ``count >= min_count``."""
    x = np.asarray(x, dtype=float)
    counts = np.asarray(counts, dtype=float)
    keep = counts >= min_count
    if keep.sum() < min_points:
        return RateFit.undefined(
            f"only {int(keep.sum())} bins with count >= {min_count}; need {min_points}")
    xs, ys = x[keep], np.log(counts[keep])
    if xs.size == 2:
        slope = (ys[1] - ys[0]) / (xs[1] - xs[0])
        return RateFit(-slope, math.nan, 1.0, 2)
    res = stats.linregress(xs, ys)
    return RateFit(-res.slope, res.stderr, res.rvalue ** 2, int(xs.size))


def tail_rate_fit(samples, thresholds, min_exceed: int = 10, min_points: int = 5) -> RateFit:
    """Exponential rate of the empirical survival function above ``thresholds``.

    Fits ``log P(X > t)`` against ``t`` on thresholds with at least
    ``min_exceed`` exceedances.  Constant samples give a degenerate result;
    fewer than ``min_points`` usable thresholds raise.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise InsufficientDataError("no samples")
    if np.ptp(samples) == 0:
        return RateFit.undefined("constant samples")
    thresholds = np.asarray(thresholds, dtype=float)
    counts = exceedance_counts(samples, thresholds)
    usable = int((counts >= min_exceed).sum())
    if usable < min_points:
        raise InsufficientDataError(
            f"{usable} thresholds with >= {min_exceed} exceedances; need {min_points}")
    return fit_log_counts(thresholds, counts, min_exceed, min_points)


def calibrate_rho(ratios, quantile: float = 0.999, headroom: float = 0.25) -> float:
    """Empirical analogue of the linear-growth constant: high quantile plus headroom.

    ``ratios`` are samples of ``D*(0, y) / |y|_1``.  Never below 1, since the
    chemical distance dominates the l1 distance.
    """
    ratios = np.asarray(ratios, dtype=float)
    if ratios.size == 0:
        raise InsufficientDataError("no ratio samples")
    return max(1.0, float(np.quantile(ratios, quantile)) * (1.0 + headroom))


@dataclass(frozen=True)
class LineFit:
    slope: float
    intercept: float
    slope_stderr: float
    ci: tuple[float, float]
    r2: float


def line_fit(x, y, level: float = 0.95) -> LineFit:
    """OLS line with a Student-t confidence interval on the slope."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 3:
        raise InsufficientDataError("need at least 3 points for a line with a CI")
    res = stats.linregress(x, y)
    q = stats.t.ppf(0.5 + level / 2, x.size - 2)
    return LineFit(res.slope, res.intercept, res.stderr,
                   (res.slope - q * res.stderr, res.slope + q * res.stderr), res.rvalue ** 2)


def percentile_ci(values, level: float = 0.95) -> tuple[float, float]:
    values = np.asarray(values, dtype=float)
    a = (1 - level) / 2
    lo, hi = np.quantile(values, [a, 1 - a])
    return float(lo), float(hi)


def variance_stderr(samples) -> float:
    """Large-sample standard error of the unbiased sample variance."""
    x = np.asarray(samples, dtype=float)
    n = x.size
    if n < 4:
        return math.nan
    c = x - x.mean()
    m2 = np.mean(c ** 2)
    m4 = np.mean(c ** 4)
    return math.sqrt(max(m4 - m2 ** 2 * (n - 3) / (n - 1), 0.0) / n)


def mean_stderr(samples) -> float:
    x = np.asarray(samples, dtype=float)
    if x.size < 2:
        return math.nan
    return float(x.std(ddof=1) / math.sqrt(x.size))
