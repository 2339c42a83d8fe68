import math

import numpy as np
import pytest

from percolab.errors import InsufficientDataError
from percolab.fitting import (calibrate_rho, exceedance_counts, fit_log_counts, line_fit, mean_stderr,
                              percentile_ci, tail_rate_fit, variance_stderr)


def test_exceedance_counts_brute_force():
    rng = np.random.default_rng(0)
    s = rng.integers(0, 10, 200)
    th = np.arange(-1, 11)
    want = [sum(1 for v in s if v > t) for t in th]
    assert exceedance_counts(s, th).tolist() == want


def test_geometric_rate_recovered():
    rng = np.random.default_rng(1)
    q = 0.6
    s = rng.geometric(1 - q, 20000) - 1
    fit = tail_rate_fit(s, np.arange(0, 15))
    assert fit.rate == pytest.approx(-math.log(q), rel=0.1)
    assert fit.r2 > 0.95


def test_constant_and_short_samples():
    assert tail_rate_fit(np.full(100, 3.0), np.arange(5)).degenerate
    with pytest.raises(InsufficientDataError):
        tail_rate_fit([], [1, 2])
    with pytest.raises(InsufficientDataError):
        tail_rate_fit(np.arange(20), np.arange(12, 20))
    assert fit_log_counts([0, 1], [5, 2]).degenerate


def test_two_point_fit_is_exact():
    f = fit_log_counts([0, 2], [100, 100 * math.exp(-1.0)], min_count=1)
    assert f.rate == pytest.approx(0.5)


def test_calibrate_rho():
    assert calibrate_rho([1.0, 1.0]) == pytest.approx(1.25)
    assert calibrate_rho([0.2]) == 1.0
    with pytest.raises(InsufficientDataError):
        calibrate_rho([])


def test_line_fit_exact_line_and_ci():
    x = np.arange(10.0)
    f = line_fit(x, 3 * x + 1)
    assert f.slope == pytest.approx(3) and f.intercept == pytest.approx(1)
    assert f.ci[0] == pytest.approx(3) and f.ci[1] == pytest.approx(3)
    rng = np.random.default_rng(2)
    hits = 0
    for _ in range(400):
        y = 2 * x + rng.normal(0, 1, x.size)
        lo, hi = line_fit(x, y).ci
        hits += lo <= 2 <= hi
    assert 0.91 <= hits / 400 <= 0.99
    with pytest.raises(InsufficientDataError):
        line_fit([1, 2], [1, 2])


def test_stderr_helpers():
    rng = np.random.default_rng(3)
    x = rng.normal(0, 2, 4000)
    assert mean_stderr(x) == pytest.approx(2 / math.sqrt(4000), rel=0.05)
    # normal samples: se(s^2) = sigma^2 sqrt(2/n)
    assert variance_stderr(x) == pytest.approx(4 * math.sqrt(2 / 4000), rel=0.1)
    assert math.isnan(mean_stderr([1.0]))
    lo, hi = percentile_ci(np.arange(1001))
    assert (lo, hi) == pytest.approx((25.0, 975.0))
