"""Unit tests for progress reporting and quality metrics.

Tests verify:
- ProgressUpdate fields and throttled reporting
- Recall and exact integer means
- Paired bootstrap intervals
- Log-log slope fits
"""

from __future__ import annotations

import numpy as np
import pytest

from navgraph import config
from navgraph.core.metrics import (
    BootstrapInterval,
    ProgressUpdate,
    bootstrap_mean_difference,
    exact_mean,
    loglog_slope,
    recall_at_1,
    report_progress,
)


class TestProgressUpdate:
    """Test ProgressUpdate dataclass."""

    def test_progress_update_creation(self):
        update = ProgressUpdate(current=50, total=100, message="Processing...", best_error=0.5)
        assert update.current == 50
        assert update.best_error == 0.5
        assert update.fraction == 0.5

    def test_progress_update_optional_best_error(self):
        update = ProgressUpdate(current=10, total=100, message="Starting...")
        assert update.best_error is None

    def test_fraction_of_empty_total(self):
        assert ProgressUpdate(current=0, total=0, message="").fraction == 1.0


class TestReportProgress:
    """Test throttled progress reporting."""

    def test_throttled_with_final_update(self):
        """Updates arrive every PROGRESS_UPDATE_FREQUENCY items and at the end."""
        seen = []
        total = 2 * config.PROGRESS_UPDATE_FREQUENCY + 7
        for i in range(1, total + 1):
            report_progress(seen.append, i, total, "work")
        assert [u.current for u in seen] == [config.PROGRESS_UPDATE_FREQUENCY,
                                             2 * config.PROGRESS_UPDATE_FREQUENCY, total]

    def test_force(self):
        seen = []
        report_progress(seen.append, 3, 1000, "start", force=True)
        assert len(seen) == 1 and seen[0].message == "start"

    def test_no_callback(self):
        report_progress(None, 10, 10, "done")


class TestRecall:
    """Test recall@1."""

    def test_fraction_correct(self):
        assert recall_at_1([1, 2, 3, 4], [1, 2, 0, 0]) == 0.5

    def test_unpaired(self):
        with pytest.raises(ValueError):
            recall_at_1([1, 2], [1])

    def test_empty(self):
        with pytest.raises(ValueError):
            recall_at_1([], [])


class TestExactMean:
    """Test integer-counter means."""

    def test_sum_over_m(self):
        assert exact_mean([1, 2, 4]) == 7 / 3

    def test_large_counters_are_exact(self):
        assert exact_mean([2 ** 53, 1, 1]) == (2 ** 53 + 2) / 3

    def test_empty(self):
        with pytest.raises(ValueError):
            exact_mean([])


class TestBootstrap:
    """Test paired bootstrap intervals."""

    def test_constant_shift_is_separated(self):
        """A constant difference gives a degenerate interval at that value."""
        a = np.arange(50, dtype=float) + 2.0
        b = np.arange(50, dtype=float)
        interval = bootstrap_mean_difference(a, b, seed=3)
        assert interval.mean == pytest.approx(2.0)
        assert interval.low == pytest.approx(2.0)
        assert interval.high == pytest.approx(2.0)
        assert interval.separated

    def test_symmetric_noise_is_not_separated(self):
        diff = np.concatenate([np.ones(100), -np.ones(100)])
        interval = bootstrap_mean_difference(diff, np.zeros(200), seed=1)
        assert interval.low < 0.0 < interval.high
        assert not interval.separated

    def test_interval_contains_mean(self):
        rng = np.random.default_rng(0)
        a = rng.normal(1.0, 1.0, 400)
        b = rng.normal(0.0, 1.0, 400)
        interval = bootstrap_mean_difference(a, b, seed=2)
        assert interval.low <= interval.mean <= interval.high
        assert interval.confidence == config.BOOTSTRAP_CONFIDENCE

    def test_seeded(self):
        a = np.linspace(0.0, 1.0, 30)
        b = a[::-1]
        assert bootstrap_mean_difference(a, b, seed=5) == bootstrap_mean_difference(a, b, seed=5)

    def test_unpaired(self):
        with pytest.raises(ValueError):
            bootstrap_mean_difference([1.0, 2.0], [1.0])

    def test_negative_interval_is_separated(self):
        assert BootstrapInterval(mean=-1.0, low=-2.0, high=-0.5, confidence=0.95).separated


class TestLogLogSlope:
    """Test power-law slope fits."""

    def test_exact_power_law(self):
        x = np.array([1000.0, 2000.0, 4000.0, 8000.0])
        slope, intercept = loglog_slope(x, 3.0 * x ** 0.5)
        assert slope == pytest.approx(0.5)
        assert intercept == pytest.approx(np.log(3.0))

    def test_needs_two_points(self):
        with pytest.raises(ValueError):
            loglog_slope([1.0], [2.0])
