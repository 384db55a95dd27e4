"""Progress reporting and quality metrics.

Long-running operations accept an optional ``progress_cb`` that receives
``ProgressUpdate`` objects; this module also holds the small statistics the
benchmarks are built from: recall, paired bootstrap intervals and log-log
slope fits.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from navgraph import config


@dataclass
class ProgressUpdate:
    """Progress information for long-running computations.

    Attributes:
        current: Items processed so far.
        total: Total items to process.
        message: Descriptive text (e.g., "Sampling long edges 500/10000").
        best_error: Best error found so far, where the caller tracks one.
    """
    current: int
    total: int
    message: str
    best_error: Optional[float] = None

    @property
    def fraction(self) -> float:
        return 1.0 if self.total <= 0 else min(1.0, self.current / self.total)


# Type alias for progress callback function
ProgressCallback = Callable[[ProgressUpdate], None]


def report_progress(progress_cb: Optional[ProgressCallback], current: int, total: int,
                    message: str, best_error: Optional[float] = None,
                    force: bool = False) -> None:
    """Send an update every PROGRESS_UPDATE_FREQUENCY items, and always at the end."""
    if progress_cb is None:
        return
    if force or current == total or current % config.PROGRESS_UPDATE_FREQUENCY == 0:
        progress_cb(ProgressUpdate(current=current, total=total, message=message,
                                   best_error=best_error))


def recall_at_1(answers: Sequence[int], truth: Sequence[int]) -> float:
    """Fraction of answers equal to the exact nearest neighbor.

    Examples:
        >>> recall_at_1([1, 2, 3], [1, 2, 4])
        0.6666666666666666
    """
    answers = np.asarray(answers)
    truth = np.asarray(truth)
    if answers.shape != truth.shape:
        raise ValueError("answers and truth must have the same length")
    if answers.size == 0:
        raise ValueError("Cannot compute recall of an empty query set")
    return float(np.count_nonzero(answers == truth)) / answers.size


def exact_mean(counts: Sequence[int]) -> float:
    """Mean of integer counters as sum / m, summed in integer arithmetic."""
    arr = np.asarray(counts, dtype=np.int64)
    if arr.size == 0:
        raise ValueError("Cannot average an empty sequence")
    return int(arr.sum()) / arr.size


@dataclass(frozen=True)
class BootstrapInterval:
    """Percentile interval of a paired mean difference a - b.

    Attributes:
        mean: Observed mean of a - b.
        low: Lower percentile bound.
        high: Upper percentile bound.
        confidence: Two-sided confidence level.
    """
    mean: float
    low: float
    high: float
    confidence: float

    @property
    def separated(self) -> bool:
        """True when the interval excludes zero."""
        return self.low > 0.0 or self.high < 0.0


def bootstrap_mean_difference(a: Sequence[float], b: Sequence[float], seed: int = 0,
                              resamples: int = config.BOOTSTRAP_RESAMPLES,
                              confidence: float = config.BOOTSTRAP_CONFIDENCE) -> BootstrapInterval:
    """Paired bootstrap over queries of mean(a - b).

    Raises:
        ValueError: If the samples are unpaired or empty.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or a.size == 0:
        raise ValueError("Bootstrap needs two non-empty paired samples")
    diff = a - b
    rng = np.random.default_rng(seed)
    picks = rng.integers(0, diff.size, size=(resamples, diff.size))
    means = diff[picks].mean(axis=1)
    tail = (1.0 - confidence) / 2.0
    low, high = np.quantile(means, [tail, 1.0 - tail])
    return BootstrapInterval(mean=float(diff.mean()), low=float(low), high=float(high),
                             confidence=confidence)


def loglog_slope(x: Sequence[float], y: Sequence[float]) -> Tuple[float, float]:
    """Least-squares fit of log(y) = slope * log(x) + intercept.

    Returns:
        Tuple of (slope, intercept).
    """
    lx = np.log(np.asarray(x, dtype=np.float64))
    ly = np.log(np.asarray(y, dtype=np.float64))
    if lx.size < 2:
        raise ValueError("Need at least two points to fit a slope")
    slope, intercept = np.polyfit(lx, ly, 1)
    return float(slope), float(intercept)
