"""Configuration constants for navgraph.

All tunables live here as ``Final`` constants, grouped by concern. Library
code reads them as defaults; the CLI and experiment plans override them per
run.

Conventions:
    - ``d`` is always the sphere dimension: points of S^d live in R^(d+1).
    - Angles are in radians; volumes are relative to the full sphere.
"""

from __future__ import annotations

import os
from typing import Optional

try:
    from typing import Final
except ImportError:  # pragma: no cover
    from typing_extensions import Final


# ============================================================================
# Numerics
# ============================================================================

# Absolute tolerance of every 1-D quadrature in the geometry module
QUADRATURE_EPSABS: Final[float] = 1e-11

# Relative tolerance of the same quadratures
QUADRATURE_EPSREL: Final[float] = 1e-10

# Subinterval limit handed to scipy.integrate.quad
QUADRATURE_LIMIT: Final[int] = 200

# Stored points must have unit norm within this tolerance
NORM_TOLERANCE: Final[float] = 1e-6

# Monte Carlo oracles draw samples in chunks of this many points
MONTE_CARLO_CHUNK: Final[int] = 200_000


# ============================================================================
# Geometry bounds
# ============================================================================

# Lower envelope constant: C(gamma) >= c1 * d^(-1/2) * gamma_hat^d
CAP_BOUND_LOWER: Final[float] = 0.3

# Upper envelope constant: C(gamma) <= c2 * d^(-1/2) * gamma_hat^d * min(sqrt(d), 1/gamma)
CAP_BOUND_UPPER: Final[float] = 1.0


# ============================================================================
# Data
# ============================================================================

# Grid size for inverse-CDF sampling of the planted-query angle
PLANTED_ANGLE_GRID: Final[int] = 4096

# Sparse regime starts at d >= factor * log2(n); dense regime ends at d < log2(n)
SPARSE_REGIME_FACTOR: Final[int] = 4

# Default number of histogram bins for nearest-neighbor distance profiles
DEFAULT_HISTOGRAM_BINS: Final[int] = 50


# ============================================================================
# Graph construction
# ============================================================================

# Number of Gram-matrix entries computed per block during exhaustive scans
GRAM_BLOCK_ELEMENTS: Final[int] = 1 << 22

# Graph file magic and format version
GRAPH_FILE_MAGIC: Final[bytes] = b"NVGR"
GRAPH_FILE_VERSION: Final[int] = 1


# ============================================================================
# Long-range edges
# ============================================================================

# Default pre-sampling exponent: candidates drawn per long edge = ceil(n^phi)
DEFAULT_PRESAMPLE_EXPONENT: Final[float] = 0.5


# ============================================================================
# Search
# ============================================================================

# RandomHemisphere start: maximum number of seeded draws
PICK_START_MAX_DRAWS: Final[int] = 64

# Default max_steps = factor * n^(1/d) * log2(n)
MAX_STEPS_FACTOR: Final[float] = 16.0


# ============================================================================
# Benchmarks
# ============================================================================

# Resamples used for every bootstrap interval
BOOTSTRAP_RESAMPLES: Final[int] = 1000

# Confidence level of bootstrap separation claims
BOOTSTRAP_CONFIDENCE: Final[float] = 0.95

# Default number of queries per synthetic experiment
DEFAULT_QUERY_COUNT: Final[int] = 1000

# Recall@1 target of the minimal-degree search over kNN graphs
TABLE2_RECALL_TARGET: Final[float] = 0.99

# Version tag written into every bench CSV
CSV_SCHEMA_VERSION: Final[int] = 1

# Progress callback update frequency (every N items)
PROGRESS_UPDATE_FREQUENCY: Final[int] = 50


# ============================================================================
# Concurrency
# ============================================================================

# Environment variable overriding the worker thread count
THREADS_ENV_VAR: Final[str] = "NAVGRAPH_THREADS"


def resolve_thread_count(requested: Optional[int] = None) -> int:
    """Return the number of worker threads to use.

    Precedence: explicit argument, then ``NAVGRAPH_THREADS``, then the CPU
    count.

    Args:
        requested: Explicit thread count, or None.

    Returns:
        A positive thread count.

    Raises:
        ValueError: If the explicit or environment value is not a positive integer.
    """
    if requested is not None:
        if requested < 1:
            raise ValueError(f"Thread count must be >= 1, got {requested}")
        return requested
    raw = os.environ.get(THREADS_ENV_VAR)
    if raw:
        try:
            value = int(raw)
        except ValueError as exc:
            raise ValueError(f"{THREADS_ENV_VAR} must be an integer, got {raw!r}") from exc
        if value < 1:
            raise ValueError(f"{THREADS_ENV_VAR} must be >= 1, got {value}")
        return value
    return os.cpu_count() or 1
