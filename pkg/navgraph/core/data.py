"""Datasets on the unit sphere, query sets, and distance functions.

A ``Dataset`` holds ``n`` unit vectors of ambient dimension ``d + 1`` (so the
sphere dimension is ``d``). Points are stored in float64 and made read-only
after validation; every inner product is therefore accumulated in double
precision whatever the source format was.

Exhaustive nearest-neighbor scans work blockwise over a Gram matrix and break
ties by the lowest dataset index (``np.argmin`` returns the first minimum).
"""

from __future__ import annotations

import hashlib
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np
from scipy.integrate import cumulative_trapezoid

from navgraph import config
from navgraph.core.errors import DimensionMismatch

logger = logging.getLogger(__name__)


class Metric(Enum):
    """Distance used to compare points.

    SPHERICAL and ANGULAR both measure the geodesic angle arccos(<a, b>);
    ANGULAR tags real data that was projected onto the sphere.
    """

    SPHERICAL = "spherical"
    EUCLIDEAN = "euclidean"
    ANGULAR = "angular"


class Regime(Enum):
    DENSE = "dense"
    SPARSE = "sparse"
    MODERATE = "moderate"


# ============================================================================
# Core types
# ============================================================================

def normalize_rows(vectors: np.ndarray) -> np.ndarray:
    """Project every row onto the unit sphere, in float64.

    Raises:
        ValueError: If a row has zero norm.
    """
    arr = np.asarray(vectors, dtype=np.float64)
    norms = np.linalg.norm(arr, axis=-1, keepdims=True)
    if np.any(norms == 0.0):
        raise ValueError("Cannot normalize a zero vector")
    return arr / norms


@dataclass(frozen=True, eq=False)
class Dataset:
    """Unit-norm points indexed by the search structures.

    Attributes:
        points: Array of shape (n, d + 1), float64, read-only.
        metric: Distance used for search and ground truth.
        id: Stable string label.
    """

    points: np.ndarray
    metric: Metric
    id: str

    def __post_init__(self) -> None:
        points = np.array(self.points, dtype=np.float64, copy=True)
        if points.ndim != 2:
            raise ValueError(f"Points must be a 2-D array, got shape {points.shape}")
        if points.shape[0] < 2:
            raise ValueError(f"Dataset needs at least 2 points, got {points.shape[0]}")
        if points.shape[1] < 2:
            raise ValueError("Points must have ambient dimension >= 2 (sphere dimension >= 1)")
        norms = np.linalg.norm(points, axis=1)
        worst = float(np.max(np.abs(norms - 1.0)))
        if worst > config.NORM_TOLERANCE:
            raise ValueError(f"Points must be unit norm; worst deviation {worst:.3e}")
        points.setflags(write=False)
        object.__setattr__(self, "points", points)

    @property
    def n(self) -> int:
        return int(self.points.shape[0])

    @property
    def dim(self) -> int:
        """Ambient dimension d + 1."""
        return int(self.points.shape[1])

    @property
    def d(self) -> int:
        """Sphere dimension."""
        return self.dim - 1

    def fingerprint(self) -> str:
        """SHA-256 of the metric tag and the raw point bytes."""
        digest = hashlib.sha256()
        digest.update(self.metric.value.encode("ascii"))
        digest.update(np.ascontiguousarray(self.points).tobytes())
        return digest.hexdigest()

    def with_points(self, points: np.ndarray, suffix: str) -> "Dataset":
        """A dataset of new points sharing this metric, labeled ``id + suffix``."""
        return Dataset(points=points, metric=self.metric, id=f"{self.id}{suffix}")


@dataclass(frozen=True, eq=False)
class QuerySet:
    """Queries with exhaustive ground truth.

    Attributes:
        queries: Array of shape (m, d + 1), unit norm.
        ground_truth: Index of the exact nearest dataset point per query.
        planted_radius: Radius R of planted queries, if planted.
        planted_index: Dataset element each planted query was drawn around.
    """

    queries: np.ndarray
    ground_truth: np.ndarray
    planted_radius: Optional[float] = None
    planted_index: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        queries = np.asarray(self.queries, dtype=np.float64)
        truth = np.asarray(self.ground_truth, dtype=np.int64)
        if queries.ndim != 2:
            raise ValueError(f"Queries must be a 2-D array, got shape {queries.shape}")
        if truth.shape != (queries.shape[0],):
            raise ValueError("ground_truth must hold one index per query")
        if self.planted_radius is not None and self.planted_index is not None:
            if np.shape(self.planted_index) != truth.shape:
                raise ValueError("planted_index must hold one index per query")
        object.__setattr__(self, "queries", queries)
        object.__setattr__(self, "ground_truth", truth)

    @property
    def m(self) -> int:
        return int(self.queries.shape[0])

    def subset(self, count: int) -> "QuerySet":
        """The first ``count`` queries."""
        planted = None if self.planted_index is None else self.planted_index[:count]
        return QuerySet(self.queries[:count], self.ground_truth[:count],
                        self.planted_radius, planted)


@dataclass(frozen=True)
class RegimeParams:
    """Size regime of a dataset.

    Attributes:
        n: Dataset size.
        d: Sphere dimension.
        omega: log2(n) / d in the dense and moderate regimes, d / log2(n) in the sparse one.
        regime: DENSE iff d < log2(n); SPARSE iff d >= SPARSE_REGIME_FACTOR * log2(n).
    """

    n: int
    d: int
    omega: float
    regime: Regime

    @classmethod
    def from_sizes(cls, n: int, d: int) -> "RegimeParams":
        if n < 2 or d < 1:
            raise ValueError(f"Need n >= 2 and d >= 1, got n={n}, d={d}")
        log_n = math.log2(n)
        if d < log_n:
            regime = Regime.DENSE
        elif d >= config.SPARSE_REGIME_FACTOR * log_n:
            regime = Regime.SPARSE
        else:
            regime = Regime.MODERATE
        omega = d / log_n if regime is Regime.SPARSE else log_n / d
        return cls(n=n, d=d, omega=omega, regime=regime)

    @property
    def delta(self) -> float:
        """Typical sine-scale of the NN distance: 2^-omega (dense) or 2 ln 2 / omega (sparse)."""
        if self.regime is Regime.SPARSE:
            return 2.0 * math.log(2.0) / self.omega
        return 2.0 ** (-self.omega)


# ============================================================================
# Distances
# ============================================================================

def distance(a: np.ndarray, b: np.ndarray, metric: Metric) -> float:
    """Distance between two vectors.

    Examples:
        >>> distance(np.array([1.0, 0.0]), np.array([0.0, 1.0]), Metric.EUCLIDEAN)
        1.4142135623730951
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"Vectors of shape {a.shape} and {b.shape}")
    if metric is Metric.EUCLIDEAN:
        return float(np.linalg.norm(a - b))
    return float(np.arccos(np.clip(np.dot(a, b), -1.0, 1.0)))


def distances_to(points: np.ndarray, q: np.ndarray, metric: Metric) -> np.ndarray:
    """Distances from every row of ``points`` to ``q``."""
    if points.shape[-1] != q.shape[-1]:
        raise DimensionMismatch(f"Points of dim {points.shape[-1]} vs query of dim {q.shape[-1]}")
    if metric is Metric.EUCLIDEAN:
        return np.linalg.norm(points - q, axis=-1)
    return np.arccos(np.clip(points @ q, -1.0, 1.0))


def pairwise_distances(queries: np.ndarray, points: np.ndarray, metric: Metric) -> np.ndarray:
    """Distance matrix of shape (len(queries), len(points))."""
    if queries.shape[-1] != points.shape[-1]:
        raise DimensionMismatch(f"Queries of dim {queries.shape[-1]} vs points of dim {points.shape[-1]}")
    if metric is Metric.EUCLIDEAN:
        sq = (
            np.einsum("ij,ij->i", queries, queries)[:, None]
            + np.einsum("ij,ij->i", points, points)[None, :]
            - 2.0 * (queries @ points.T)
        )
        return np.sqrt(np.maximum(sq, 0.0))
    return np.arccos(np.clip(queries @ points.T, -1.0, 1.0))


def block_rows(n: int) -> int:
    """Rows per block so that a block of the Gram matrix stays bounded."""
    return max(1, config.GRAM_BLOCK_ELEMENTS // max(1, n))


def _row_blocks(m: int, n: int) -> List[Tuple[int, int]]:
    step = block_rows(n)
    return [(start, min(m, start + step)) for start in range(0, m, step)]


def exhaustive_nn(ds: Dataset, queries: np.ndarray, threads: Optional[int] = None) -> np.ndarray:
    """Index of the nearest dataset point for every query, lowest index on ties."""
    queries = np.asarray(queries, dtype=np.float64)
    if queries.ndim != 2 or queries.shape[1] != ds.dim:
        raise DimensionMismatch(f"Queries must have shape (m, {ds.dim}), got {queries.shape}")

    def scan(bounds: Tuple[int, int]) -> np.ndarray:
        lo, hi = bounds
        return np.argmin(pairwise_distances(queries[lo:hi], ds.points, ds.metric), axis=1)

    blocks = _row_blocks(queries.shape[0], ds.n)
    if not blocks:
        return np.empty(0, dtype=np.int64)
    with ThreadPoolExecutor(max_workers=config.resolve_thread_count(threads)) as pool:
        parts = list(pool.map(scan, blocks))
    return np.concatenate(parts).astype(np.int64)


def nn_distances(ds: Dataset) -> np.ndarray:
    """Distance from every dataset point to its nearest other point."""
    out = np.empty(ds.n, dtype=np.float64)
    for lo, hi in _row_blocks(ds.n, ds.n):
        dist = pairwise_distances(ds.points[lo:hi], ds.points, ds.metric)
        dist[np.arange(hi - lo), np.arange(lo, hi)] = np.inf
        out[lo:hi] = dist.min(axis=1)
    return out


# ============================================================================
# Generators
# ============================================================================

def generate_uniform(n: int, d: int, seed: int, metric: Metric = Metric.SPHERICAL) -> Dataset:
    """``n`` i.i.d. uniform points on S^d from normalized Gaussian vectors.

    Args:
        n: Number of points, at least 2.
        d: Sphere dimension, at least 1.
        seed: Seed of the single generator stream.
        metric: Metric tag of the result.

    Returns:
        Dataset labeled ``uniform-n{n}-d{d}-s{seed}``.

    Raises:
        ValueError: If n < 2 or d < 1.
    """
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    rng = np.random.default_rng(seed)
    points = normalize_rows(rng.standard_normal(size=(n, d + 1)))
    return Dataset(points=points, metric=metric, id=f"uniform-n{n}-d{d}-s{seed}")


def _sample_cap_angles(rng: np.random.Generator, count: int, radius: float, d: int) -> np.ndarray:
    """Angles with density proportional to sin^(d-1)(psi) on [0, radius]."""
    grid = np.linspace(0.0, radius, config.PLANTED_ANGLE_GRID)
    if d == 1:
        pdf = np.ones_like(grid)
    else:
        with np.errstate(divide="ignore"):
            log_ratio = np.log(np.sin(grid)) - math.log(math.sin(radius))
        pdf = np.exp((d - 1) * log_ratio)
    cdf = cumulative_trapezoid(pdf, grid, initial=0.0)
    cdf /= cdf[-1]
    return np.interp(rng.uniform(size=count), cdf, grid)


def _orthogonal_directions(rng: np.random.Generator, centers: np.ndarray) -> np.ndarray:
    """One uniform unit direction orthogonal to each center."""
    out = np.empty_like(centers)
    for i, center in enumerate(centers):
        while True:
            g = rng.standard_normal(size=center.shape[0])
            g -= np.dot(g, center) * center
            norm = np.linalg.norm(g)
            if norm > 1e-12:
                out[i] = g / norm
                break
    return out


def plant_queries(ds: Dataset, m: int, R: float, seed: int) -> QuerySet:
    """Queries placed uniformly within spherical distance ``R`` of random dataset points.

    The planted point is not assumed to be the answer: ground truth is
    recomputed by an exhaustive scan.

    Args:
        ds: Dataset to plant into.
        m: Number of queries.
        R: Cap radius, strictly inside (0, pi/2).
        seed: Generator seed.

    Raises:
        ValueError: If R is outside (0, pi/2) or m < 1.
    """
    if not 0.0 < R < math.pi / 2.0:
        raise ValueError(f"Planted radius must be in (0, pi/2), got {R}")
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    rng = np.random.default_rng(seed)
    planted = rng.integers(0, ds.n, size=m)
    centers = ds.points[planted]
    psi = _sample_cap_angles(rng, m, R, ds.d)
    directions = _orthogonal_directions(rng, centers)
    queries = normalize_rows(np.cos(psi)[:, None] * centers + np.sin(psi)[:, None] * directions)
    truth = exhaustive_nn(ds, queries)
    moved = int(np.count_nonzero(truth != planted))
    logger.debug("planted %d queries at R=%.4g; %d have a closer point than the planted one",
                 m, R, moved)
    return QuerySet(queries=queries, ground_truth=truth, planted_radius=R, planted_index=planted)


def sample_queries_uniform(ds: Dataset, m: int, seed: int) -> QuerySet:
    """``m`` uniform queries on the sphere with exhaustive ground truth."""
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    rng = np.random.default_rng(seed)
    queries = normalize_rows(rng.standard_normal(size=(m, ds.dim)))
    return QuerySet(queries=queries, ground_truth=exhaustive_nn(ds, queries))


def queries_from_points(ds: Dataset, queries: np.ndarray) -> QuerySet:
    """Wrap externally supplied query vectors, normalizing them and computing ground truth."""
    queries = normalize_rows(queries)
    return QuerySet(queries=queries, ground_truth=exhaustive_nn(ds, queries))


def deduplicate(ds: Dataset) -> Dataset:
    """Drop exact duplicate points, keeping first occurrences in order."""
    _, first = np.unique(ds.points, axis=0, return_index=True)
    keep = np.sort(first)
    if keep.size == ds.n:
        return ds
    logger.info("removed %d duplicate points from %s", ds.n - keep.size, ds.id)
    return ds.with_points(ds.points[keep], "-dedup")


def has_duplicates(ds: Dataset) -> bool:
    return np.unique(ds.points, axis=0).shape[0] < ds.n


# ============================================================================
# Profiles and regime helpers
# ============================================================================

@dataclass(frozen=True, eq=False)
class NNHistogram:
    """Binned nearest-neighbor distances.

    Attributes:
        counts: Points per bin.
        edges: Bin edges, length len(counts) + 1.
        distances: Raw NN distance per point.
    """

    counts: np.ndarray
    edges: np.ndarray
    distances: np.ndarray

    @property
    def mode(self) -> float:
        """Center of the most populated bin."""
        i = int(np.argmax(self.counts))
        return float(0.5 * (self.edges[i] + self.edges[i + 1]))


def nn_distance_histogram(ds: Dataset, bins: int = config.DEFAULT_HISTOGRAM_BINS) -> NNHistogram:
    """Histogram of exhaustive nearest-neighbor distances."""
    if bins < 1:
        raise ValueError(f"bins must be >= 1, got {bins}")
    dist = nn_distances(ds)
    counts, edges = np.histogram(dist, bins=bins)
    return NNHistogram(counts=counts, edges=edges, distances=dist)


def min_dense_m(c: float) -> float:
    """Smallest dense-regime M for which greedy search solves c,R-ANN: sqrt(4c^2 / (3c^2 - 1))."""
    if c < 1.0:
        raise ValueError(f"Approximation factor must be >= 1, got {c}")
    return math.sqrt(4.0 * c * c / (3.0 * c * c - 1.0))


def max_sparse_m(c: float, metric: Metric = Metric.SPHERICAL) -> float:
    """Largest sparse-regime M for c,R-ANN: a^2 / (a^2 + 1).

    ``a`` is cos(pi / (2c)) for geodesic distance and 1 - 1/c^2 for Euclidean.
    """
    if c <= 1.0:
        raise ValueError(f"Approximation factor must be > 1, got {c}")
    if metric is Metric.EUCLIDEAN:
        a = 1.0 - 1.0 / (c * c)
    else:
        a = math.cos(math.pi / (2.0 * c))
    return a * a / (a * a + 1.0)


def rank_distance(k: int, n: int, d: int) -> float:
    """Distance scale of the k-th neighbor, (k / n)^(1/d)."""
    return (k / n) ** (1.0 / d)


def within_c_r(answer_distance: float, R: float, c: float) -> bool:
    """c,R-ANN success: the returned point lies within c * R of the query."""
    return answer_distance <= c * R
