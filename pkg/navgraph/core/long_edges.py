"""Long-range edge sampling.

Four schemes give every node a few directed shortcuts:

    kl-dist             P(u -> v) proportional to rho(u, v)^(-d)
    kl-rank             P(u -> k-th neighbor of u) proportional to 1/k
    kl-rank-presampled  draw ceil(n^phi) uniform candidates, then rank-sample among them
    uniform             uniform over all other nodes

Each node draws ``edges_per_node`` targets independently with a generator
seeded by ``[seed, node]``, so serial and threaded runs produce the same
edges. Repeated targets collapse into one edge: ``edges_per_node`` is an
upper bound on the out-degree.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.stats import hypergeom

from navgraph import config
from navgraph.core.data import Dataset, distances_to, has_duplicates
from navgraph.core.errors import DegenerateDistance, GraphDatasetMismatch
from navgraph.core.graphs import SearchGraph, csr_from_lists
from navgraph.core.metrics import ProgressCallback, report_progress

logger = logging.getLogger(__name__)


class LongEdgeScheme(Enum):
    KLEINBERG_DISTANCE = "kl-dist"
    KLEINBERG_RANK = "kl-rank"
    RANK_PRESAMPLED = "kl-rank-presampled"
    UNIFORM_RANDOM = "uniform"


def default_edges_per_node(n: int) -> int:
    """ceil(log2 n) long edges per node."""
    return max(1, math.ceil(math.log2(n)))


@dataclass(frozen=True)
class LongEdgeConfig:
    """Parameters of a long-edge sampler.

    Attributes:
        scheme: Sampling law.
        edges_per_node: Draws per node, at least 1 and below n.
        presample_exponent: phi in (0, 1); presampled scheme only.
        seed: Master seed; node ``u`` uses ``[seed, u]``.
        exclude_near: kl-dist only; never link to points within n^(-1/d).
        use_alias: kl-dist only; cache a Vose alias table per source.
    """

    scheme: LongEdgeScheme
    edges_per_node: int
    presample_exponent: float = config.DEFAULT_PRESAMPLE_EXPONENT
    seed: int = 0
    exclude_near: bool = False
    use_alias: bool = False

    def __post_init__(self) -> None:
        if self.edges_per_node < 1:
            raise ValueError(f"edges_per_node must be >= 1, got {self.edges_per_node}")
        if not 0.0 < self.presample_exponent < 1.0:
            raise ValueError(f"presample_exponent must be in (0, 1), got {self.presample_exponent}")

    @property
    def label(self) -> str:
        base = f"{self.scheme.value}-E{self.edges_per_node}"
        if self.scheme is LongEdgeScheme.RANK_PRESAMPLED:
            base += f"-phi{self.presample_exponent:g}"
        return base


@dataclass(frozen=True, eq=False)
class LongEdgeSet:
    """Per-node long-edge targets, each list sorted and unique.

    Attributes:
        lists: One integer array per node.
        scheme: Scheme tag stored with the graph.
        dataset_id: Dataset the edges were sampled on.
    """

    lists: Tuple[np.ndarray, ...]
    scheme: str
    dataset_id: str

    @property
    def n(self) -> int:
        return len(self.lists)

    def total(self) -> int:
        return int(sum(x.size for x in self.lists))


# ============================================================================
# Alias table
# ============================================================================

class AliasTable:
    """Vose alias table for O(1) draws from a fixed discrete distribution."""

    def __init__(self, probabilities: np.ndarray) -> None:
        p = np.asarray(probabilities, dtype=np.float64)
        if p.ndim != 1 or p.size == 0 or np.any(p < 0) or p.sum() <= 0:
            raise ValueError("Alias table needs a non-empty nonnegative weight vector")
        size = p.size
        scaled = p * (size / p.sum())
        prob = np.ones(size, dtype=np.float64)
        alias = np.arange(size, dtype=np.int64)
        small = [i for i in range(size) if scaled[i] < 1.0]
        large = [i for i in range(size) if scaled[i] >= 1.0]
        while small and large:
            lo = small.pop()
            hi = large.pop()
            prob[lo] = scaled[lo]
            alias[lo] = hi
            scaled[hi] = (scaled[hi] + scaled[lo]) - 1.0
            if scaled[hi] < 1.0:
                small.append(hi)
            else:
                large.append(hi)
        # leftovers are 1 up to rounding
        self._prob = prob
        self._alias = alias

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        column = rng.integers(0, self._prob.size, size=count)
        coin = rng.random(size=count)
        return np.where(coin < self._prob[column], column, self._alias[column])


def _inverse_cdf(probabilities: np.ndarray, rng: np.random.Generator, count: int) -> np.ndarray:
    cdf = np.cumsum(probabilities)
    picks = np.searchsorted(cdf, rng.random(size=count) * cdf[-1], side="right")
    return np.minimum(picks, probabilities.size - 1)


def rank_probability(k: int, n: int) -> Fraction:
    """Exact P(target is the k-th nearest of the n - 1 other nodes) = (1/k) / H_(n-1)."""
    if not 1 <= k < n:
        raise ValueError(f"Rank must satisfy 1 <= k < n={n}, got {k}")
    harmonic = sum((Fraction(1, i) for i in range(1, n)), Fraction(0))
    return Fraction(1, k) / harmonic


def _harmonic_cdf(size: int) -> np.ndarray:
    """Unnormalized CDF of P(rank k) proportional to 1/k, k = 1..size."""
    return np.cumsum(1.0 / np.arange(1, size + 1, dtype=np.float64))


def _draw_ranks(harmonic_cdf: np.ndarray, rng: np.random.Generator, count: int) -> np.ndarray:
    """Ranks (1-based) drawn with probability (1/k) / H."""
    picks = np.searchsorted(harmonic_cdf, rng.random(size=count) * harmonic_cdf[-1], side="right")
    return np.minimum(picks, harmonic_cdf.size - 1) + 1


def _nodes_at_ranks(dist: np.ndarray, ranks: np.ndarray) -> np.ndarray:
    """Node at each 1-based rank of ``dist`` ordered by (distance, index).

    The source must already carry distance +inf.
    """
    unique_ranks = np.unique(ranks)
    values = np.partition(dist, unique_ranks - 1)[unique_ranks - 1]
    below = np.count_nonzero(dist[None, :] < values[:, None], axis=1)
    lookup: Dict[int, int] = {}
    for rank, value, count in zip(unique_ranks.tolist(), values, below.tolist()):
        tied = np.flatnonzero(dist == value)
        lookup[rank] = int(tied[rank - 1 - count])
    return np.array([lookup[r] for r in ranks.tolist()], dtype=np.int64)


# ============================================================================
# Samplers
# ============================================================================

class LongEdgeSampler:
    """Base class: exact per-source law plus seeded draws.

    Subclasses implement ``target_probabilities`` and ``draw``.
    """

    scheme: LongEdgeScheme

    def __init__(self, ds: Dataset, cfg: LongEdgeConfig) -> None:
        if cfg.edges_per_node >= ds.n:
            raise ValueError(f"edges_per_node={cfg.edges_per_node} must be < n={ds.n}")
        self.ds = ds
        self.cfg = cfg

    def _distances(self, source: int) -> np.ndarray:
        dist = distances_to(self.ds.points, self.ds.points[source], self.ds.metric)
        dist[source] = np.inf
        return dist

    def _check_source(self, source: int) -> None:
        if not 0 <= source < self.ds.n:
            raise GraphDatasetMismatch(f"Source {source} out of range for n={self.ds.n}")

    def neighbor_order(self, source: int) -> np.ndarray:
        """All other nodes sorted by (distance, index)."""
        self._check_source(source)
        return np.argsort(self._distances(source), kind="stable")[:-1]

    def target_probabilities(self, source: int) -> np.ndarray:
        """Probability of each node being one drawn target of ``source`` (0 at ``source``)."""
        raise NotImplementedError

    def draw(self, source: int, count: int, rng: np.random.Generator) -> np.ndarray:
        """``count`` independent targets of ``source`` (with repetition)."""
        raise NotImplementedError

    def sample_node(self, source: int) -> np.ndarray:
        rng = np.random.default_rng([self.cfg.seed, source])
        return np.unique(self.draw(source, self.cfg.edges_per_node, rng))

    def sample_all(self, threads: Optional[int] = None,
                   progress_cb: Optional[ProgressCallback] = None) -> LongEdgeSet:
        """Long edges of every node."""
        n = self.ds.n
        chunk = max(1, config.PROGRESS_UPDATE_FREQUENCY)
        bounds = [(lo, min(n, lo + chunk)) for lo in range(0, n, chunk)]

        def work(span: Tuple[int, int]) -> List[np.ndarray]:
            return [self.sample_node(u) for u in range(*span)]

        lists: List[np.ndarray] = []
        with ThreadPoolExecutor(max_workers=config.resolve_thread_count(threads)) as pool:
            for part in pool.map(work, bounds):
                lists.extend(part)
                report_progress(progress_cb, len(lists), n,
                                f"Sampling {self.scheme.value} edges {len(lists)}/{n}", force=True)
        edges = LongEdgeSet(lists=tuple(lists), scheme=self.scheme.value, dataset_id=self.ds.id)
        logger.info("sampled %d %s edges on %s", edges.total(), self.scheme.value, self.ds.id)
        return edges


class DistanceSampler(LongEdgeSampler):
    """P(u -> v) = rho(u, v)^(-d) / sum_w rho(u, w)^(-d), computed in the log domain."""

    scheme = LongEdgeScheme.KLEINBERG_DISTANCE

    def __init__(self, ds: Dataset, cfg: LongEdgeConfig) -> None:
        super().__init__(ds, cfg)
        if has_duplicates(ds):
            raise DegenerateDistance(f"{ds.id} contains duplicate points; deduplicate it first")
        self._alias: Dict[int, AliasTable] = {}

    def target_probabilities(self, source: int) -> np.ndarray:
        self._check_source(source)
        dist = self._distances(source)
        if np.any(dist == 0.0):
            raise DegenerateDistance(f"Node {source} has a neighbor at distance 0")
        log_w = -self.ds.d * np.log(dist)
        if self.cfg.exclude_near:
            near = dist <= self.ds.n ** (-1.0 / self.ds.d)
            if np.all(near | np.isinf(dist)):
                logger.debug("node %d: every candidate is near; keeping them", source)
            else:
                log_w[near] = -np.inf
        log_w -= np.max(log_w)
        weights = np.exp(log_w)
        return weights / weights.sum()

    def draw(self, source: int, count: int, rng: np.random.Generator) -> np.ndarray:
        if self.cfg.use_alias:
            table = self._alias.get(source)
            if table is None:
                table = AliasTable(self.target_probabilities(source))
                self._alias[source] = table
            return table.sample(rng, count)
        return _inverse_cdf(self.target_probabilities(source), rng, count)


class RankSampler(LongEdgeSampler):
    """P(u -> k-th nearest neighbor) = (1/k) / H_(n-1), ties by index."""

    scheme = LongEdgeScheme.KLEINBERG_RANK

    def __init__(self, ds: Dataset, cfg: LongEdgeConfig) -> None:
        super().__init__(ds, cfg)
        self._harmonic = _harmonic_cdf(ds.n - 1)

    def target_probabilities(self, source: int) -> np.ndarray:
        ranks = np.arange(1, self.ds.n, dtype=np.float64)
        probs = np.zeros(self.ds.n, dtype=np.float64)
        probs[self.neighbor_order(source)] = (1.0 / ranks) / self._harmonic[-1]
        return probs

    def draw(self, source: int, count: int, rng: np.random.Generator) -> np.ndarray:
        self._check_source(source)
        ranks = _draw_ranks(self._harmonic, rng, count)
        return _nodes_at_ranks(self._distances(source), ranks)


class PresampledRankSampler(LongEdgeSampler):
    """Rank sampling restricted to ceil(n^phi) fresh uniform candidates per draw."""

    scheme = LongEdgeScheme.RANK_PRESAMPLED

    def __init__(self, ds: Dataset, cfg: LongEdgeConfig) -> None:
        super().__init__(ds, cfg)
        self.subset_size = min(math.ceil(ds.n ** cfg.presample_exponent), ds.n - 1)
        self._harmonic = _harmonic_cdf(self.subset_size)

    def rank_probabilities(self) -> np.ndarray:
        """Exact P(target has global rank k), k = 1..n-1.

        The target is a candidate with probability m / (n - 1); given that,
        the number of closer candidates among the other m - 1 is
        hypergeometric over the n - 2 remaining nodes with k - 1 closer ones.
        """
        n, m = self.ds.n, self.subset_size
        ks = np.arange(1, n, dtype=np.int64)
        js = np.arange(m, dtype=np.int64)
        pmf = hypergeom.pmf(js[None, :], n - 2, ks[:, None] - 1, m - 1) if m > 1 else \
            np.ones((ks.size, 1))
        within = (1.0 / (js + 1)) / self._harmonic[-1]
        return (m / (n - 1)) * (pmf @ within)

    def target_probabilities(self, source: int) -> np.ndarray:
        order = self.neighbor_order(source)
        probs = np.zeros(self.ds.n, dtype=np.float64)
        probs[order] = self.rank_probabilities()
        return probs

    def draw(self, source: int, count: int, rng: np.random.Generator) -> np.ndarray:
        self._check_source(source)
        n, m = self.ds.n, self.subset_size
        ranks = _draw_ranks(self._harmonic, rng, count)
        points = self.ds.points
        out = np.empty(count, dtype=np.int64)
        for i in range(count):
            cand = rng.choice(n - 1, size=m, replace=False)
            cand = cand + (cand >= source)
            dist = distances_to(points[cand], points[source], self.ds.metric)
            order = np.lexsort((cand, dist))
            out[i] = cand[order[ranks[i] - 1]]
        return out


class UniformSampler(LongEdgeSampler):
    """Uniform targets over all nodes except the source."""

    scheme = LongEdgeScheme.UNIFORM_RANDOM

    def target_probabilities(self, source: int) -> np.ndarray:
        self._check_source(source)
        probs = np.full(self.ds.n, 1.0 / (self.ds.n - 1))
        probs[source] = 0.0
        return probs

    def draw(self, source: int, count: int, rng: np.random.Generator) -> np.ndarray:
        self._check_source(source)
        picks = rng.integers(0, self.ds.n - 1, size=count)
        return picks + (picks >= source)


_SAMPLERS = {
    LongEdgeScheme.KLEINBERG_DISTANCE: DistanceSampler,
    LongEdgeScheme.KLEINBERG_RANK: RankSampler,
    LongEdgeScheme.RANK_PRESAMPLED: PresampledRankSampler,
    LongEdgeScheme.UNIFORM_RANDOM: UniformSampler,
}


def make_sampler(ds: Dataset, cfg: LongEdgeConfig) -> LongEdgeSampler:
    return _SAMPLERS[cfg.scheme](ds, cfg)


def sample_distance_based(ds: Dataset, cfg: LongEdgeConfig,
                          progress_cb: Optional[ProgressCallback] = None) -> LongEdgeSet:
    """Long edges drawn with probability proportional to rho(u, v)^(-d).

    Raises:
        DegenerateDistance: The dataset has duplicate points.
    """
    return DistanceSampler(ds, cfg).sample_all(progress_cb=progress_cb)


def sample_rank_based(ds: Dataset, cfg: LongEdgeConfig,
                      progress_cb: Optional[ProgressCallback] = None) -> LongEdgeSet:
    """Long edges drawn with probability proportional to 1/rank."""
    return RankSampler(ds, cfg).sample_all(progress_cb=progress_cb)


def sample_rank_presampled(ds: Dataset, cfg: LongEdgeConfig,
                           progress_cb: Optional[ProgressCallback] = None) -> LongEdgeSet:
    """Rank-based long edges among ceil(n^phi) uniform candidates per draw."""
    return PresampledRankSampler(ds, cfg).sample_all(progress_cb=progress_cb)


def sample_uniform_random(ds: Dataset, cfg: LongEdgeConfig,
                          progress_cb: Optional[ProgressCallback] = None) -> LongEdgeSet:
    """Uniform long edges; the baseline that cannot beat plain greedy search asymptotically."""
    return UniformSampler(ds, cfg).sample_all(progress_cb=progress_cb)


def sample_long_edges(ds: Dataset, cfg: LongEdgeConfig,
                      progress_cb: Optional[ProgressCallback] = None) -> LongEdgeSet:
    """Dispatch on ``cfg.scheme``."""
    return make_sampler(ds, cfg).sample_all(progress_cb=progress_cb)


def attach(g: SearchGraph, edges: Optional[LongEdgeSet]) -> SearchGraph:
    """Return ``g`` with its long edges replaced by ``edges``.

    Attaching twice replaces the first set. Local adjacency is untouched.
    ``None`` or an all-empty set clears the long edges.

    Raises:
        GraphDatasetMismatch: Node counts or dataset ids differ, or an index is out of range.
    """
    if edges is None or edges.total() == 0:
        if edges is not None and edges.n != g.n:
            raise GraphDatasetMismatch(f"Edge lists for n={edges.n} attached to a graph with n={g.n}")
        indptr, indices = csr_from_lists(g.n, [[] for _ in range(g.n)])
        return g.with_long_edges(indptr, indices, None if edges is None else edges.scheme)
    if edges.n != g.n or edges.dataset_id != g.dataset_id:
        raise GraphDatasetMismatch(
            f"Long edges of {edges.dataset_id!r} (n={edges.n}) attached to graph of "
            f"{g.dataset_id!r} (n={g.n})"
        )
    for u, targets in enumerate(edges.lists):
        if np.any(targets == u):
            raise GraphDatasetMismatch(f"Node {u} has a long self-loop")
    indptr, indices = csr_from_lists(g.n, edges.lists)
    return g.with_long_edges(indptr, indices, edges.scheme)


def long_edge_set_from_graph(g: SearchGraph) -> LongEdgeSet:
    """Long edges of a graph as a LongEdgeSet."""
    lists = tuple(np.array(g.long_neighbors(u), dtype=np.int64) for u in range(g.n))
    return LongEdgeSet(lists=lists, scheme=g.long_scheme or "", dataset_id=g.dataset_id)
