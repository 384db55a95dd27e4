"""Greedy and beam search over a SearchGraph with exact cost accounting.

Every query runs against a ``QueryContext`` that evaluates each node's
distance to the query at most once; ``distance_computations`` is the number
of such evaluations, starts included, and always equals the visited count.

Ordering is by (distance, index) everywhere. A move in greedy search, and
admission into a full beam pool, needs a strictly smaller distance, which is
what makes a width-1 beam retrace greedy search exactly.

With ``llf`` (long links first) a node's long edges are evaluated before its
local neighbors, and the local neighbors are skipped whenever some long edge
is already closer to the query than the node being expanded.
"""

from __future__ import annotations

import bisect
import heapq
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence, Set, Tuple

import numpy as np
import pandas as pd

from navgraph import config
from navgraph.core.data import Dataset, Metric, QuerySet, distances_to, within_c_r
from navgraph.core.errors import DimensionMismatch, GraphDatasetMismatch
from navgraph.core.graphs import SearchGraph
from navgraph.core.metrics import ProgressCallback, exact_mean, recall_at_1, report_progress

logger = logging.getLogger(__name__)


class Algorithm(Enum):
    GREEDY = "greedy"
    BEAM = "beam"


class StartKind(Enum):
    RANDOM_HEMISPHERE = "random"
    FIXED_INDEX = "fixed"


def default_max_steps(n: int, d: int) -> int:
    """16 n^(1/d) log2(n): a livelock guard far above any expected trajectory."""
    return max(1, math.ceil(config.MAX_STEPS_FACTOR * n ** (1.0 / d) * math.log2(max(n, 2))))


@dataclass(frozen=True)
class SearchConfig:
    """Search parameters.

    Attributes:
        algorithm: Greedy or beam search.
        beam_width: Pool capacity for beam search.
        llf: Evaluate long edges first.
        start: Random hemisphere start or a fixed node.
        start_index: Node used by FIXED_INDEX starts.
        max_steps: Step bound; None means ``default_max_steps``.
        seed: Seed of random starts; query ``i`` uses ``[seed, i]``.
    """

    algorithm: Algorithm = Algorithm.GREEDY
    beam_width: int = 1
    llf: bool = False
    start: StartKind = StartKind.RANDOM_HEMISPHERE
    start_index: Optional[int] = None
    max_steps: Optional[int] = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.beam_width < 1:
            raise ValueError(f"beam_width must be >= 1, got {self.beam_width}")
        if self.max_steps is not None and self.max_steps < 1:
            raise ValueError(f"max_steps must be >= 1, got {self.max_steps}")
        if self.start is StartKind.FIXED_INDEX and (self.start_index is None or self.start_index < 0):
            raise ValueError("FIXED_INDEX starts need a nonnegative start_index")

    def step_bound(self, n: int, d: int) -> int:
        return self.max_steps if self.max_steps is not None else default_max_steps(n, d)

    @property
    def label(self) -> str:
        base = "greedy" if self.algorithm is Algorithm.GREEDY else f"beam{self.beam_width}"
        return base + ("-llf" if self.llf else "")


@dataclass(frozen=True)
class SearchResult:
    """Outcome of one query.

    Attributes:
        answer: Returned node.
        steps: Node-to-node moves (greedy) or expansions after the start (beam).
        distance_computations: Distinct distance evaluations, start draws included.
        visited: Nodes whose distance was evaluated.
        success_exact: answer == ground truth, when the truth is known.
        exhausted: The step bound stopped the search.
        answer_distance: Distance from the answer to the query.
        start: Start node.
    """

    answer: int
    steps: int
    distance_computations: int
    visited: int
    success_exact: Optional[bool] = None
    exhausted: bool = False
    answer_distance: float = float("nan")
    start: int = -1


class QueryContext:
    """Per-query visited set and distance counter."""

    def __init__(self, ds: Dataset, q: np.ndarray) -> None:
        q = np.asarray(q, dtype=np.float64)
        if q.shape != (ds.dim,):
            raise DimensionMismatch(f"Query of shape {q.shape} for dataset of dim {ds.dim}")
        self.ds = ds
        self.q = q
        self.visited = np.zeros(ds.n, dtype=bool)
        self.known = {}
        self.count = 0

    def evaluate(self, nodes: Sequence[int]) -> Tuple[np.ndarray, np.ndarray]:
        """Distances of the not-yet-visited ``nodes``; marks them visited.

        Returns:
            Tuple of (node indices, distances) for the newly evaluated nodes.
        """
        nodes = np.unique(np.asarray(nodes, dtype=np.int64))
        fresh = nodes[~self.visited[nodes]]
        if fresh.size == 0:
            return fresh, np.empty(0, dtype=np.float64)
        dist = distances_to(self.ds.points[fresh], self.q, self.ds.metric)
        self.visited[fresh] = True
        self.count += int(fresh.size)
        self.known.update(zip(fresh.tolist(), dist.tolist()))
        return fresh, dist

    def distance_of(self, node: int) -> float:
        if node not in self.known:
            self.evaluate([node])
        return self.known[node]


def _best(nodes: np.ndarray, dist: np.ndarray) -> Tuple[int, float]:
    """(index, distance) of the smallest (distance, index) pair, or (-1, inf)."""
    if nodes.size == 0:
        return -1, math.inf
    i = int(np.lexsort((nodes, dist))[0])
    return int(nodes[i]), float(dist[i])


def _in_hemisphere(dist: float, metric: Metric) -> bool:
    if metric is Metric.EUCLIDEAN:
        return dist < math.sqrt(2.0)
    return dist < math.pi / 2.0


def pick_start(ds: Dataset, q: np.ndarray, cfg: SearchConfig,
               ctx: Optional[QueryContext] = None, query_id: int = 0) -> int:
    """Start node of a query.

    RANDOM_HEMISPHERE makes up to PICK_START_MAX_DRAWS seeded uniform draws and
    returns the first within pi/2 of ``q``, else the closest draw. Every draw
    is charged to the context's distance counter.
    """
    ctx = ctx if ctx is not None else QueryContext(ds, q)
    if cfg.start is StartKind.FIXED_INDEX:
        if cfg.start_index >= ds.n:
            raise GraphDatasetMismatch(f"Start index {cfg.start_index} out of range for n={ds.n}")
        ctx.distance_of(cfg.start_index)
        return cfg.start_index
    rng = np.random.default_rng([cfg.seed, query_id])
    best, best_dist = -1, math.inf
    for node in rng.integers(0, ds.n, size=config.PICK_START_MAX_DRAWS).tolist():
        dist = ctx.distance_of(node)
        if _in_hemisphere(dist, ds.metric):
            return node
        if (dist, node) < (best_dist, best):
            best, best_dist = node, dist
    logger.warning("query %d: no start draw within the hemisphere; using the closest", query_id)
    return best


def _expand(g: SearchGraph, ctx: QueryContext, node: int, node_dist: float,
            llf: bool) -> Tuple[np.ndarray, np.ndarray]:
    """Evaluate the unvisited neighbors of ``node``; long edges first under llf."""
    long_nodes, long_dist = ctx.evaluate(g.long_neighbors(node))
    if llf:
        _, best_long = _best(long_nodes, long_dist)
        if best_long < node_dist:
            return long_nodes, long_dist
    local_nodes, local_dist = ctx.evaluate(g.neighbors(node))
    return np.concatenate([long_nodes, local_nodes]), np.concatenate([long_dist, local_dist])


def _check_pair(g: SearchGraph, ds: Dataset) -> None:
    if g.n != ds.n or g.dataset_id != ds.id:
        raise GraphDatasetMismatch(
            f"Graph of {g.dataset_id!r} (n={g.n}) searched over {ds.id!r} (n={ds.n})"
        )


def _finish(ctx: QueryContext, answer: int, steps: int, exhausted: bool, start: int,
            truth: Optional[int]) -> SearchResult:
    return SearchResult(
        answer=answer,
        steps=steps,
        distance_computations=ctx.count,
        visited=int(np.count_nonzero(ctx.visited)),
        success_exact=None if truth is None else answer == truth,
        exhausted=exhausted,
        answer_distance=ctx.known[answer],
        start=start,
    )


def greedy_search(g: SearchGraph, ds: Dataset, q: np.ndarray, cfg: SearchConfig,
                  query_id: int = 0, truth: Optional[int] = None) -> SearchResult:
    """Greedy descent: move to the closest neighbor while it is strictly closer.

    Args:
        g: Graph over ``ds``.
        ds: Dataset.
        q: Query vector.
        cfg: Search parameters (``beam_width`` is ignored).
        query_id: Seeds the random start together with ``cfg.seed``.
        truth: Exact nearest neighbor, to fill ``success_exact``.
    """
    _check_pair(g, ds)
    ctx = QueryContext(ds, q)
    start = pick_start(ds, q, cfg, ctx, query_id)
    current, current_dist = start, ctx.distance_of(start)
    bound = cfg.step_bound(ds.n, ds.d)
    steps, exhausted = 0, False
    while True:
        nodes, dist = _expand(g, ctx, current, current_dist, cfg.llf)
        best, best_dist = _best(nodes, dist)
        if not best_dist < current_dist:
            break
        current, current_dist = best, best_dist
        steps += 1
        if steps >= bound:
            exhausted = True
            break
    return _finish(ctx, current, steps, exhausted, start, truth)


@dataclass
class CandidatePool:
    """Bounded pool of (distance, node) pairs ordered ascending.

    A full pool admits a candidate only if it is strictly closer than the
    current worst member, which is then evicted.
    """

    capacity: int
    members: List[Tuple[float, int]] = field(default_factory=list)
    nodes: Set[int] = field(default_factory=set)

    def offer(self, node: int, dist: float) -> bool:
        if node in self.nodes:
            return False
        if len(self.members) >= self.capacity:
            if not dist < self.members[-1][0]:
                return False
            _, evicted = self.members.pop()
            self.nodes.discard(evicted)
        bisect.insort(self.members, (dist, node))
        self.nodes.add(node)
        return True

    def best(self) -> Tuple[float, int]:
        return self.members[0]

    def __len__(self) -> int:
        return len(self.members)


def _beam(g: SearchGraph, ds: Dataset, q: np.ndarray, cfg: SearchConfig,
          query_id: int, truth: Optional[int]) -> Tuple[SearchResult, CandidatePool]:
    _check_pair(g, ds)
    ctx = QueryContext(ds, q)
    start = pick_start(ds, q, cfg, ctx, query_id)
    pool = CandidatePool(capacity=cfg.beam_width)
    pool.offer(start, ctx.distance_of(start))
    frontier: List[Tuple[float, int]] = []
    expanded: Set[int] = set()
    bound = cfg.step_bound(ds.n, ds.d)

    def expand(node: int, node_dist: float) -> None:
        expanded.add(node)
        nodes, dist = _expand(g, ctx, node, node_dist, cfg.llf)
        for i in np.lexsort((nodes, dist)).tolist():
            cand, cand_dist = int(nodes[i]), float(dist[i])
            if pool.offer(cand, cand_dist):
                heapq.heappush(frontier, (cand_dist, cand))

    expand(start, ctx.known[start])
    steps, exhausted = 0, False
    while True:
        while frontier and (frontier[0][1] not in pool.nodes or frontier[0][1] in expanded):
            heapq.heappop(frontier)
        if not frontier:
            break
        node_dist, node = heapq.heappop(frontier)
        steps += 1
        if steps >= bound:
            exhausted = True
            break
        expand(node, node_dist)
    answer = pool.best()[1]
    return _finish(ctx, answer, steps, exhausted, start, truth), pool


def beam_search(g: SearchGraph, ds: Dataset, q: np.ndarray, cfg: SearchConfig,
                query_id: int = 0, truth: Optional[int] = None) -> SearchResult:
    """Best-first search keeping at most ``cfg.beam_width`` candidates.

    The closest unexpanded pool member is expanded until every member has
    been expanded or the step bound is hit; the answer is the pool minimum.
    """
    result, _ = _beam(g, ds, q, cfg, query_id, truth)
    return result


def beam_search_pool(g: SearchGraph, ds: Dataset, q: np.ndarray, cfg: SearchConfig,
                     query_id: int = 0) -> Tuple[SearchResult, List[int]]:
    """Beam search returning the final pool members, closest first."""
    result, pool = _beam(g, ds, q, cfg, query_id, None)
    return result, [node for _, node in pool.members]


def search(g: SearchGraph, ds: Dataset, q: np.ndarray, cfg: SearchConfig,
           query_id: int = 0, truth: Optional[int] = None) -> SearchResult:
    """Dispatch on ``cfg.algorithm``."""
    if cfg.algorithm is Algorithm.GREEDY:
        return greedy_search(g, ds, q, cfg, query_id, truth)
    return beam_search(g, ds, q, cfg, query_id, truth)


# ============================================================================
# Query sets
# ============================================================================

@dataclass(frozen=True)
class QueryAggregate:
    """Reduction of per-query results.

    Attributes:
        recall_at_1: Fraction of exact answers.
        mean_steps: Mean steps per query.
        mean_distance_computations: Sum of counters divided by the query count.
        wall_seconds: Wall time of the whole query set.
        success_c_r: Fraction of answers within c * R, when requested.
        results: Per-query results in query order.
    """

    recall_at_1: float
    mean_steps: float
    mean_distance_computations: float
    wall_seconds: float
    success_c_r: Optional[float] = None
    results: Tuple[SearchResult, ...] = ()

    @property
    def error(self) -> float:
        return 1.0 - self.recall_at_1

    @property
    def queries_per_second(self) -> float:
        return len(self.results) / self.wall_seconds if self.wall_seconds > 0 else math.inf

    @property
    def exhausted_count(self) -> int:
        return sum(1 for r in self.results if r.exhausted)


def aggregate_results(results: Sequence[SearchResult], truth: Sequence[int], wall_seconds: float,
                      success_c_r: Optional[float] = None) -> QueryAggregate:
    return QueryAggregate(
        recall_at_1=recall_at_1([r.answer for r in results], truth),
        mean_steps=exact_mean([r.steps for r in results]),
        mean_distance_computations=exact_mean([r.distance_computations for r in results]),
        wall_seconds=wall_seconds,
        success_c_r=success_c_r,
        results=tuple(results),
    )


def evaluate_query_set(g: SearchGraph, ds: Dataset, qs: QuerySet, cfg: SearchConfig,
                       c: Optional[float] = None, threads: Optional[int] = None,
                       progress_cb: Optional[ProgressCallback] = None) -> QueryAggregate:
    """Run every query and reduce the results.

    Args:
        g: Graph over ``ds``.
        ds: Dataset.
        qs: Queries with ground truth.
        cfg: Search parameters.
        c: Approximation factor; with planted queries, also report the
            fraction of answers within c * R.
        threads: Worker threads; None reads NAVGRAPH_THREADS.
        progress_cb: Optional progress callback.

    Raises:
        GraphDatasetMismatch: ``g`` was not built on ``ds``.
    """
    g.check_dataset(ds)
    if qs.queries.shape[1] != ds.dim:
        raise DimensionMismatch(f"Queries of dim {qs.queries.shape[1]} for dataset of dim {ds.dim}")

    def run(i: int) -> SearchResult:
        return search(g, ds, qs.queries[i], cfg, query_id=i, truth=int(qs.ground_truth[i]))

    began = time.perf_counter()
    results: List[SearchResult] = []
    with ThreadPoolExecutor(max_workers=config.resolve_thread_count(threads)) as pool:
        for result in pool.map(run, range(qs.m)):
            results.append(result)
            report_progress(progress_cb, len(results), qs.m, f"Query {len(results)}/{qs.m}")
    wall = time.perf_counter() - began

    success = None
    if c is not None and qs.planted_radius is not None:
        hits = sum(within_c_r(r.answer_distance, qs.planted_radius, c) for r in results)
        success = hits / qs.m
    agg = aggregate_results(results, qs.ground_truth, wall, success)
    if agg.exhausted_count:
        logger.warning("%d of %d queries hit the step bound", agg.exhausted_count, qs.m)
    return agg


def results_frame(results: Sequence[SearchResult], truth: Sequence[int]) -> pd.DataFrame:
    """Per-query table with columns query_id, answer, truth, steps, dist_comps."""
    return pd.DataFrame({
        "query_id": np.arange(len(results), dtype=np.int64),
        "answer": [r.answer for r in results],
        "truth": np.asarray(truth, dtype=np.int64),
        "steps": [r.steps for r in results],
        "dist_comps": [r.distance_computations for r in results],
    })
