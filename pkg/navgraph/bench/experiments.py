"""Theory-validation experiments on synthetic uniform data.

Each experiment returns a small result object holding a pandas DataFrame and
a ``check`` method; ``check`` returns the list of violated expectations
(empty when everything holds), which the CLI turns into its exit status.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from navgraph import config
from navgraph.bench.plans import cell_seed
from navgraph.core.data import Dataset, QuerySet, generate_uniform, plant_queries, sample_queries_uniform
from navgraph.core.graphs import SearchGraph, build_threshold_dense, knn_graph_from_order, knn_order
from navgraph.core.long_edges import (
    LongEdgeConfig,
    LongEdgeScheme,
    attach,
    default_edges_per_node,
    sample_long_edges,
)
from navgraph.core.metrics import (
    BootstrapInterval,
    ProgressCallback,
    bootstrap_mean_difference,
    loglog_slope,
    report_progress,
)
from navgraph.core.search import Algorithm, QueryAggregate, SearchConfig, evaluate_query_set

logger = logging.getLogger(__name__)

GREEDY = SearchConfig(algorithm=Algorithm.GREEDY)


def planted_radius(n: int, d: int) -> float:
    """Half the typical nearest-neighbor spacing, arcsin(n^(-1/d)) / 2."""
    return 0.5 * math.asin(min(1.0, n ** (-1.0 / d)))


def _is_geometric(values: Sequence[int]) -> bool:
    ratios = np.asarray(values[1:], dtype=np.float64) / np.asarray(values[:-1], dtype=np.float64)
    return bool(np.all(ratios > 1.0) and np.allclose(ratios, ratios[0], rtol=1e-6))


def _setup(n: int, d: int, seed: int, queries: int,
           radius: Optional[float] = None) -> Tuple[Dataset, QuerySet]:
    ds = generate_uniform(n, d, cell_seed(seed, ("dataset", n, d)))
    r = planted_radius(n, d) if radius is None else radius
    qs = plant_queries(ds, queries, r, cell_seed(seed, ("queries", n, d)))
    return ds, qs


def _with_long_edges(g: SearchGraph, ds: Dataset, scheme: Optional[LongEdgeScheme], seed: int,
                     edges_per_node: Optional[int] = None) -> SearchGraph:
    if scheme is None:
        return g
    cfg = LongEdgeConfig(
        scheme=scheme,
        edges_per_node=edges_per_node or default_edges_per_node(ds.n),
        seed=cell_seed(seed, ("long", scheme.value, ds.n, ds.d)),
    )
    return attach(g, sample_long_edges(ds, cfg))


def _per_query(agg: QueryAggregate, attr: str) -> np.ndarray:
    return np.array([getattr(r, attr) for r in agg.results], dtype=np.float64)


# ============================================================================
# Step scaling
# ============================================================================

@dataclass(frozen=True)
class ScalingResult:
    """Mean greedy steps per dataset size and the fitted log-log slope."""

    frame: pd.DataFrame
    slope: float
    intercept: float

    def check(self, low: float, high: float) -> List[str]:
        if low <= self.slope <= high:
            return []
        return [f"steps-vs-n slope {self.slope:.3f} outside [{low}, {high}]"]


def step_scaling_experiment(d: int, n_list: Sequence[int], M: float, seed: int,
                            queries: int = 500, long_scheme: Optional[LongEdgeScheme] = None,
                            cap_at_right_angle: bool = False, threads: Optional[int] = None,
                            progress_cb: Optional[ProgressCallback] = None) -> ScalingResult:
    """Fit the exponent of mean greedy steps against n on G(M).

    Args:
        d: Sphere dimension.
        n_list: Geometric sequence of at least four dataset sizes.
        M: Dense threshold parameter.
        seed: Master seed.
        queries: Planted queries per size.
        long_scheme: Add ceil(log2 n) long edges per node of this scheme.
        cap_at_right_angle: Cap out-of-range thresholds instead of failing.
        threads: Query worker threads.
        progress_cb: Optional progress callback, one update per size.

    Raises:
        ValueError: ``n_list`` is shorter than four or not geometric.
    """
    if len(n_list) < 4 or not _is_geometric(n_list):
        raise ValueError(f"n_list must be a geometric sequence of >= 4 sizes, got {list(n_list)}")
    rows = []
    for i, n in enumerate(n_list, start=1):
        ds, qs = _setup(n, d, seed, queries)
        g = build_threshold_dense(ds, M, cap_at_right_angle)
        g = _with_long_edges(g, ds, long_scheme, seed)
        agg = evaluate_query_set(g, ds, qs, GREEDY, threads=threads)
        rows.append({
            "n": n,
            "M": M,
            "long_scheme": "none" if long_scheme is None else long_scheme.value,
            "mean_steps": agg.mean_steps,
            "recall_at_1": agg.recall_at_1,
            "mean_distance_computations": agg.mean_distance_computations,
        })
        logger.info("d=%d n=%d: mean steps %.2f, recall %.3f", d, n, agg.mean_steps, agg.recall_at_1)
        report_progress(progress_cb, i, len(n_list), f"n={n}", force=True)
    frame = pd.DataFrame(rows)
    slope, intercept = loglog_slope(frame["n"], frame["mean_steps"].clip(lower=1e-9))
    return ScalingResult(frame=frame, slope=slope, intercept=intercept)


def growing_m_experiment(d: int, n_list: Sequence[int], M: float, seed: int,
                         queries: int = 500, threads: Optional[int] = None) -> pd.DataFrame:
    """Greedy steps on G(M) against G(M(n)) with M(n) = M (n / n_0)^(1/(2d)).

    The growing parameter keeps M(n) n^(-1/d) shrinking, so the graph stays
    valid, while one step covers a growing share of the start-to-query distance.
    """
    n0 = n_list[0]
    rows = []
    for n in n_list:
        ds, qs = _setup(n, d, seed, queries)
        grown = M * (n / n0) ** (1.0 / (2 * d))
        for label, m_value in (("fixed", M), ("growing", grown)):
            agg = evaluate_query_set(build_threshold_dense(ds, m_value), ds, qs, GREEDY, threads=threads)
            rows.append({"n": n, "variant": label, "M": m_value, "mean_steps": agg.mean_steps,
                         "mean_distance_computations": agg.mean_distance_computations,
                         "recall_at_1": agg.recall_at_1})
    return pd.DataFrame(rows)


# ============================================================================
# Long-edge comparison
# ============================================================================

@dataclass(frozen=True)
class LongEdgeComparison:
    """Per-scheme aggregates with the per-query step counts behind them."""

    frame: pd.DataFrame
    steps: Dict[str, np.ndarray] = field(default_factory=dict)
    seed: int = 0

    def mean_steps(self, scheme: str) -> float:
        return float(self.steps[scheme].mean())

    def separation(self, a: str, b: str) -> BootstrapInterval:
        """Bootstrap interval of mean(steps_a - steps_b) over the shared queries."""
        return bootstrap_mean_difference(self.steps[a], self.steps[b], seed=self.seed)

    def check(self) -> List[str]:
        failures: List[str] = []
        rank, uniform = LongEdgeScheme.KLEINBERG_RANK.value, LongEdgeScheme.UNIFORM_RANDOM.value
        if rank in self.steps and uniform in self.steps:
            interval = self.separation(uniform, rank)
            if not interval.low > 0.0:
                failures.append(f"uniform vs kl-rank not separated: {interval}")
        dist = LongEdgeScheme.KLEINBERG_DISTANCE.value
        if rank in self.steps and dist in self.steps:
            ratio = self.mean_steps(rank) / self.mean_steps(dist)
            if not 1 / 1.2 <= ratio <= 1.2:
                failures.append(f"kl-rank / kl-dist steps ratio {ratio:.3f} beyond 20%")
        pre = LongEdgeScheme.RANK_PRESAMPLED.value
        if rank in self.steps and pre in self.steps:
            ratio = self.mean_steps(pre) / self.mean_steps(rank)
            if not ratio <= 1.25:
                failures.append(f"kl-rank-presampled / kl-rank steps ratio {ratio:.3f} above 1.25")
        return failures


def long_edge_comparison(d: int, n: int, schemes: Sequence[Optional[LongEdgeScheme]], seed: int,
                         M: float, queries: int = 500, edges_per_node: Optional[int] = None,
                         threads: Optional[int] = None,
                         progress_cb: Optional[ProgressCallback] = None) -> LongEdgeComparison:
    """Greedy search on one G(M) with each scheme's long edges at the same edge budget.

    A ``None`` entry in ``schemes`` runs the plain graph, labeled "none".
    """
    ds, qs = _setup(n, d, seed, queries)
    base = build_threshold_dense(ds, M)
    rows = []
    steps: Dict[str, np.ndarray] = {}
    for i, scheme in enumerate(schemes, start=1):
        label = "none" if scheme is None else scheme.value
        g = _with_long_edges(base, ds, scheme, seed, edges_per_node)
        agg = evaluate_query_set(g, ds, qs, GREEDY, threads=threads)
        steps[label] = _per_query(agg, "steps")
        rows.append({
            "scheme": label,
            "edges_per_node": 0 if scheme is None else edges_per_node or default_edges_per_node(n),
            "mean_steps": agg.mean_steps,
            "recall_at_1": agg.recall_at_1,
            "mean_distance_computations": agg.mean_distance_computations,
        })
        report_progress(progress_cb, i, len(schemes), label, force=True)
    return LongEdgeComparison(frame=pd.DataFrame(rows), steps=steps, seed=seed)


# ============================================================================
# Minimal kNN degree, greedy against beam
# ============================================================================

DEFAULT_DEGREE_GRID: Tuple[int, ...] = (
    1, 2, 3, 4, 5, 6, 8, 10, 12, 16, 20, 24, 32, 40, 48, 64, 80, 96, 128,
    160, 192, 256, 320, 384, 448, 512,
)


@dataclass(frozen=True)
class DegreeSearch:
    """Smallest kNN degree on the grid reaching the recall target for one search."""

    degree: int
    reached: bool
    aggregate: QueryAggregate


def minimal_degree(ds: Dataset, qs: QuerySet, order: np.ndarray, cfg: SearchConfig,
                   grid: Sequence[int], target: float,
                   threads: Optional[int] = None) -> DegreeSearch:
    """Binary search over ``grid`` for the smallest degree with recall >= target.

    Recall is treated as nondecreasing in the degree. When even the largest
    grid degree misses the target, that degree is returned with ``reached=False``.
    """
    cache: Dict[int, QueryAggregate] = {}

    def run(k: int) -> QueryAggregate:
        if k not in cache:
            g = knn_graph_from_order(ds, order, k)
            cache[k] = evaluate_query_set(g, ds, qs, cfg, threads=threads)
        return cache[k]

    lo, hi = 0, len(grid) - 1
    if run(grid[hi]).recall_at_1 < target:
        return DegreeSearch(degree=grid[hi], reached=False, aggregate=cache[grid[hi]])
    while lo < hi:
        mid = (lo + hi) // 2
        if run(grid[mid]).recall_at_1 >= target:
            hi = mid
        else:
            lo = mid + 1
    return DegreeSearch(degree=grid[lo], reached=True, aggregate=run(grid[lo]))


@dataclass(frozen=True)
class Table2Result:
    """Rows of (d, search, degree, steps, recall, reached)."""

    frame: pd.DataFrame

    def row(self, d: int, search: str) -> pd.Series:
        sel = self.frame[(self.frame["d"] == d) & (self.frame["search"] == search)]
        return sel.iloc[0]

    def check(self, beam_label: str, degree_ratio: float = 10.0) -> List[str]:
        failures: List[str] = []
        greedy = self.frame[self.frame["search"] == "greedy"].sort_values("d")
        if not greedy["degree"].is_monotonic_increasing:
            failures.append("greedy degree does not increase with d")
        if not greedy["steps"].is_monotonic_decreasing:
            failures.append("greedy steps do not decrease with d")
        top = int(self.frame["d"].max())
        g_row, b_row = self.row(top, "greedy"), self.row(top, beam_label)
        if not b_row["reached"]:
            failures.append(f"{beam_label} never reached the recall target at d={top}")
        elif b_row["degree"] * degree_ratio > g_row["degree"]:
            failures.append(
                f"d={top}: {beam_label} degree {b_row['degree']} not {degree_ratio:g}x below "
                f"greedy degree {g_row['degree']}"
            )
        return failures


def table2_analog(scale_n: int, seed: int, dims: Sequence[int] = (2, 4, 8, 16),
                  queries: int = config.DEFAULT_QUERY_COUNT, beam_width: int = 100,
                  target: float = config.TABLE2_RECALL_TARGET, max_degree: int = 512,
                  grid: Sequence[int] = DEFAULT_DEGREE_GRID, threads: Optional[int] = None,
                  progress_cb: Optional[ProgressCallback] = None) -> Table2Result:
    """Minimal kNN degree reaching ``target`` recall, for greedy and for beam search, per d.

    The neighbor order is computed once per d up to ``max_degree``; each
    candidate degree truncates it. A row with ``reached=False`` reports
    ``max_degree`` as a lower bound.
    """
    if scale_n > 100_000:
        raise ValueError(f"scale_n must be <= 1e5, got {scale_n}")
    top = min(max_degree, scale_n - 1)
    degrees = sorted({k for k in grid if k <= top} | {top})
    beam = SearchConfig(algorithm=Algorithm.BEAM, beam_width=beam_width)
    rows = []
    for i, d in enumerate(dims, start=1):
        ds = generate_uniform(scale_n, d, cell_seed(seed, ("dataset", scale_n, d)))
        qs = sample_queries_uniform(ds, queries, cell_seed(seed, ("queries", scale_n, d)))
        order = knn_order(ds, top)
        for label, cfg in (("greedy", GREEDY), (f"beam{beam_width}", beam)):
            found = minimal_degree(ds, qs, order, cfg, degrees, target, threads)
            rows.append({
                "d": d,
                "search": label,
                "degree": found.degree,
                "reached": found.reached,
                "steps": found.aggregate.mean_steps,
                "recall_at_1": found.aggregate.recall_at_1,
                "mean_distance_computations": found.aggregate.mean_distance_computations,
            })
            logger.info("d=%d %s: degree %d (reached=%s)", d, label, found.degree, found.reached)
        del order
        report_progress(progress_cb, i, len(dims), f"d={d}", force=True)
    return Table2Result(frame=pd.DataFrame(rows))


def expected_greedy_steps(scale_n: int) -> float:
    """The d=2 greedy step count at n = 1e6 (about 200) rescaled by sqrt(scale_n / 1e6)."""
    return 200.0 * math.sqrt(scale_n / 1e6)


# ============================================================================
# llf ablation
# ============================================================================

@dataclass(frozen=True)
class LlfAblation:
    """Paired runs of the same searches with and without long-links-first."""

    frame: pd.DataFrame
    intervals: Dict[str, BootstrapInterval] = field(default_factory=dict)

    def check(self, recall_band: float = 0.005) -> List[str]:
        failures: List[str] = []
        for label, sub in self.frame.groupby("search", sort=False):
            on = sub[sub["llf"]].iloc[0]
            off = sub[~sub["llf"]].iloc[0]
            if on["mean_distance_computations"] > off["mean_distance_computations"]:
                failures.append(f"{label}: llf costs more distance computations")
            if abs(on["recall_at_1"] - off["recall_at_1"]) > recall_band:
                failures.append(f"{label}: llf changes recall by more than {recall_band:.1%}")
        return failures


def llf_ablation(d: int, n: int, M: float, seed: int,
                 scheme: Optional[LongEdgeScheme] = LongEdgeScheme.KLEINBERG_RANK,
                 searches: Sequence[SearchConfig] = (GREEDY,), queries: int = 500,
                 threads: Optional[int] = None) -> LlfAblation:
    """Distance computations of each search with llf on and off, on one graph."""
    ds, qs = _setup(n, d, seed, queries)
    g = _with_long_edges(build_threshold_dense(ds, M), ds, scheme, seed)
    rows = []
    intervals: Dict[str, BootstrapInterval] = {}
    for cfg in searches:
        label = SearchConfig(algorithm=cfg.algorithm, beam_width=cfg.beam_width).label
        counts = {}
        for llf in (False, True):
            run_cfg = SearchConfig(algorithm=cfg.algorithm, beam_width=cfg.beam_width, llf=llf,
                                   max_steps=cfg.max_steps, seed=cfg.seed)
            agg = evaluate_query_set(g, ds, qs, run_cfg, threads=threads)
            counts[llf] = _per_query(agg, "distance_computations")
            rows.append({
                "search": label,
                "llf": llf,
                "recall_at_1": agg.recall_at_1,
                "mean_steps": agg.mean_steps,
                "mean_distance_computations": agg.mean_distance_computations,
            })
        intervals[label] = bootstrap_mean_difference(counts[True], counts[False], seed=seed)
    return LlfAblation(frame=pd.DataFrame(rows), intervals=intervals)
