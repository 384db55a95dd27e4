"""Unit tests for greedy and beam search.

Tests verify:
- The local-optimum circle: greedy stops at a local optimum, a wide beam escapes
- Step, counter and step-bound semantics
- Beam width 1 retraces greedy search exactly
- Long-links-first (llf) expansion
- Agreement with a plain-Python reference searcher on random graphs
- Start selection, pool admission and query-set evaluation
"""

import logging
import math

import numpy as np
import pytest

from navgraph.core.data import Metric, generate_uniform, plant_queries
from navgraph.core.errors import DimensionMismatch, GraphDatasetMismatch
from navgraph.core.graphs import build_knn
from navgraph.core.long_edges import LongEdgeConfig, LongEdgeScheme, attach, sample_long_edges
from navgraph.core.search import (
    Algorithm,
    CandidatePool,
    QueryContext,
    SearchConfig,
    StartKind,
    beam_search,
    beam_search_pool,
    default_max_steps,
    evaluate_query_set,
    greedy_search,
    pick_start,
    results_frame,
    search,
)
from tests.unit.test_fixtures import (
    TRAP_EDGES,
    TRAP_LO,
    TRAP_NN,
    TRAP_START,
    ReferenceSearcher,
    circle_dataset,
    make_graph,
    undirected_lists,
)


def fixed(index=TRAP_START, **kwargs):
    return SearchConfig(start=StartKind.FIXED_INDEX, start_index=index, **kwargs)


def beam(width, **kwargs):
    return SearchConfig(algorithm=Algorithm.BEAM, beam_width=width, **kwargs)


def fixed_beam(width, index=TRAP_START, **kwargs):
    return SearchConfig(algorithm=Algorithm.BEAM, beam_width=width,
                        start=StartKind.FIXED_INDEX, start_index=index, **kwargs)


@pytest.fixture
def circle_with_shortcut(trap_circle):
    """The local-optimum circle plus one long edge 0 -> 6."""
    ds, _, q = trap_circle
    long_lists = [[] for _ in range(ds.n)]
    long_lists[0] = [TRAP_NN]
    g = make_graph(ds, undirected_lists(ds.n, TRAP_EDGES), long_lists=long_lists)
    return ds, g, q


@pytest.fixture
def random_instance():
    """kNN graph with rank-based long edges and planted queries."""
    ds = generate_uniform(400, 3, seed=31)
    g = build_knn(ds, 6)
    edges = sample_long_edges(ds, LongEdgeConfig(scheme=LongEdgeScheme.KLEINBERG_RANK,
                                                 edges_per_node=4, seed=5))
    qs = plant_queries(ds, 40, 0.1, seed=6)
    return ds, g, attach(g, edges), qs


class TestSearchConfig:
    """Test SearchConfig validation and labels."""

    @pytest.mark.parametrize("kwargs", [
        {"beam_width": 0},
        {"max_steps": 0},
        {"start": StartKind.FIXED_INDEX},
        {"start": StartKind.FIXED_INDEX, "start_index": -1},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            SearchConfig(**kwargs)

    def test_labels(self):
        assert SearchConfig().label == "greedy"
        assert beam(8, llf=True).label == "beam8-llf"

    def test_default_step_bound(self):
        """16 n^(1/d) log2 n, rounded up."""
        expected = math.ceil(16 * 1000 ** 0.5 * math.log2(1000))
        assert default_max_steps(1000, 2) == expected
        assert SearchConfig().step_bound(1000, 2) == expected
        assert SearchConfig(max_steps=7).step_bound(1000, 2) == 7


class TestLocalOptimumCircle:
    """Test the hand-traced circle scenario."""

    def test_greedy_stops_at_local_optimum(self, trap_circle):
        """From node 0 greedy moves once, to node 1, and stops."""
        ds, g, q = trap_circle
        result = greedy_search(g, ds, q, fixed(), truth=TRAP_NN)
        assert result.answer == TRAP_LO
        assert result.steps == 1
        assert result.distance_computations == 4
        assert result.visited == 4
        assert result.success_exact is False
        assert result.start == TRAP_START
        assert result.answer_distance == pytest.approx(0.3)

    def test_wide_beam_finds_nearest(self, trap_circle):
        """A pool of 7 reaches node 6 through nodes 4 and 5."""
        ds, g, q = trap_circle
        result = beam_search(g, ds, q, fixed_beam(7), truth=TRAP_NN)
        assert result.answer == TRAP_NN
        assert result.steps == 6
        assert result.distance_computations == 7
        assert result.success_exact is True
        assert not result.exhausted

    def test_beam_one_is_greedy(self, trap_circle):
        ds, g, q = trap_circle
        a = greedy_search(g, ds, q, fixed())
        b = beam_search(g, ds, q, fixed_beam(1))
        assert (a.answer, a.steps, a.distance_computations) == (b.answer, b.steps,
                                                                b.distance_computations)

    def test_step_bound(self, trap_circle):
        """max_steps stops the beam after one expansion and flags exhaustion."""
        ds, g, q = trap_circle
        result = beam_search(g, ds, q, fixed_beam(7, max_steps=1))
        assert result.steps == 1
        assert result.exhausted
        assert result.answer == TRAP_LO

    def test_pool_members(self, trap_circle):
        """The final pool lists every node, closest first."""
        ds, g, q = trap_circle
        _, members = beam_search_pool(g, ds, q, fixed_beam(7))
        assert members == [6, 1, 5, 2, 4, 3, 0]

    def test_dispatch(self, trap_circle):
        ds, g, q = trap_circle
        assert search(g, ds, q, fixed()).answer == TRAP_LO
        assert search(g, ds, q, fixed_beam(7)).answer == TRAP_NN

    def test_empty_adjacency_returns_start(self, trap_circle):
        """With no edges every search answers its start."""
        ds, _, q = trap_circle
        g = make_graph(ds, [[] for _ in range(ds.n)])
        result = greedy_search(g, ds, q, fixed(3))
        assert (result.answer, result.steps, result.distance_computations) == (3, 0, 1)
        result = beam_search(g, ds, q, fixed_beam(4, index=3))
        assert (result.answer, result.steps, result.distance_computations) == (3, 0, 1)


class TestLongLinksFirst:
    """Test llf expansion order."""

    def test_shortcut_taken_without_llf(self, circle_with_shortcut):
        """Without llf the long edge is one more candidate."""
        ds, g, q = circle_with_shortcut
        result = greedy_search(g, ds, q, fixed())
        assert result.answer == TRAP_NN
        assert result.steps == 1
        assert result.distance_computations == 6

    def test_llf_skips_local_neighbors(self, circle_with_shortcut):
        """A closer long edge makes the local neighbors of node 0 unnecessary."""
        ds, g, q = circle_with_shortcut
        result = greedy_search(g, ds, q, fixed(llf=True))
        assert result.answer == TRAP_NN
        assert result.steps == 1
        assert result.distance_computations == 3

    def test_llf_falls_back_when_long_edges_are_worse(self, trap_circle):
        """A long edge farther than the current node does not suppress locals."""
        ds, _, q = trap_circle
        long_lists = [[] for _ in range(ds.n)]
        long_lists[1] = [3]
        g = make_graph(ds, undirected_lists(ds.n, TRAP_EDGES), long_lists=long_lists)
        result = greedy_search(g, ds, q, fixed(llf=True))
        assert result.answer == TRAP_LO
        assert result.distance_computations == 5


class TestAgainstReference:
    """Test exact agreement with the plain-Python reference searcher."""

    @pytest.mark.parametrize("llf", [False, True])
    def test_greedy(self, random_instance, llf):
        ds, _, g, qs = random_instance
        ref = ReferenceSearcher(g, ds)
        cfg = SearchConfig(llf=llf, seed=2)
        for i in range(qs.m):
            res = greedy_search(g, ds, qs.queries[i], cfg, query_id=i)
            expected = ref.greedy(qs.queries[i], cfg.step_bound(ds.n, ds.d), llf=llf, seed=2,
                                  query_id=i)
            assert (res.answer, res.steps, res.distance_computations) == expected

    @pytest.mark.parametrize("width", [1, 4, 16])
    @pytest.mark.parametrize("llf", [False, True])
    def test_beam(self, random_instance, width, llf):
        ds, _, g, qs = random_instance
        ref = ReferenceSearcher(g, ds)
        cfg = beam(width, llf=llf, seed=2)
        for i in range(qs.m):
            res = beam_search(g, ds, qs.queries[i], cfg, query_id=i)
            expected = ref.beam(qs.queries[i], width, cfg.step_bound(ds.n, ds.d), llf=llf,
                                seed=2, query_id=i)
            assert (res.answer, res.steps, res.distance_computations) == expected

    def test_tight_step_bound(self, random_instance):
        """Agreement also holds when the bound cuts searches short."""
        ds, plain, _, qs = random_instance
        ref = ReferenceSearcher(plain, ds)
        cfg = beam(8, max_steps=3, seed=4)
        for i in range(qs.m):
            res = beam_search(plain, ds, qs.queries[i], cfg, query_id=i)
            assert (res.answer, res.steps, res.distance_computations) == ref.beam(
                qs.queries[i], 8, 3, seed=4, query_id=i)

    def test_beam_one_matches_greedy_everywhere(self, random_instance):
        ds, _, g, qs = random_instance
        for i in range(qs.m):
            a = greedy_search(g, ds, qs.queries[i], SearchConfig(seed=1), query_id=i)
            b = beam_search(g, ds, qs.queries[i], beam(1, seed=1), query_id=i)
            assert (a.answer, a.steps, a.distance_computations, a.exhausted) == (
                b.answer, b.steps, b.distance_computations, b.exhausted)

    def test_counter_equals_visited(self, random_instance):
        ds, _, g, qs = random_instance
        for i in range(10):
            res = beam_search(g, ds, qs.queries[i], beam(8), query_id=i)
            assert res.distance_computations == res.visited
            assert res.distance_computations <= ds.n


class TestPickStart:
    """Test start selection."""

    def test_hemisphere_start(self, small_uniform):
        """Random starts lie within pi/2 of the query."""
        q = small_uniform.points[0]
        for qid in range(20):
            ctx = QueryContext(small_uniform, q)
            start = pick_start(small_uniform, q, SearchConfig(seed=3), ctx, qid)
            assert ctx.distance_of(start) < math.pi / 2
            assert ctx.count >= 1

    def test_draws_are_charged(self):
        """Every draw before the accepted one is counted."""
        ds = circle_dataset((math.pi - 0.1, math.pi + 0.1, 0.2, math.pi))
        ctx = QueryContext(ds, np.array([1.0, 0.0]))
        start = pick_start(ds, ctx.q, SearchConfig(seed=0), ctx, 0)
        assert start == 2
        assert ctx.count == int(np.count_nonzero(ctx.visited))

    def test_fallback_to_closest(self, caplog):
        """With no draw in the hemisphere the closest draw is used."""
        ds = circle_dataset((math.pi - 0.1, math.pi + 0.3, math.pi))
        with caplog.at_level(logging.WARNING, logger="navgraph.core.search"):
            start = pick_start(ds, np.array([1.0, 0.0]), SearchConfig(seed=0))
        # node 1 sits at pi - 0.3, the closest of the three
        assert start == 1
        assert "hemisphere" in caplog.text

    def test_fixed_start_out_of_range(self, trap_circle):
        ds, _, q = trap_circle
        with pytest.raises(GraphDatasetMismatch):
            pick_start(ds, q, fixed(99))

    def test_same_seed_same_start(self, small_uniform):
        q = small_uniform.points[5]
        cfg = SearchConfig(seed=8)
        assert pick_start(small_uniform, q, cfg, query_id=3) == pick_start(small_uniform, q, cfg,
                                                                           query_id=3)

    def test_euclidean_hemisphere(self):
        """Euclidean data uses the chord sqrt(2) as the hemisphere bound."""
        ds = generate_uniform(50, 2, seed=0, metric=Metric.EUCLIDEAN)
        q = ds.points[0]
        ctx = QueryContext(ds, q)
        start = pick_start(ds, q, SearchConfig(seed=1), ctx)
        assert ctx.distance_of(start) < math.sqrt(2.0)


class TestQueryContextAndPool:
    """Test the per-query bookkeeping."""

    def test_each_node_counted_once(self, small_uniform):
        ctx = QueryContext(small_uniform, small_uniform.points[0])
        nodes, _ = ctx.evaluate([3, 4, 3])
        assert nodes.tolist() == [3, 4]
        again, _ = ctx.evaluate([4, 5])
        assert again.tolist() == [5]
        assert ctx.count == 3

    def test_query_dimension(self, small_uniform):
        with pytest.raises(DimensionMismatch):
            QueryContext(small_uniform, np.ones(5))

    def test_pool_admission_is_strict(self):
        """A full pool rejects a candidate tied with its worst member."""
        pool = CandidatePool(capacity=2)
        assert pool.offer(1, 0.5) and pool.offer(2, 0.3)
        assert pool.offer(3, 0.4)
        assert 1 not in pool.nodes
        assert not pool.offer(4, 0.4)
        assert not pool.offer(2, 0.1)
        assert pool.best() == (0.3, 2)
        assert len(pool) == 2

    def test_graph_dataset_pairing(self, trap_circle, small_uniform):
        _, g, _ = trap_circle
        with pytest.raises(GraphDatasetMismatch):
            greedy_search(g, small_uniform, small_uniform.points[0], SearchConfig())


class TestEvaluateQuerySet:
    """Test query-set evaluation and reduction."""

    def test_aggregate(self, small_uniform, small_knn_graph, small_planted):
        agg = evaluate_query_set(small_knn_graph, small_uniform, small_planted, beam(8), c=2.0)
        assert len(agg.results) == small_planted.m
        exact = np.mean([r.answer == t for r, t in zip(agg.results, small_planted.ground_truth)])
        assert agg.recall_at_1 == pytest.approx(exact)
        assert agg.error == pytest.approx(1.0 - exact)
        assert agg.mean_steps == pytest.approx(np.mean([r.steps for r in agg.results]))
        assert agg.success_c_r is not None and agg.success_c_r >= agg.recall_at_1
        assert agg.wall_seconds > 0.0

    def test_threads_do_not_change_results(self, small_uniform, small_knn_graph, small_planted):
        a = evaluate_query_set(small_knn_graph, small_uniform, small_planted, SearchConfig(),
                               threads=1)
        b = evaluate_query_set(small_knn_graph, small_uniform, small_planted, SearchConfig(),
                               threads=4)
        assert [r.answer for r in a.results] == [r.answer for r in b.results]
        assert a.mean_distance_computations == b.mean_distance_computations

    def test_no_success_without_planting(self, small_uniform, small_knn_graph,
                                         small_uniform_queries):
        agg = evaluate_query_set(small_knn_graph, small_uniform, small_uniform_queries,
                                 SearchConfig(), c=2.0)
        assert agg.success_c_r is None

    def test_dataset_mismatch(self, small_knn_graph, trap_circle, small_planted):
        with pytest.raises(GraphDatasetMismatch):
            evaluate_query_set(small_knn_graph, trap_circle[0], small_planted, SearchConfig())

    def test_progress_and_frame(self, small_uniform, small_knn_graph, small_planted):
        updates = []
        agg = evaluate_query_set(small_knn_graph, small_uniform, small_planted, SearchConfig(),
                                 progress_cb=updates.append)
        assert updates and updates[-1].current == small_planted.m
        frame = results_frame(agg.results, small_planted.ground_truth)
        assert list(frame.columns) == ["query_id", "answer", "truth", "steps", "dist_comps"]
        assert len(frame) == small_planted.m
