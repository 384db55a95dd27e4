"""Contract tests for public API stability.

These tests verify that:
1. Public signatures keep their parameter names and defaults
2. Result records keep their fields
3. Every library error is a NavGraphError and a ValueError
4. Documented behaviors are preserved
"""

from __future__ import annotations

import dataclasses
import inspect

import numpy as np
import pytest

from navgraph.core import errors
from navgraph.core.data import Dataset, Metric, QuerySet
from navgraph.core.geometry import (
    CapSpec,
    IntersectionCase,
    IntersectionSpec,
    VolumeEstimate,
    cap_volume,
    intersection_volume,
)
from navgraph.core.graphs import GraphKind, SearchGraph, build_graph, build_knn
from navgraph.core.long_edges import LongEdgeConfig, LongEdgeScheme, attach, sample_long_edges
from navgraph.core.rerank import evaluate_rerank, search_and_rerank
from navgraph.core.search import (
    QueryAggregate,
    SearchConfig,
    SearchResult,
    beam_search,
    evaluate_query_set,
    greedy_search,
)
from navgraph.core.serialization import load_graph, save_graph


def parameter_names(func):
    return list(inspect.signature(func).parameters)


class TestGeometryContract:
    """Verify the geometry API."""

    def test_cap_volume_returns_estimate(self):
        est = cap_volume(CapSpec(gamma=0.5, d=3))
        assert isinstance(est, VolumeEstimate)
        assert est.stderr == 0.0

    def test_intersection_spec_fields(self):
        names = [f.name for f in dataclasses.fields(IntersectionSpec)]
        assert names == ["alpha", "beta", "theta", "d"]

    def test_intersection_cases(self):
        assert {c.value for c in IntersectionCase} == {
            "contained_beta", "contained_alpha", "lens", "disjoint", "nested"}

    def test_intersection_volume_signature(self):
        assert parameter_names(intersection_volume) == ["spec"]


class TestGraphContract:
    """Verify graph construction and storage APIs."""

    def test_graph_kinds(self):
        assert {k.value for k in GraphKind} == {"dense", "sparse", "knn"}

    def test_build_graph_signature(self):
        assert parameter_names(build_graph) == ["ds", "cfg", "progress_cb"]

    def test_build_knn_defaults(self):
        sig = inspect.signature(build_knn)
        assert sig.parameters["symmetrize"].default is False

    def test_search_graph_is_frozen(self):
        assert SearchGraph.__dataclass_params__.frozen

    def test_storage_signatures(self):
        assert parameter_names(save_graph) == ["g", "path"]
        assert parameter_names(load_graph) == ["path", "ds"]


class TestLongEdgeContract:
    """Verify long-edge APIs."""

    def test_schemes(self):
        assert {s.value for s in LongEdgeScheme} == {
            "kl-dist", "kl-rank", "kl-rank-presampled", "uniform"}

    def test_sample_long_edges_signature(self):
        assert parameter_names(sample_long_edges) == ["ds", "cfg", "progress_cb"]

    def test_attach_accepts_none(self, small_knn_graph):
        assert not attach(small_knn_graph, None).has_long_edges

    def test_config_defaults(self):
        cfg = LongEdgeConfig(scheme=LongEdgeScheme.KLEINBERG_RANK, edges_per_node=2)
        assert cfg.seed == 0
        assert cfg.presample_exponent == 0.5
        assert cfg.exclude_near is False


class TestSearchContract:
    """Verify search APIs."""

    @pytest.mark.parametrize("func", [greedy_search, beam_search])
    def test_search_signature(self, func):
        assert parameter_names(func) == ["g", "ds", "q", "cfg", "query_id", "truth"]

    def test_evaluate_signature(self):
        assert parameter_names(evaluate_query_set) == [
            "g", "ds", "qs", "cfg", "c", "threads", "progress_cb"]

    def test_result_fields(self):
        names = {f.name for f in dataclasses.fields(SearchResult)}
        assert {"answer", "steps", "distance_computations", "visited", "success_exact",
                "exhausted"} <= names

    def test_aggregate_error_is_one_minus_recall(self):
        agg = QueryAggregate(recall_at_1=0.75, mean_steps=1.0, mean_distance_computations=2.0,
                             wall_seconds=1.0)
        assert agg.error == pytest.approx(0.25)

    def test_default_config(self):
        cfg = SearchConfig()
        assert cfg.beam_width == 1 and not cfg.llf and cfg.max_steps is None


class TestRerankContract:
    """Verify two-space search APIs."""

    def test_search_and_rerank_signature(self):
        assert parameter_names(search_and_rerank) == [
            "g_low", "ds_low", "ds_orig", "q_orig", "transform", "cfg", "query_id", "truth"]

    def test_evaluate_rerank_signature(self):
        assert parameter_names(evaluate_rerank)[:6] == [
            "g_low", "ds_low", "ds_orig", "qs", "transform", "cfg"]


class TestErrorContract:
    """Verify the error hierarchy."""

    @pytest.mark.parametrize("name", [
        "AngleOutOfRange", "RegimeMismatch", "DegenerateDistance", "MalformedHeader",
        "InconsistentDimensions", "TruncatedFile", "GraphDatasetMismatch", "DimensionMismatch",
    ])
    def test_errors_are_value_errors(self, name):
        cls = getattr(errors, name)
        assert issubclass(cls, errors.NavGraphError)
        assert issubclass(cls, ValueError)

    def test_dataset_rejects_non_unit_points(self):
        with pytest.raises(ValueError):
            Dataset(points=np.array([[2.0, 0.0]]), metric=Metric.SPHERICAL, id="bad")

    def test_query_set_pairs_truth(self):
        with pytest.raises(ValueError):
            QuerySet(queries=np.array([[1.0, 0.0]]), ground_truth=np.array([0, 1]))
