"""Unit tests for datasets, query sets, distances and generators.

Tests verify:
- Dataset / QuerySet validation and immutability
- Distance functions for the three metrics
- Exhaustive nearest-neighbor scans and their tie-break
- Uniform and planted generators (determinism, geometry, ground truth)
- Deduplication, NN histograms and regime helpers
"""

import math

import numpy as np
import pytest

from navgraph import config
from navgraph.core.data import (
    Dataset,
    Metric,
    QuerySet,
    Regime,
    RegimeParams,
    block_rows,
    deduplicate,
    distance,
    distances_to,
    exhaustive_nn,
    generate_uniform,
    has_duplicates,
    max_sparse_m,
    min_dense_m,
    nn_distance_histogram,
    nn_distances,
    normalize_rows,
    pairwise_distances,
    plant_queries,
    queries_from_points,
    rank_distance,
    sample_queries_uniform,
    within_c_r,
)
from navgraph.core.errors import DimensionMismatch
from tests.unit.test_fixtures import assert_exact_match, circle_dataset


class TestDataset:
    """Test Dataset validation."""

    def test_basic_properties(self, small_uniform):
        """n, dim and d follow the point array."""
        assert small_uniform.n == 300
        assert small_uniform.dim == 3
        assert small_uniform.d == 2

    def test_points_are_read_only_copies(self):
        """The dataset owns a read-only float64 copy."""
        src = np.array([[1.0, 0.0], [0.0, 1.0]], dtype=np.float32)
        ds = Dataset(points=src, metric=Metric.SPHERICAL, id="two")
        src[0, 0] = 5.0
        assert ds.points.dtype == np.float64
        assert ds.points[0, 0] == 1.0
        with pytest.raises(ValueError):
            ds.points[0, 0] = 2.0

    def test_rejects_non_unit_rows(self):
        """Rows off the sphere by more than the tolerance are rejected."""
        with pytest.raises(ValueError, match="unit norm"):
            Dataset(points=np.array([[1.0, 0.0], [0.0, 1.1]]), metric=Metric.SPHERICAL, id="x")

    def test_accepts_rows_within_tolerance(self):
        """float32 rounding of a unit vector stays within tolerance."""
        row = np.array([0.6, 0.8], dtype=np.float32)
        Dataset(points=np.vstack([row, row[::-1]]), metric=Metric.ANGULAR, id="f32")

    def test_rejects_single_point(self):
        """Datasets need at least two points."""
        with pytest.raises(ValueError):
            Dataset(points=np.array([[1.0, 0.0]]), metric=Metric.SPHERICAL, id="one")

    def test_rejects_one_dimensional_points(self):
        """The sphere dimension must be at least 1."""
        with pytest.raises(ValueError):
            Dataset(points=np.array([[1.0], [1.0]]), metric=Metric.SPHERICAL, id="line")

    def test_fingerprint_tracks_content_and_metric(self, small_uniform):
        """Same bytes and metric give the same fingerprint; a metric change does not."""
        again = generate_uniform(300, 2, seed=11)
        euclid = generate_uniform(300, 2, seed=11, metric=Metric.EUCLIDEAN)
        assert small_uniform.fingerprint() == again.fingerprint()
        assert small_uniform.fingerprint() != euclid.fingerprint()

    def test_with_points_suffixes_id(self, small_uniform):
        """with_points keeps the metric and extends the id."""
        sub = small_uniform.with_points(small_uniform.points[:10], "-head")
        assert sub.id == "uniform-n300-d2-s11-head"
        assert sub.metric is small_uniform.metric
        assert sub.n == 10


class TestQuerySet:
    """Test QuerySet validation and slicing."""

    def test_truth_length_must_match(self):
        """One ground-truth index per query."""
        with pytest.raises(ValueError):
            QuerySet(queries=np.eye(3), ground_truth=np.array([0, 1]))

    def test_subset_keeps_planting(self, small_planted):
        """subset slices queries, truth and planted indices together."""
        sub = small_planted.subset(7)
        assert sub.m == 7
        assert sub.planted_radius == small_planted.planted_radius
        np.testing.assert_array_equal(sub.planted_index, small_planted.planted_index[:7])
        np.testing.assert_array_equal(sub.ground_truth, small_planted.ground_truth[:7])


class TestDistances:
    """Test the distance functions."""

    def test_spherical_is_angle(self):
        """Geodesic distance between orthogonal vectors is pi/2."""
        assert_exact_match(distance(np.array([1.0, 0.0]), np.array([0.0, 1.0]), Metric.SPHERICAL),
                           math.pi / 2, "angle")

    def test_euclidean(self):
        """Chord length between orthogonal unit vectors is sqrt(2)."""
        assert_exact_match(distance(np.array([1.0, 0.0]), np.array([0.0, 1.0]), Metric.EUCLIDEAN),
                           math.sqrt(2.0), "chord")

    def test_clips_rounding(self):
        """Inner products a hair above 1 still give distance 0."""
        v = np.array([1.0 + 1e-15, 0.0])
        assert distance(v, v, Metric.ANGULAR) == 0.0

    def test_dimension_mismatch(self):
        """Vectors of different lengths raise DimensionMismatch."""
        with pytest.raises(DimensionMismatch):
            distance(np.ones(2), np.ones(3), Metric.SPHERICAL)
        with pytest.raises(DimensionMismatch):
            distances_to(np.eye(3), np.ones(2), Metric.SPHERICAL)

    def test_chord_angle_relation(self, small_uniform):
        """On the sphere, chord = 2 sin(angle / 2)."""
        q = small_uniform.points[:5]
        angle = pairwise_distances(q, small_uniform.points, Metric.SPHERICAL)
        chord = pairwise_distances(q, small_uniform.points, Metric.EUCLIDEAN)
        np.testing.assert_allclose(chord, 2.0 * np.sin(angle / 2.0), atol=1e-7)

    def test_distances_to_matches_pairwise(self, small_uniform):
        """Row-wise and matrix forms agree."""
        q = small_uniform.points[3]
        np.testing.assert_allclose(
            distances_to(small_uniform.points, q, Metric.SPHERICAL),
            pairwise_distances(q[None, :], small_uniform.points, Metric.SPHERICAL)[0],
        )

    def test_normalize_rejects_zero(self):
        """A zero row cannot be projected to the sphere."""
        with pytest.raises(ValueError):
            normalize_rows(np.array([[0.0, 0.0], [1.0, 0.0]]))

    def test_block_rows_bounds_gram_blocks(self):
        """Blocks hold at most GRAM_BLOCK_ELEMENTS entries, and at least one row."""
        assert block_rows(1000) * 1000 <= config.GRAM_BLOCK_ELEMENTS
        assert block_rows(10 * config.GRAM_BLOCK_ELEMENTS) == 1


class TestExhaustiveNN:
    """Test the exhaustive ground-truth scan."""

    def test_matches_argmin(self, small_uniform, small_uniform_queries):
        """Blockwise scan equals a direct argmin."""
        q = small_uniform_queries.queries
        direct = np.argmin(pairwise_distances(q, small_uniform.points, Metric.SPHERICAL), axis=1)
        np.testing.assert_array_equal(exhaustive_nn(small_uniform, q), direct)

    def test_tie_breaks_to_lowest_index(self):
        """Equidistant points resolve to the lower index."""
        ds = circle_dataset((math.pi, 0.2, -0.2))
        assert exhaustive_nn(ds, np.array([[1.0, 0.0]]))[0] == 1

    def test_thread_count_does_not_change_result(self, small_uniform, small_uniform_queries):
        """Parallel scans give identical answers."""
        q = small_uniform_queries.queries
        np.testing.assert_array_equal(exhaustive_nn(small_uniform, q, threads=1),
                                      exhaustive_nn(small_uniform, q, threads=4))

    def test_wrong_query_dimension(self, small_uniform):
        """Queries must have the dataset's ambient dimension."""
        with pytest.raises(DimensionMismatch):
            exhaustive_nn(small_uniform, np.ones((2, 5)))

    def test_nn_distances_exclude_self(self):
        """Each point's NN distance ignores the point itself."""
        ds = circle_dataset((0.0, 0.1, 0.3, 0.6))
        np.testing.assert_allclose(nn_distances(ds), [0.1, 0.1, 0.2, 0.3], atol=1e-12)


class TestGenerateUniform:
    """Test the uniform generator."""

    def test_label_and_norms(self):
        """Points are unit norm and the id records the parameters."""
        ds = generate_uniform(50, 4, seed=3)
        assert ds.id == "uniform-n50-d4-s3"
        np.testing.assert_allclose(np.linalg.norm(ds.points, axis=1), 1.0, atol=1e-12)
        assert ds.points.shape == (50, 5)

    def test_deterministic(self):
        """Same seed, same points; different seed, different points."""
        a = generate_uniform(20, 3, seed=1)
        assert np.array_equal(a.points, generate_uniform(20, 3, seed=1).points)
        assert not np.array_equal(a.points, generate_uniform(20, 3, seed=2).points)

    @pytest.mark.parametrize("n,d", [(1, 3), (10, 0)])
    def test_rejects_bad_sizes(self, n, d):
        """n >= 2 and d >= 1 are required."""
        with pytest.raises(ValueError):
            generate_uniform(n, d, seed=0)

    def test_roughly_centered(self):
        """The sample mean of many uniform points is near the origin."""
        ds = generate_uniform(20000, 3, seed=4)
        assert np.linalg.norm(ds.points.mean(axis=0)) < 0.05


class TestPlantQueries:
    """Test planted query generation."""

    def test_queries_within_radius_of_planted_point(self, small_uniform):
        """Every query lies within R of the element it was planted around."""
        qs = plant_queries(small_uniform, 200, 0.05, seed=2)
        centers = small_uniform.points[qs.planted_index]
        angles = np.arccos(np.clip(np.einsum("ij,ij->i", qs.queries, centers), -1.0, 1.0))
        assert np.all(angles <= 0.05 + 1e-9)
        np.testing.assert_allclose(np.linalg.norm(qs.queries, axis=1), 1.0, atol=1e-12)

    def test_ground_truth_is_recomputed(self, small_uniform):
        """Ground truth equals an exhaustive scan, not the planted index."""
        qs = plant_queries(small_uniform, 100, 0.3, seed=9)
        np.testing.assert_array_equal(qs.ground_truth, exhaustive_nn(small_uniform, qs.queries))
        assert qs.planted_radius == 0.3

    def test_angles_follow_cap_measure(self):
        """On S^2 a small cap has angle density ~ psi, so the mean angle is 2R/3."""
        ds = generate_uniform(100, 2, seed=0)
        R = 0.01
        qs = plant_queries(ds, 4000, R, seed=1)
        centers = ds.points[qs.planted_index]
        angles = np.arccos(np.clip(np.einsum("ij,ij->i", qs.queries, centers), -1.0, 1.0))
        assert abs(angles.mean() / R - 2.0 / 3.0) < 0.03

    def test_deterministic(self, small_uniform):
        """Same seed, same queries."""
        a = plant_queries(small_uniform, 10, 0.1, seed=4)
        b = plant_queries(small_uniform, 10, 0.1, seed=4)
        assert np.array_equal(a.queries, b.queries)

    @pytest.mark.parametrize("R", [0.0, -0.1, math.pi / 2, 2.0])
    def test_rejects_radius(self, small_uniform, R):
        """R must lie strictly inside (0, pi/2)."""
        with pytest.raises(ValueError):
            plant_queries(small_uniform, 5, R, seed=0)

    def test_rejects_empty(self, small_uniform):
        """At least one query is required."""
        with pytest.raises(ValueError):
            plant_queries(small_uniform, 0, 0.1, seed=0)


class TestOtherQuerySources:
    """Test uniform and externally supplied queries."""

    def test_uniform_queries(self, small_uniform_queries, small_uniform):
        """Uniform queries carry exhaustive ground truth and no planting."""
        assert small_uniform_queries.m == 40
        assert small_uniform_queries.planted_radius is None
        np.testing.assert_array_equal(
            small_uniform_queries.ground_truth,
            exhaustive_nn(small_uniform, small_uniform_queries.queries),
        )

    def test_queries_from_points_normalizes(self, small_uniform):
        """External vectors are projected to the sphere first."""
        qs = queries_from_points(small_uniform, 3.0 * small_uniform.points[:4])
        np.testing.assert_allclose(np.linalg.norm(qs.queries, axis=1), 1.0)
        np.testing.assert_array_equal(qs.ground_truth, [0, 1, 2, 3])

    def test_rejects_empty_uniform(self, small_uniform):
        with pytest.raises(ValueError):
            sample_queries_uniform(small_uniform, 0, seed=0)


class TestDeduplicate:
    """Test duplicate removal."""

    def test_removes_repeats_in_order(self):
        """First occurrences are kept in their original order."""
        pts = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
        ds = Dataset(points=pts, metric=Metric.ANGULAR, id="dups")
        assert has_duplicates(ds)
        clean = deduplicate(ds)
        assert clean.id == "dups-dedup"
        np.testing.assert_array_equal(clean.points, pts[[0, 1, 3]])
        assert not has_duplicates(clean)

    def test_clean_dataset_is_returned_unchanged(self, small_uniform):
        """Without duplicates the same object comes back."""
        assert deduplicate(small_uniform) is small_uniform


class TestNNHistogram:
    """Test the NN-distance profile."""

    def test_counts_cover_all_points(self):
        """Every point falls in some bin and the mode is a bin center."""
        ds = circle_dataset((0.0, 0.1, 0.3, 0.6))
        hist = nn_distance_histogram(ds, bins=2)
        assert hist.counts.sum() == 4
        assert len(hist.edges) == 3
        assert hist.edges[0] <= hist.mode <= hist.edges[-1]
        assert hist.mode == pytest.approx(0.15)

    def test_rejects_zero_bins(self, small_uniform):
        with pytest.raises(ValueError):
            nn_distance_histogram(small_uniform, bins=0)


class TestRegimeHelpers:
    """Test regime classification and the c,R-ANN constants."""

    def test_dense(self):
        """d < log2 n is dense with omega = log2(n) / d."""
        params = RegimeParams.from_sizes(1024, 5)
        assert params.regime is Regime.DENSE
        assert params.omega == pytest.approx(2.0)
        assert params.delta == pytest.approx(0.25)

    def test_sparse(self):
        """d >= 4 log2 n is sparse with omega = d / log2(n)."""
        params = RegimeParams.from_sizes(1024, 40)
        assert params.regime is Regime.SPARSE
        assert params.omega == pytest.approx(4.0)
        assert params.delta == pytest.approx(2.0 * math.log(2.0) / 4.0)

    def test_moderate(self):
        """Between the two bounds the regime is moderate."""
        assert RegimeParams.from_sizes(1024, 20).regime is Regime.MODERATE

    def test_min_dense_m(self):
        """c = 1 needs M = sqrt(2); larger c needs less."""
        assert min_dense_m(1.0) == pytest.approx(math.sqrt(2.0))
        assert min_dense_m(2.0) == pytest.approx(math.sqrt(16.0 / 11.0))
        with pytest.raises(ValueError):
            min_dense_m(0.5)

    def test_max_sparse_m(self):
        """a = cos(pi/4) gives 1/3 for geodesic distance; a = 3/4 gives 0.36 for Euclidean."""
        assert max_sparse_m(2.0) == pytest.approx(1.0 / 3.0)
        assert max_sparse_m(2.0, Metric.EUCLIDEAN) == pytest.approx(0.36)
        with pytest.raises(ValueError):
            max_sparse_m(1.0)

    def test_rank_distance_and_success(self):
        """(k/n)^(1/d) scale and the c*R success test."""
        assert rank_distance(16, 1024, 2) == pytest.approx(0.125)
        assert within_c_r(0.2, 0.1, 2.0)
        assert not within_c_r(0.21, 0.1, 2.0)
