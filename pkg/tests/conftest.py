"""Pytest configuration and shared fixtures.

This module provides shared fixtures for the navgraph test suite: small
seeded datasets and query sets, the local-optimum circle graph, and
isolation of the thread-count environment variable.
"""

import numpy as np
import pytest

from navgraph import config
from navgraph.core.data import generate_uniform, plant_queries, sample_queries_uniform
from navgraph.core.graphs import build_knn, build_threshold_dense
from tests.unit.test_fixtures import (
    TRAP_ANGLES,
    TRAP_EDGES,
    circle_dataset,
    make_graph,
    undirected_lists,
)


# =============================================================================
# Environment
# =============================================================================

@pytest.fixture(autouse=True)
def _isolated_thread_env(monkeypatch):
    """Keep NAVGRAPH_THREADS from leaking between tests."""
    monkeypatch.delenv(config.THREADS_ENV_VAR, raising=False)


# =============================================================================
# Datasets
# =============================================================================

@pytest.fixture
def small_uniform():
    """300 uniform points on S^2, seed 11.

    Returns:
        Dataset with n=300, d=2.
    """
    return generate_uniform(300, 2, seed=11)


@pytest.fixture
def small_planted(small_uniform):
    """50 planted queries at R=0.02 around points of ``small_uniform``."""
    return plant_queries(small_uniform, 50, 0.02, seed=5)


@pytest.fixture
def small_uniform_queries(small_uniform):
    """40 uniform queries for ``small_uniform``."""
    return sample_queries_uniform(small_uniform, 40, seed=8)


@pytest.fixture
def small_dense_graph(small_uniform):
    """Dense threshold graph G(M=3) over ``small_uniform``."""
    return build_threshold_dense(small_uniform, 3.0)


@pytest.fixture
def small_knn_graph(small_uniform):
    """Directed 8-NN graph over ``small_uniform``."""
    return build_knn(small_uniform, 8)


# =============================================================================
# Search scenarios
# =============================================================================

@pytest.fixture
def trap_circle():
    """Circle graph with a greedy local optimum.

    Returns:
        Tuple (dataset, graph, query) where the query sits at angle 0.
    """
    ds = circle_dataset(TRAP_ANGLES, dataset_id="trap-circle")
    g = make_graph(ds, undirected_lists(ds.n, TRAP_EDGES))
    return ds, g, np.array([1.0, 0.0])

