"""Core computational modules for navgraph.

Modules:
    - geometry: Spherical cap and cap-intersection volumes
    - data: Datasets, query sets, generators and distances
    - vecs_io: fvecs/bvecs readers and stored datasets
    - graphs: Threshold and kNN proximity graphs
    - long_edges: Long-range edge samplers
    - search: Greedy and beam search with cost accounting
    - rerank: Two-space search through a dimension-reducing transform
    - serialization: Graph and transform files
    - metrics: Progress reporting, recall and bootstrap statistics

Design Principles:
    - Long-running functions accept ``progress_cb: Optional[ProgressCallback] = None``
    - Value types are frozen dataclasses validated on construction
    - All randomness flows from ``numpy.random.default_rng`` with explicit seeds
"""

from navgraph.core import (
    data,
    geometry,
    graphs,
    long_edges,
    metrics,
    rerank,
    search,
    serialization,
    vecs_io,
)

# Export key types for easy access
from navgraph.core.data import Dataset, Metric, QuerySet, RegimeParams
from navgraph.core.errors import NavGraphError
from navgraph.core.graphs import GraphConfig, GraphKind, SearchGraph
from navgraph.core.long_edges import LongEdgeConfig, LongEdgeScheme
from navgraph.core.metrics import ProgressCallback, ProgressUpdate
from navgraph.core.search import Algorithm, SearchConfig, SearchResult, StartKind

__all__ = [
    # Modules
    "data",
    "geometry",
    "graphs",
    "long_edges",
    "metrics",
    "rerank",
    "search",
    "serialization",
    "vecs_io",
    # Data
    "Dataset",
    "Metric",
    "QuerySet",
    "RegimeParams",
    # Graphs
    "GraphConfig",
    "GraphKind",
    "SearchGraph",
    "LongEdgeConfig",
    "LongEdgeScheme",
    # Search
    "Algorithm",
    "SearchConfig",
    "SearchResult",
    "StartKind",
    # Progress and errors
    "ProgressCallback",
    "ProgressUpdate",
    "NavGraphError",
]
