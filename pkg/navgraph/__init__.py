"""navgraph - graph-based nearest neighbor search on the sphere.

Builds threshold and kNN proximity graphs over unit-norm datasets, adds
Kleinberg-style long-range edges, and runs greedy and beam search with exact
cost accounting; a benchmark harness checks the resulting step counts,
degrees and recall against their theoretical scaling.

Architecture:
    - core/: Pure computational modules (geometry, data, graphs, search, ...)
    - bench/: Experiment plans, the CSV runner and the validation suites
    - cli.py: The ``navgraph`` command
"""

__version__ = "0.1.0"

from navgraph.core import data, geometry, graphs, long_edges, metrics, rerank, search

__all__ = [
    "data",
    "geometry",
    "graphs",
    "long_edges",
    "metrics",
    "rerank",
    "search",
]
