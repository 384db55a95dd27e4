"""Proximity graphs over a Dataset: threshold graphs G(M) and kNN graphs.

Adjacency is stored in CSR form (``indptr`` / ``indices``) with every
neighbor list sorted by node index. Long-range edges live in a second CSR
pair so search can tell them apart from local edges.

Threshold graphs connect ``x_i`` and ``x_j`` iff their spherical distance is
at most the connection angle:

    dense:  arcsin(M n^(-1/d))            (M > 1)
    sparse: arccos(sqrt(2 M ln(n) / d))   (0 < M < 1)

Construction is exhaustive, blockwise over the Gram matrix. Threshold pairs
are taken from the upper triangle and mirrored, so the adjacency is exactly
symmetric regardless of floating-point rounding.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from navgraph import config
from navgraph.core.data import Dataset, block_rows, pairwise_distances
from navgraph.core.errors import AngleOutOfRange, GraphDatasetMismatch, RegimeMismatch
from navgraph.core.geometry import CapSpec, cap_volume
from navgraph.core.metrics import ProgressCallback, report_progress

logger = logging.getLogger(__name__)

INDEX_DTYPE = np.int32


class GraphKind(Enum):
    THRESHOLD_DENSE = "dense"
    THRESHOLD_SPARSE = "sparse"
    KNN = "knn"


@dataclass(frozen=True)
class GraphConfig:
    """Parameters of a proximity graph.

    Attributes:
        kind: Threshold (dense or sparse) or kNN.
        M: Threshold parameter; > 1 for dense, in (0, 1) for sparse.
        k: Out-degree of kNN graphs.
        symmetrize: kNN only; add the reverse of every edge.
        cap_at_right_angle: Dense only; cap an out-of-range threshold at pi/2.
    """

    kind: GraphKind
    M: Optional[float] = None
    k: Optional[int] = None
    symmetrize: bool = False
    cap_at_right_angle: bool = False

    def __post_init__(self) -> None:
        if self.kind is GraphKind.THRESHOLD_DENSE:
            if self.M is None or not self.M > 1.0:
                raise ValueError(f"Dense threshold graphs require M > 1, got {self.M}")
        elif self.kind is GraphKind.THRESHOLD_SPARSE:
            if self.M is None or not 0.0 < self.M < 1.0:
                raise ValueError(f"Sparse threshold graphs require 0 < M < 1, got {self.M}")
        elif self.k is None or self.k < 1:
            raise ValueError(f"kNN graphs require k >= 1, got {self.k}")

    @property
    def is_threshold(self) -> bool:
        return self.kind is not GraphKind.KNN

    @property
    def is_symmetric(self) -> bool:
        return self.is_threshold or self.symmetrize

    def params(self) -> Dict[str, object]:
        """Plain-dict form, stable across runs."""
        return {
            "kind": self.kind.value,
            "M": self.M,
            "k": self.k,
            "symmetrize": self.symmetrize,
            "cap_at_right_angle": self.cap_at_right_angle,
        }

    @classmethod
    def from_params(cls, params: Dict[str, object]) -> "GraphConfig":
        return cls(
            kind=GraphKind(params["kind"]),
            M=None if params.get("M") is None else float(params["M"]),
            k=None if params.get("k") is None else int(params["k"]),
            symmetrize=bool(params.get("symmetrize", False)),
            cap_at_right_angle=bool(params.get("cap_at_right_angle", False)),
        )

    def config_hash(self) -> str:
        payload = json.dumps(self.params(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(payload).hexdigest()[:16]

    @property
    def label(self) -> str:
        if self.is_threshold:
            return f"{self.kind.value}-M{self.M:g}"
        return f"knn-k{self.k}" + ("-sym" if self.symmetrize else "")


def _empty_csr(n: int) -> Tuple[np.ndarray, np.ndarray]:
    return np.zeros(n + 1, dtype=np.int64), np.empty(0, dtype=INDEX_DTYPE)


def csr_from_pairs(n: int, rows: np.ndarray, cols: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """CSR arrays for the edge list ``rows[i] -> cols[i]``; duplicates are dropped."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    if rows.size == 0:
        return _empty_csr(n)
    keys = np.unique(rows * n + cols)
    rows, cols = np.divmod(keys, n)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n), out=indptr[1:])
    return indptr, cols.astype(INDEX_DTYPE)


def csr_from_lists(n: int, lists: Sequence[Sequence[int]]) -> Tuple[np.ndarray, np.ndarray]:
    """CSR arrays from per-node target lists, each sorted and deduplicated."""
    if len(lists) != n:
        raise GraphDatasetMismatch(f"Expected {n} neighbor lists, got {len(lists)}")
    counts = [len(x) for x in lists]
    rows = np.repeat(np.arange(n, dtype=np.int64), counts)
    cols = np.concatenate([np.asarray(x, dtype=np.int64) for x in lists]) if rows.size else rows
    if cols.size and (cols.min() < 0 or cols.max() >= n):
        raise GraphDatasetMismatch("Neighbor index out of range")
    return csr_from_pairs(n, rows, cols)


@dataclass(frozen=True, eq=False)
class SearchGraph:
    """Local adjacency plus separately tagged long-range edges.

    Attributes:
        indptr, indices: CSR local adjacency, lists sorted by index.
        config: Construction parameters.
        dataset_id: Label of the dataset the graph was built on.
        dataset_fingerprint: Content hash of that dataset.
        long_indptr, long_indices: CSR long-range edges (directed).
        long_scheme: Tag of the long-edge scheme, or None.
    """

    indptr: np.ndarray
    indices: np.ndarray
    config: GraphConfig
    dataset_id: str
    dataset_fingerprint: str
    long_indptr: Optional[np.ndarray] = None
    long_indices: Optional[np.ndarray] = None
    long_scheme: Optional[str] = None

    def __post_init__(self) -> None:
        n = self.indptr.shape[0] - 1
        if self.long_indptr is None:
            indptr, indices = _empty_csr(n)
            object.__setattr__(self, "long_indptr", indptr)
            object.__setattr__(self, "long_indices", indices)
        for arr in (self.indptr, self.indices, self.long_indptr, self.long_indices):
            arr.setflags(write=False)
        if self.indices.size and (self.indices.min() < 0 or self.indices.max() >= n):
            raise GraphDatasetMismatch("Local neighbor index out of range")
        if self.long_indptr.shape[0] != n + 1:
            raise GraphDatasetMismatch("Long-edge table does not match the node count")

    @property
    def n(self) -> int:
        return int(self.indptr.shape[0] - 1)

    def neighbors(self, u: int) -> np.ndarray:
        return self.indices[self.indptr[u]:self.indptr[u + 1]]

    def long_neighbors(self, u: int) -> np.ndarray:
        return self.long_indices[self.long_indptr[u]:self.long_indptr[u + 1]]

    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def long_degrees(self) -> np.ndarray:
        return np.diff(self.long_indptr)

    @property
    def has_long_edges(self) -> bool:
        return self.long_indices.size > 0

    def check_dataset(self, ds: Dataset) -> None:
        """Raise GraphDatasetMismatch unless ``ds`` is the dataset this graph indexes."""
        if ds.n != self.n or ds.id != self.dataset_id or ds.fingerprint() != self.dataset_fingerprint:
            raise GraphDatasetMismatch(
                f"Graph built on {self.dataset_id!r} (n={self.n}) used with {ds.id!r} (n={ds.n})"
            )

    def with_long_edges(self, indptr: np.ndarray, indices: np.ndarray,
                        scheme: Optional[str]) -> "SearchGraph":
        return SearchGraph(
            indptr=self.indptr, indices=self.indices, config=self.config,
            dataset_id=self.dataset_id, dataset_fingerprint=self.dataset_fingerprint,
            long_indptr=indptr, long_indices=indices, long_scheme=scheme,
        )

    def to_bytes_key(self) -> bytes:
        """Canonical bytes of the adjacency, equal for equal graphs."""
        return b"".join(arr.tobytes() for arr in (self.indptr, self.indices.astype(np.int64),
                                                  self.long_indptr, self.long_indices.astype(np.int64)))


# ============================================================================
# Thresholds
# ============================================================================

def dense_threshold_angle(n: int, d: int, M: float, cap_at_right_angle: bool = False) -> float:
    """Connection angle arcsin(M n^(-1/d)) of the dense-regime graph.

    Raises:
        AngleOutOfRange: M n^(-1/d) > 1 and capping is not requested.
    """
    arg = M * n ** (-1.0 / d)
    if arg > 1.0:
        if not cap_at_right_angle:
            raise AngleOutOfRange(f"M * n^(-1/d) = {arg:.4f} > 1 (n={n}, d={d}, M={M})")
        logger.warning("dense threshold argument %.4f > 1; capping the angle at pi/2", arg)
        return math.pi / 2.0
    return math.asin(arg)


def sparse_threshold_height(n: int, d: int, M: float) -> float:
    """Cap height sqrt(2 M ln(n) / d) of the sparse-regime graph.

    Raises:
        RegimeMismatch: 2 M ln(n) / d > 1.
    """
    arg = 2.0 * M * math.log(n) / d
    if arg > 1.0:
        raise RegimeMismatch(f"2 M ln(n) / d = {arg:.4f} > 1 (n={n}, d={d}, M={M})")
    return math.sqrt(arg)


def threshold_height(cfg: GraphConfig, n: int, d: int) -> float:
    """Cap height alpha_M = cos(connection angle)."""
    if cfg.kind is GraphKind.THRESHOLD_SPARSE:
        return sparse_threshold_height(n, d, cfg.M)
    if cfg.kind is GraphKind.THRESHOLD_DENSE:
        return math.cos(dense_threshold_angle(n, d, cfg.M, cfg.cap_at_right_angle))
    raise ValueError("kNN graphs have no threshold")


def _blocks(n: int) -> List[Tuple[int, int]]:
    step = block_rows(n)
    return [(lo, min(n, lo + step)) for lo in range(0, n, step)]


def _run_blocks(work, n: int, message: str,
                progress_cb: Optional[ProgressCallback]) -> list:
    blocks = _blocks(n)
    results = []
    with ThreadPoolExecutor(max_workers=config.resolve_thread_count()) as pool:
        for i, part in enumerate(pool.map(work, blocks), start=1):
            results.append(part)
            report_progress(progress_cb, i, len(blocks), f"{message} {i}/{len(blocks)}")
    return results


def threshold_graph(ds: Dataset, height: float, cfg: GraphConfig,
                    progress_cb: Optional[ProgressCallback] = None) -> SearchGraph:
    """Undirected graph of all pairs with <x_i, x_j> >= height (spherical distance <= arccos height)."""
    points = ds.points

    def work(bounds: Tuple[int, int]) -> Tuple[np.ndarray, np.ndarray]:
        lo, hi = bounds
        gram = points[lo:hi] @ points.T
        r, c = np.nonzero(gram >= height)
        r = r + lo
        upper = c > r
        return r[upper], c[upper]

    parts = _run_blocks(work, ds.n, "threshold rows", progress_cb)
    rows = np.concatenate([p[0] for p in parts]) if parts else np.empty(0, np.int64)
    cols = np.concatenate([p[1] for p in parts]) if parts else np.empty(0, np.int64)
    indptr, indices = csr_from_pairs(ds.n, np.concatenate([rows, cols]), np.concatenate([cols, rows]))
    logger.info("built %s on %s: %d undirected edges", cfg.label, ds.id, rows.size)
    return SearchGraph(indptr=indptr, indices=indices, config=cfg, dataset_id=ds.id,
                       dataset_fingerprint=ds.fingerprint())


def build_threshold_dense(ds: Dataset, M: float, cap_at_right_angle: bool = False,
                          progress_cb: Optional[ProgressCallback] = None) -> SearchGraph:
    """Dense-regime G(M): connect pairs within arcsin(M n^(-1/d)).

    Args:
        ds: Dataset to index.
        M: Threshold parameter, > 1.
        cap_at_right_angle: Cap an out-of-range threshold at pi/2 instead of failing.
        progress_cb: Optional progress callback.

    Raises:
        AngleOutOfRange: M n^(-1/d) > 1 without ``cap_at_right_angle``.
    """
    cfg = GraphConfig(kind=GraphKind.THRESHOLD_DENSE, M=M, cap_at_right_angle=cap_at_right_angle)
    angle = dense_threshold_angle(ds.n, ds.d, M, cap_at_right_angle)
    return threshold_graph(ds, math.cos(angle), cfg, progress_cb)


def build_threshold_sparse(ds: Dataset, M: float,
                           progress_cb: Optional[ProgressCallback] = None) -> SearchGraph:
    """Sparse-regime G(M): connect pairs within arccos(sqrt(2 M ln(n) / d)).

    Raises:
        RegimeMismatch: 2 M ln(n) / d > 1.
    """
    cfg = GraphConfig(kind=GraphKind.THRESHOLD_SPARSE, M=M)
    return threshold_graph(ds, sparse_threshold_height(ds.n, ds.d, M), cfg, progress_cb)


def knn_order(ds: Dataset, k: int,
              progress_cb: Optional[ProgressCallback] = None) -> np.ndarray:
    """The k nearest other points of every node, nearest first.

    Ties are broken by the lower index, including ties at the k-th place.

    Returns:
        Array of shape (n, k).
    """
    if not 1 <= k < ds.n:
        raise ValueError(f"k must satisfy 1 <= k < n={ds.n}, got {k}")
    points, metric = ds.points, ds.metric

    def work(bounds: Tuple[int, int]) -> np.ndarray:
        lo, hi = bounds
        dist = pairwise_distances(points[lo:hi], points, metric)
        local = np.arange(hi - lo)
        dist[local, local + lo] = np.inf
        kth = np.partition(dist, k - 1, axis=1)[:, k - 1]
        r, c = np.nonzero(dist <= kth[:, None])
        order = np.lexsort((c, dist[r, c], r))
        r, c = r[order], c[order]
        starts = np.searchsorted(r, local)
        rank = np.arange(r.size) - starts[r]
        keep = rank < k
        return c[keep].reshape(hi - lo, k).astype(INDEX_DTYPE)

    return np.concatenate(_run_blocks(work, ds.n, "knn rows", progress_cb), axis=0)


def knn_graph_from_order(ds: Dataset, order: np.ndarray, k: int,
                         symmetrize: bool = False) -> SearchGraph:
    """kNN graph from the first ``k`` columns of a ``knn_order`` table."""
    if order.shape[0] != ds.n or order.shape[1] < k:
        raise GraphDatasetMismatch(f"Order table of shape {order.shape} cannot give k={k}")
    cfg = GraphConfig(kind=GraphKind.KNN, k=k, symmetrize=symmetrize)
    rows = np.repeat(np.arange(ds.n, dtype=np.int64), k)
    cols = order[:, :k].astype(np.int64).ravel()
    if symmetrize:
        rows, cols = np.concatenate([rows, cols]), np.concatenate([cols, rows])
    indptr, indices = csr_from_pairs(ds.n, rows, cols)
    return SearchGraph(indptr=indptr, indices=indices, config=cfg, dataset_id=ds.id,
                       dataset_fingerprint=ds.fingerprint())


def build_knn(ds: Dataset, k: int, symmetrize: bool = False,
              progress_cb: Optional[ProgressCallback] = None) -> SearchGraph:
    """Directed graph linking every node to its k exact nearest neighbors.

    Args:
        ds: Dataset to index.
        k: Out-degree, 1 <= k < n.
        symmetrize: Also add every reverse edge.
        progress_cb: Optional progress callback.
    """
    graph = knn_graph_from_order(ds, knn_order(ds, k, progress_cb), k, symmetrize)
    logger.info("built %s on %s", graph.config.label, ds.id)
    return graph


def build_graph(ds: Dataset, cfg: GraphConfig,
                progress_cb: Optional[ProgressCallback] = None) -> SearchGraph:
    """Dispatch on ``cfg.kind``."""
    if cfg.kind is GraphKind.THRESHOLD_DENSE:
        return build_threshold_dense(ds, cfg.M, cfg.cap_at_right_angle, progress_cb)
    if cfg.kind is GraphKind.THRESHOLD_SPARSE:
        return build_threshold_sparse(ds, cfg.M, progress_cb)
    return build_knn(ds, cfg.k, cfg.symmetrize, progress_cb)


# ============================================================================
# Statistics
# ============================================================================

@dataclass(frozen=True)
class GraphStats:
    """Degree and edge statistics of the local adjacency.

    Attributes:
        mean_degree, min_degree, max_degree: Over local (out-)degrees.
        edge_count: Undirected edges for symmetric graphs, directed edges otherwise.
        expected_f: (n - 1) C(alpha_M) for threshold graphs, k for kNN graphs.
        fraction_in_bracket: Share of nodes with degree in [f/2, 3f/2].
        long_edge_count: Number of long-range edges.
        components: Connected components (weak for directed graphs), if computed.
    """

    mean_degree: float
    min_degree: int
    max_degree: int
    edge_count: int
    expected_f: float
    fraction_in_bracket: float
    long_edge_count: int = 0
    components: Optional[int] = field(default=None)


def expected_f(g: SearchGraph, ds: Dataset) -> float:
    cfg = g.config
    if not cfg.is_threshold:
        return float(cfg.k)
    height = threshold_height(cfg, ds.n, ds.d)
    return (ds.n - 1) * cap_volume(CapSpec(gamma=min(1.0, max(0.0, height)), d=ds.d)).value


def graph_stats(g: SearchGraph, ds: Dataset, with_components: bool = False) -> GraphStats:
    """Exact degree and edge counts together with the expected degree f.

    Raises:
        GraphDatasetMismatch: ``g`` was not built on ``ds``.
    """
    g.check_dataset(ds)
    deg = g.degrees()
    nnz = int(g.indices.size)
    f = expected_f(g, ds)
    in_bracket = np.count_nonzero((deg >= 0.5 * f) & (deg <= 1.5 * f)) / g.n
    return GraphStats(
        mean_degree=float(deg.mean()),
        min_degree=int(deg.min()),
        max_degree=int(deg.max()),
        edge_count=nnz // 2 if g.config.is_symmetric else nnz,
        expected_f=f,
        fraction_in_bracket=float(in_bracket),
        long_edge_count=int(g.long_indices.size),
        components=count_components(g) if with_components else None,
    )


def to_networkx(g: SearchGraph, include_long: bool = False) -> nx.Graph:
    """The graph as ``nx.Graph`` (symmetric kinds) or ``nx.DiGraph``.

    Long edges, when included, carry ``long=True``; a graph with long edges is
    always returned directed.
    """
    directed = include_long and g.has_long_edges or not g.config.is_symmetric
    graph = nx.DiGraph() if directed else nx.Graph()
    graph.add_nodes_from(range(g.n))
    rows = np.repeat(np.arange(g.n), g.degrees())
    graph.add_edges_from(zip(rows.tolist(), g.indices.tolist()), long=False)
    if include_long and g.has_long_edges:
        long_rows = np.repeat(np.arange(g.n), g.long_degrees())
        graph.add_edges_from(zip(long_rows.tolist(), g.long_indices.tolist()), long=True)
    return graph


def count_components(g: SearchGraph) -> int:
    graph = to_networkx(g)
    if graph.is_directed():
        return nx.number_weakly_connected_components(graph)
    return nx.number_connected_components(graph)


def is_connected(g: SearchGraph) -> bool:
    """True when every node reaches every other along local out-edges."""
    graph = to_networkx(g)
    if graph.is_directed():
        return nx.is_strongly_connected(graph)
    return nx.is_connected(graph)
