"""Two-space search: navigate a low-dimensional image, re-rank in the original space.

A ``Transform`` maps unit vectors to a smaller sphere. The search graph is
built over the transformed dataset; at query time the query is mapped too,
beam search runs in the low space, and the final pool is re-ranked by exact
distance in the original space.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np
from sklearn.decomposition import PCA

from navgraph import config
from navgraph.core.data import Dataset, QuerySet, distances_to, normalize_rows
from navgraph.core.errors import DimensionMismatch, GraphDatasetMismatch
from navgraph.core.graphs import SearchGraph
from navgraph.core.metrics import ProgressCallback, exact_mean, recall_at_1, report_progress
from navgraph.core.search import Algorithm, SearchConfig, beam_search_pool

logger = logging.getLogger(__name__)


class TransformKind(Enum):
    RANDOM_PROJECTION = "random-projection"
    PCA = "pca"
    IDENTITY = "identity"


@dataclass(frozen=True)
class TransformSpec:
    """What transform to fit.

    Attributes:
        kind: Transform family.
        target_dim: Ambient dimension of the image (>= 2).
        seed: Seed of the random projection matrix.
    """

    kind: TransformKind
    target_dim: int
    seed: int = 0

    def __post_init__(self) -> None:
        if self.target_dim < 2:
            raise ValueError(f"target_dim must be >= 2, got {self.target_dim}")

    @property
    def label(self) -> str:
        return f"{self.kind.value}{self.target_dim}-s{self.seed}"


@dataclass(frozen=True, eq=False)
class Transform:
    """A fitted linear map followed by renormalization.

    ``matrix`` has shape (source_dim, target_dim); ``mean`` is subtracted first
    when present. The identity transform stores neither and returns its input
    unchanged.
    """

    spec: TransformSpec
    source_dim: int
    matrix: Optional[np.ndarray] = None
    mean: Optional[np.ndarray] = None

    def apply(self, vectors: np.ndarray) -> np.ndarray:
        """Map rows of ``vectors`` (or a single vector) onto the target sphere.

        Raises:
            DimensionMismatch: The vectors do not have ``source_dim`` coordinates.
        """
        arr = np.asarray(vectors, dtype=np.float64)
        if arr.shape[-1] != self.source_dim:
            raise DimensionMismatch(
                f"Transform expects dim {self.source_dim}, got {arr.shape[-1]}"
            )
        if self.spec.kind is TransformKind.IDENTITY:
            return arr
        if self.mean is not None:
            arr = arr - self.mean
        return normalize_rows(arr @ self.matrix)


def fit_transform(ds: Dataset, spec: TransformSpec) -> Tuple[Dataset, Transform]:
    """Fit ``spec`` on ``ds`` and return the transformed dataset with its handle.

    Args:
        ds: Dataset in the original space.
        spec: Transform to fit.

    Returns:
        Tuple of (dataset in the target space, reusable transform).

    Raises:
        DimensionMismatch: ``target_dim`` exceeds the dataset dimension, or an
            identity transform is asked to change it.
    """
    if spec.target_dim > ds.dim:
        raise DimensionMismatch(f"target_dim {spec.target_dim} exceeds dataset dim {ds.dim}")
    if spec.kind is TransformKind.IDENTITY:
        if spec.target_dim != ds.dim:
            raise DimensionMismatch("The identity transform keeps the dimension")
        return ds, Transform(spec=spec, source_dim=ds.dim)

    if spec.kind is TransformKind.RANDOM_PROJECTION:
        rng = np.random.default_rng(spec.seed)
        gaussian = rng.standard_normal((ds.dim, spec.target_dim))
        matrix, _ = np.linalg.qr(gaussian)
        transform = Transform(spec=spec, source_dim=ds.dim, matrix=matrix)
    else:
        if spec.target_dim > ds.n:
            raise DimensionMismatch(f"PCA to {spec.target_dim} dims needs at least as many points")
        pca = PCA(n_components=spec.target_dim, svd_solver="full")
        pca.fit(ds.points)
        transform = Transform(spec=spec, source_dim=ds.dim,
                              matrix=np.ascontiguousarray(pca.components_.T),
                              mean=np.asarray(pca.mean_, dtype=np.float64))
    logger.info("Fitted %s on %s", spec.label, ds.id)
    return ds.with_points(transform.apply(ds.points), f"-{spec.label}"), transform


@dataclass(frozen=True)
class RerankResult:
    """Outcome of a two-space query.

    Attributes:
        answer: Pool member closest to the query in the original space.
        low_answer: Answer of the low-space search alone.
        steps: Beam steps in the low space.
        low_distance_computations: Evaluations in the low space.
        original_distance_computations: Evaluations in the original space (the pool size).
        success_exact: answer == ground truth, when known.
        low_success_exact: low_answer == ground truth, when known.
        answer_distance: Original-space distance of the answer.
    """

    answer: int
    low_answer: int
    steps: int
    low_distance_computations: int
    original_distance_computations: int
    success_exact: Optional[bool] = None
    low_success_exact: Optional[bool] = None
    answer_distance: float = float("nan")

    @property
    def distance_computations(self) -> int:
        return self.low_distance_computations + self.original_distance_computations


def _check_pipeline(g_low: SearchGraph, ds_low: Dataset, ds_orig: Dataset,
                    transform: Transform) -> None:
    if ds_low.n != ds_orig.n:
        raise GraphDatasetMismatch(f"Low-space dataset has {ds_low.n} points, original {ds_orig.n}")
    if transform.source_dim != ds_orig.dim:
        raise DimensionMismatch(f"Transform expects dim {transform.source_dim}, dataset has {ds_orig.dim}")
    if g_low.n != ds_low.n or g_low.dataset_id != ds_low.id:
        raise GraphDatasetMismatch(f"Graph of {g_low.dataset_id!r} used with {ds_low.id!r}")


def search_and_rerank(g_low: SearchGraph, ds_low: Dataset, ds_orig: Dataset, q_orig: np.ndarray,
                      transform: Transform, cfg: SearchConfig, query_id: int = 0,
                      truth: Optional[int] = None) -> RerankResult:
    """Beam search in the low space, then pick the pool member closest in the original space.

    ``cfg`` is run as a beam search whatever its ``algorithm``; width 1
    degenerates to greedy search.

    Raises:
        DimensionMismatch: ``q_orig`` or the transform does not fit ``ds_orig``.
        GraphDatasetMismatch: ``g_low`` was not built over ``ds_low``.
    """
    _check_pipeline(g_low, ds_low, ds_orig, transform)
    q_orig = np.asarray(q_orig, dtype=np.float64)
    if q_orig.shape != (ds_orig.dim,):
        raise DimensionMismatch(f"Query of shape {q_orig.shape} for dataset of dim {ds_orig.dim}")
    q_low = transform.apply(q_orig)
    beam_cfg = cfg if cfg.algorithm is Algorithm.BEAM else SearchConfig(
        algorithm=Algorithm.BEAM, beam_width=cfg.beam_width, llf=cfg.llf, start=cfg.start,
        start_index=cfg.start_index, max_steps=cfg.max_steps, seed=cfg.seed)
    low, pool = beam_search_pool(g_low, ds_low, q_low, beam_cfg, query_id)

    candidates = np.asarray(pool, dtype=np.int64)
    dist = distances_to(ds_orig.points[candidates], q_orig, ds_orig.metric)
    best = int(np.lexsort((candidates, dist))[0])
    answer = int(candidates[best])
    return RerankResult(
        answer=answer,
        low_answer=low.answer,
        steps=low.steps,
        low_distance_computations=low.distance_computations,
        original_distance_computations=int(candidates.size),
        success_exact=None if truth is None else answer == truth,
        low_success_exact=None if truth is None else low.answer == truth,
        answer_distance=float(dist[best]),
    )


@dataclass(frozen=True)
class RerankAggregate:
    """Query-set reduction of two-space results, against original-space truth."""

    recall_at_1: float
    low_only_recall_at_1: float
    mean_low_distance_computations: float
    mean_original_distance_computations: float
    wall_seconds: float
    results: Tuple[RerankResult, ...] = ()


def evaluate_rerank(g_low: SearchGraph, ds_low: Dataset, ds_orig: Dataset, qs: QuerySet,
                    transform: Transform, cfg: SearchConfig, threads: Optional[int] = None,
                    progress_cb: Optional[ProgressCallback] = None) -> RerankAggregate:
    """Run ``search_and_rerank`` over a query set whose truth is in the original space."""
    _check_pipeline(g_low, ds_low, ds_orig, transform)

    def run(i: int) -> RerankResult:
        return search_and_rerank(g_low, ds_low, ds_orig, qs.queries[i], transform, cfg,
                                 query_id=i, truth=int(qs.ground_truth[i]))

    began = time.perf_counter()
    results: List[RerankResult] = []
    with ThreadPoolExecutor(max_workers=config.resolve_thread_count(threads)) as pool:
        for result in pool.map(run, range(qs.m)):
            results.append(result)
            report_progress(progress_cb, len(results), qs.m, f"Query {len(results)}/{qs.m}")
    wall = time.perf_counter() - began
    return RerankAggregate(
        recall_at_1=recall_at_1([r.answer for r in results], qs.ground_truth),
        low_only_recall_at_1=recall_at_1([r.low_answer for r in results], qs.ground_truth),
        mean_low_distance_computations=exact_mean([r.low_distance_computations for r in results]),
        mean_original_distance_computations=exact_mean(
            [r.original_distance_computations for r in results]),
        wall_seconds=wall,
        results=tuple(results),
    )
