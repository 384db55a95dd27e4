"""Run an ExperimentPlan and write its records as CSV.

Cells run in enumeration order, each evaluating its queries in parallel.
Graphs and long-edge sets are built once per repetition and shared by every
cell that needs them. Each finished cell is appended to the CSV immediately,
so an interrupted run keeps its completed rows.
"""

from __future__ import annotations

import dataclasses
import logging
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np
import pandas as pd

from navgraph import config
from navgraph.bench.plans import (
    CSV_COLUMNS,
    WALL_TIME_COLUMNS,
    BenchRecord,
    Cell,
    DatasetSpec,
    ExperimentPlan,
    QuerySpec,
    cell_seed,
    long_edge_params,
)
from navgraph.core.data import Dataset, QuerySet, generate_uniform, plant_queries, sample_queries_uniform
from navgraph.core.graphs import SearchGraph, build_graph
from navgraph.core.long_edges import LongEdgeSet, attach, sample_long_edges
from navgraph.core.metrics import ProgressCallback, report_progress
from navgraph.core.search import QueryAggregate, evaluate_query_set
from navgraph.core.vecs_io import load_dataset, load_queries

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


class CsvSink:
    """Appends records to a CSV with a fixed header, one flush per record."""

    def __init__(self, path: Optional[PathLike]) -> None:
        self.path = None if path is None else Path(path)
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            pd.DataFrame(columns=CSV_COLUMNS).to_csv(self.path, index=False)

    def write(self, record: BenchRecord) -> None:
        if self.path is None:
            return
        frame = pd.DataFrame([record.as_row()], columns=CSV_COLUMNS)
        frame.to_csv(self.path, mode="a", header=False, index=False)


def materialize_dataset(spec: DatasetSpec, seed: int) -> Dataset:
    if spec.kind == "file":
        return load_dataset(spec.path)
    return generate_uniform(spec.n, spec.d, seed, spec.metric)


def materialize_queries(spec: QuerySpec, ds: Dataset, seed: int) -> QuerySet:
    if spec.kind == "file":
        qs = load_queries(spec.path)
        if qs.queries.shape[1] != ds.dim:
            raise ValueError(f"Queries in {spec.path} do not match dataset dim {ds.dim}")
        return qs.subset(min(spec.m, qs.m))
    if spec.kind == "planted":
        return plant_queries(ds, spec.m, spec.radius, seed)
    return sample_queries_uniform(ds, spec.m, seed)


def _base_record(plan: ExperimentPlan, cell: Cell, seed: int, ds: Optional[Dataset]) -> BenchRecord:
    long_cfg = cell.long_edges
    return BenchRecord(
        schema_version=config.CSV_SCHEMA_VERSION,
        plan=plan.name,
        cell=cell.index,
        repetition=cell.repetition,
        seed=seed,
        dataset_id="" if ds is None else ds.id,
        n=plan.dataset.n if ds is None else ds.n,
        d=plan.dataset.d if ds is None else ds.d,
        metric=plan.dataset.metric.value if ds is None else ds.metric.value,
        graph_kind=cell.graph.kind.value,
        M=cell.graph.M,
        k=cell.graph.k,
        symmetrize=cell.graph.symmetrize,
        long_scheme="none" if long_cfg is None else long_cfg.scheme.value,
        edges_per_node=None if long_cfg is None else long_cfg.edges_per_node,
        presample_exponent=None if long_cfg is None else long_cfg.presample_exponent,
        algorithm=cell.search.algorithm.value,
        beam_width=cell.search.beam_width,
        llf=cell.search.llf,
        queries=plan.queries.m,
    )


def _fill(record: BenchRecord, agg: QueryAggregate) -> BenchRecord:
    return dataclasses.replace(
        record,
        queries=len(agg.results),
        recall_at_1=agg.recall_at_1,
        error=1.0 - agg.recall_at_1,
        mean_steps=agg.mean_steps,
        mean_distance_computations=agg.mean_distance_computations,
        success_c_r=agg.success_c_r,
        exhausted=agg.exhausted_count,
        wall_seconds=agg.wall_seconds,
        queries_per_second=agg.queries_per_second,
    )


class _Repetition:
    """Dataset, queries and cached graphs of one repetition."""

    def __init__(self, plan: ExperimentPlan, rep: int) -> None:
        self.plan = plan
        self.rep = rep
        self.ds = materialize_dataset(plan.dataset, cell_seed(plan.seed, ("dataset", rep)))
        self.qs = materialize_queries(plan.queries, self.ds, cell_seed(plan.seed, ("queries", rep)))
        self._graphs: Dict[str, SearchGraph] = {}
        self._edges: Dict[str, LongEdgeSet] = {}

    def graph(self, cell: Cell) -> SearchGraph:
        key = cell.graph.config_hash()
        if key not in self._graphs:
            self._graphs[key] = build_graph(self.ds, cell.graph)
        g = self._graphs[key]
        if cell.long_edges is None:
            return g
        edge_key = repr(sorted(long_edge_params(cell.long_edges).items()))
        if edge_key not in self._edges:
            seed = cell_seed(self.plan.seed, ("long", self.rep, long_edge_params(cell.long_edges)))
            cfg = dataclasses.replace(cell.long_edges, seed=seed)
            self._edges[edge_key] = sample_long_edges(self.ds, cfg)
        return attach(g, self._edges[edge_key])


def run_cell(plan: ExperimentPlan, cell: Cell, rep: Optional[_Repetition],
             threads: Optional[int] = None) -> BenchRecord:
    """Evaluate one cell; any failure becomes an error record."""
    seed = cell_seed(plan.seed, cell.key())
    record = _base_record(plan, cell, seed, None if rep is None else rep.ds)
    try:
        if rep is None:
            raise ValueError("dataset or queries could not be prepared")
        g = rep.graph(cell)
        cfg = dataclasses.replace(cell.search, seed=seed)
        agg = evaluate_query_set(g, rep.ds, rep.qs, cfg, c=plan.queries.c, threads=threads)
        return _fill(record, agg)
    except Exception as exc:  # noqa: BLE001
        logger.warning("cell %d (%s) failed: %s", cell.index, cell.graph.label, exc)
        return dataclasses.replace(record, status="error", message=f"{type(exc).__name__}: {exc}")


def run_plan(plan: ExperimentPlan, output: Optional[PathLike] = None, threads: Optional[int] = None,
             progress_cb: Optional[ProgressCallback] = None) -> pd.DataFrame:
    """Run every cell of ``plan``.

    Args:
        plan: The sweep.
        output: CSV path; defaults to ``plan.output``; None writes no file.
        threads: Query worker threads per cell.
        progress_cb: Optional progress callback, one update per cell.

    Returns:
        DataFrame with one row per cell, in enumeration order, columns CSV_COLUMNS.
    """
    sink = CsvSink(output if output is not None else plan.output)
    reps: Dict[int, Optional[_Repetition]] = {}
    records: List[BenchRecord] = []
    total = plan.cell_count
    for cell in plan.cells():
        if cell.repetition not in reps:
            reps.clear()
            try:
                reps[cell.repetition] = _Repetition(plan, cell.repetition)
            except Exception as exc:  # noqa: BLE001
                logger.warning("repetition %d could not be prepared: %s", cell.repetition, exc)
                reps[cell.repetition] = None
        record = run_cell(plan, cell, reps[cell.repetition], threads)
        sink.write(record)
        records.append(record)
        report_progress(progress_cb, len(records), total, f"Cell {len(records)}/{total}",
                        best_error=_best_error(records), force=True)
    failed = sum(1 for r in records if r.status != "ok")
    logger.info("plan %s: %d cells, %d failed", plan.name, len(records), failed)
    return pd.DataFrame([r.as_row() for r in records], columns=CSV_COLUMNS)


def _best_error(records: List[BenchRecord]) -> Optional[float]:
    errors = [r.error for r in records if r.status == "ok" and not np.isnan(r.error)]
    return min(errors) if errors else None


def strip_wall_time(frame: pd.DataFrame) -> pd.DataFrame:
    """``frame`` without the columns that vary between identical runs."""
    return frame.drop(columns=list(WALL_TIME_COLUMNS))
