"""Experiment plans, cells and result records.

A plan is a JSON file naming one dataset, one query source and lists of
graph, long-edge and search configurations. Its cells are the cross product
(repetition x graph x long edges x search), enumerated in that order.

Example plan::

    {
      "name": "d2-sweep",
      "seed": 7,
      "dataset": {"kind": "uniform", "n": 2000, "d": 2},
      "queries": {"kind": "planted", "m": 200, "radius": 0.01},
      "graphs": [{"kind": "dense", "M": 4.0}, {"kind": "knn", "k": 10}],
      "long_edges": [null, {"scheme": "kl-rank"}],
      "searches": [{"algorithm": "greedy"}, {"algorithm": "beam", "beam_width": 8, "llf": true}],
      "repetitions": 1,
      "output": "d2-sweep.csv"
    }
"""

from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Tuple, Union

from navgraph import config
from navgraph.core.data import Metric
from navgraph.core.graphs import GraphConfig
from navgraph.core.long_edges import LongEdgeConfig, LongEdgeScheme, default_edges_per_node
from navgraph.core.search import Algorithm, SearchConfig, StartKind

PathLike = Union[str, Path]


def cell_seed(master_seed: int, parts: Tuple[Any, ...]) -> int:
    """Stable 63-bit seed for a cell, derived from the master seed and the cell parameters."""
    payload = json.dumps([master_seed, *parts], sort_keys=True, default=str).encode("utf-8")
    return int.from_bytes(hashlib.sha256(payload).digest()[:8], "little") & ((1 << 63) - 1)


@dataclass(frozen=True)
class DatasetSpec:
    """Where the dataset comes from.

    Attributes:
        kind: "uniform" (synthetic) or "file" (a saved ``.npy`` dataset).
        n: Size of a synthetic dataset.
        d: Sphere dimension of a synthetic dataset.
        metric: Metric of a synthetic dataset.
        path: Saved dataset for kind "file".
    """

    kind: str = "uniform"
    n: Optional[int] = None
    d: Optional[int] = None
    metric: Metric = Metric.SPHERICAL
    path: Optional[str] = None

    def __post_init__(self) -> None:
        if self.kind == "uniform":
            if self.n is None or self.d is None:
                raise ValueError("Uniform datasets need n and d")
        elif self.kind == "file":
            if not self.path:
                raise ValueError("File datasets need a path")
        else:
            raise ValueError(f"Unknown dataset kind {self.kind!r}")

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, "n": self.n, "d": self.d, "metric": self.metric.value,
                "path": self.path}

    @classmethod
    def from_dict(cls, raw: Dict[str, Any]) -> "DatasetSpec":
        return cls(kind=raw.get("kind", "uniform"), n=raw.get("n"), d=raw.get("d"),
                   metric=Metric(raw.get("metric", Metric.SPHERICAL.value)), path=raw.get("path"))


@dataclass(frozen=True)
class QuerySpec:
    """Where the queries come from.

    Attributes:
        kind: "planted", "uniform" or "file" (a saved ``.npz`` query set).
        m: Number of generated queries.
        radius: Planted radius R.
        c: Approximation factor for the c,R success rate of planted queries.
        path: Saved query set for kind "file".
    """

    kind: str = "uniform"
    m: int = config.DEFAULT_QUERY_COUNT
    radius: Optional[float] = None
    c: Optional[float] = None
    path: Optional[str] = None

    def __post_init__(self) -> None:
        if self.kind not in ("planted", "uniform", "file"):
            raise ValueError(f"Unknown query kind {self.kind!r}")
        if self.kind == "planted" and self.radius is None:
            raise ValueError("Planted queries need a radius")
        if self.kind == "file" and not self.path:
            raise ValueError("File queries need a path")
        if self.m < 1:
            raise ValueError(f"Query count must be >= 1, got {self.m}")

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, "m": self.m, "radius": self.radius, "c": self.c,
                "path": self.path}

    @classmethod
    def from_dict(cls, raw: Dict[str, Any]) -> "QuerySpec":
        return cls(kind=raw.get("kind", "uniform"), m=int(raw.get("m", config.DEFAULT_QUERY_COUNT)),
                   radius=raw.get("radius"), c=raw.get("c"), path=raw.get("path"))


def long_edge_params(cfg: Optional[LongEdgeConfig]) -> Optional[Dict[str, Any]]:
    if cfg is None:
        return None
    return {"scheme": cfg.scheme.value, "edges_per_node": cfg.edges_per_node,
            "presample_exponent": cfg.presample_exponent, "exclude_near": cfg.exclude_near}


def search_params(cfg: SearchConfig) -> Dict[str, Any]:
    return {"algorithm": cfg.algorithm.value, "beam_width": cfg.beam_width, "llf": cfg.llf,
            "max_steps": cfg.max_steps}


def _long_edges_from_dict(raw: Optional[Dict[str, Any]], n: Optional[int]) -> Optional[LongEdgeConfig]:
    """Plan entry to config; a missing edge count becomes ceil(log2 n) once n is known."""
    if raw is None:
        return None
    count = raw.get("edges_per_node")
    if count is None:
        if n is None:
            raise ValueError("edges_per_node is required when the dataset size is not in the plan")
        count = default_edges_per_node(n)
    return LongEdgeConfig(
        scheme=LongEdgeScheme(raw["scheme"]),
        edges_per_node=int(count),
        presample_exponent=float(raw.get("presample_exponent", config.DEFAULT_PRESAMPLE_EXPONENT)),
        exclude_near=bool(raw.get("exclude_near", False)),
    )


def _search_from_dict(raw: Dict[str, Any]) -> SearchConfig:
    return SearchConfig(
        algorithm=Algorithm(raw.get("algorithm", Algorithm.GREEDY.value)),
        beam_width=int(raw.get("beam_width", 1)),
        llf=bool(raw.get("llf", False)),
        start=StartKind.RANDOM_HEMISPHERE,
        max_steps=raw.get("max_steps"),
    )


@dataclass(frozen=True)
class Cell:
    """One point of the plan's cross product."""

    index: int
    repetition: int
    graph: GraphConfig
    long_edges: Optional[LongEdgeConfig]
    search: SearchConfig

    def key(self) -> Tuple[Any, ...]:
        return (self.repetition, self.graph.params(), long_edge_params(self.long_edges),
                search_params(self.search))


@dataclass(frozen=True)
class ExperimentPlan:
    """A sweep over configurations with a single master seed.

    Attributes:
        name: Plan label written to every record.
        dataset: Dataset source.
        queries: Query source.
        graphs: Graph configurations.
        long_edges: Long-edge configurations; None entries mean "no long edges".
        searches: Search configurations.
        repetitions: Independent repetitions (fresh dataset and queries for synthetic sources).
        output: CSV path.
        seed: Master seed.
    """

    name: str
    dataset: DatasetSpec
    queries: QuerySpec
    graphs: Tuple[GraphConfig, ...]
    searches: Tuple[SearchConfig, ...]
    long_edges: Tuple[Optional[LongEdgeConfig], ...] = (None,)
    repetitions: int = 1
    output: Optional[str] = None
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.graphs:
            raise ValueError("A plan needs at least one graph configuration")
        if not self.searches:
            raise ValueError("A plan needs at least one search configuration")
        if not self.long_edges:
            raise ValueError("long_edges must list at least one entry (null for none)")
        if self.repetitions < 1:
            raise ValueError(f"repetitions must be >= 1, got {self.repetitions}")

    def cells(self) -> Iterator[Cell]:
        product = itertools.product(range(self.repetitions), self.graphs, self.long_edges,
                                    self.searches)
        for index, (rep, graph, long_cfg, search) in enumerate(product):
            yield Cell(index=index, repetition=rep, graph=graph, long_edges=long_cfg, search=search)

    @property
    def cell_count(self) -> int:
        return self.repetitions * len(self.graphs) * len(self.long_edges) * len(self.searches)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "seed": self.seed,
            "dataset": self.dataset.to_dict(),
            "queries": self.queries.to_dict(),
            "graphs": [g.params() for g in self.graphs],
            "long_edges": [long_edge_params(c) for c in self.long_edges],
            "searches": [search_params(s) for s in self.searches],
            "repetitions": self.repetitions,
            "output": self.output,
        }

    @classmethod
    def from_dict(cls, raw: Dict[str, Any]) -> "ExperimentPlan":
        dataset = DatasetSpec.from_dict(raw["dataset"])
        return cls(
            name=str(raw.get("name", "plan")),
            dataset=dataset,
            queries=QuerySpec.from_dict(raw.get("queries", {})),
            graphs=tuple(GraphConfig.from_params(g) for g in raw["graphs"]),
            long_edges=tuple(_long_edges_from_dict(c, dataset.n)
                             for c in raw.get("long_edges", [None])),
            searches=tuple(_search_from_dict(s) for s in raw["searches"]),
            repetitions=int(raw.get("repetitions", 1)),
            output=raw.get("output"),
            seed=int(raw.get("seed", 0)),
        )


def load_plan(path: PathLike) -> ExperimentPlan:
    """Parse a JSON plan file.

    Raises:
        ValueError: Unreadable JSON or an invalid configuration.
    """
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValueError(f"Plan {path} is not valid JSON: {exc}") from exc
    try:
        return ExperimentPlan.from_dict(raw)
    except KeyError as exc:
        raise ValueError(f"Plan {path} is missing {exc}") from exc


def save_plan(plan: ExperimentPlan, path: PathLike) -> None:
    Path(path).write_text(json.dumps(plan.to_dict(), indent=2), encoding="utf-8")


# ============================================================================
# Records
# ============================================================================

@dataclass
class BenchRecord:
    """One CSV row: the cell's parameters flattened plus its measurements.

    ``error`` is always ``1 - recall_at_1``. Failed cells carry
    ``status="error"``, the message, and NaN measurements.
    """

    schema_version: int
    plan: str
    cell: int
    repetition: int
    seed: int
    dataset_id: str
    n: int
    d: int
    metric: str
    graph_kind: str
    M: Optional[float]
    k: Optional[int]
    symmetrize: bool
    long_scheme: str
    edges_per_node: Optional[int]
    presample_exponent: Optional[float]
    algorithm: str
    beam_width: int
    llf: bool
    queries: int
    recall_at_1: float = float("nan")
    error: float = float("nan")
    mean_steps: float = float("nan")
    mean_distance_computations: float = float("nan")
    success_c_r: Optional[float] = None
    exhausted: int = 0
    wall_seconds: float = float("nan")
    queries_per_second: float = float("nan")
    status: str = "ok"
    message: str = ""

    def as_row(self) -> Dict[str, Any]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


CSV_COLUMNS: List[str] = [f.name for f in fields(BenchRecord)]

# Columns that legitimately differ between two runs of the same plan
WALL_TIME_COLUMNS: Tuple[str, ...] = ("wall_seconds", "queries_per_second")
