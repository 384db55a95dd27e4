"""Readers and writers for vector files and stored datasets.

fvecs / bvecs layout: every record is a little-endian int32 dimension ``dim``
followed by ``dim`` float32 (fvecs) or uint8 (bvecs) values. All records of a
file must share one dimension.

Stored datasets are a ``.npy`` array of points next to a ``.json`` sidecar
carrying id, n, d, metric and the content fingerprint.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass
from enum import Enum
from pathlib import Path
from typing import Optional, Union

import numpy as np

from navgraph.core.data import Dataset, Metric, QuerySet, normalize_rows
from navgraph.core.errors import (
    GraphDatasetMismatch,
    InconsistentDimensions,
    MalformedHeader,
    TruncatedFile,
)

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


class VecsFormat(Enum):
    FVECS = "fvecs"
    BVECS = "bvecs"

    @property
    def payload_dtype(self) -> np.dtype:
        return np.dtype("<f4") if self is VecsFormat.FVECS else np.dtype(np.uint8)


def read_vecs(path: PathLike, fmt: VecsFormat, limit: Optional[int] = None) -> np.ndarray:
    """Read the raw vectors of an fvecs/bvecs file as float64.

    Args:
        path: File to read.
        fmt: Payload format.
        limit: Read at most this many leading records.

    Returns:
        Array of shape (count, dim).

    Raises:
        MalformedHeader: First prefix missing or nonpositive.
        InconsistentDimensions: A record prefix differs from the first one.
        TruncatedFile: The file ends inside a record.
    """
    raw = Path(path).read_bytes()
    if len(raw) < 4:
        raise MalformedHeader(f"{path}: file too short for a dimension prefix ({len(raw)} bytes)")
    dim = int(np.frombuffer(raw, dtype="<i4", count=1)[0])
    if dim <= 0:
        raise MalformedHeader(f"{path}: nonpositive dimension prefix {dim}")

    record = 4 + dim * fmt.payload_dtype.itemsize
    count, remainder = divmod(len(raw), record)
    if limit is not None:
        if limit < 1:
            raise ValueError(f"limit must be >= 1, got {limit}")
        if limit < count:
            count, remainder = limit, 0

    table = np.frombuffer(raw, dtype=np.uint8, count=count * record).reshape(count, record)
    prefixes = table[:, :4].copy().view("<i4").ravel()
    bad = np.flatnonzero(prefixes != dim)
    if bad.size:
        first = int(bad[0])
        raise InconsistentDimensions(
            f"{path}: record {first} has dimension {int(prefixes[first])}, expected {dim}"
        )
    if remainder >= 4:
        tail = int(np.frombuffer(raw, dtype="<i4", count=1, offset=count * record)[0])
        if tail != dim:
            raise InconsistentDimensions(
                f"{path}: record {count} has dimension {tail}, expected {dim}"
            )
    if remainder or count == 0:
        raise TruncatedFile(f"{path}: {remainder or len(raw)} trailing bytes do not form a record")

    payload = table[:, 4:].copy().view(fmt.payload_dtype).reshape(count, dim)
    return payload.astype(np.float64)


def write_vecs(path: PathLike, vectors: np.ndarray, fmt: VecsFormat) -> None:
    """Write vectors in fvecs/bvecs layout."""
    arr = np.asarray(vectors)
    if arr.ndim != 2 or arr.shape[1] < 1:
        raise ValueError(f"Vectors must be a non-empty 2-D array, got shape {arr.shape}")
    count, dim = arr.shape
    payload = arr.astype(fmt.payload_dtype)
    prefix = np.full((count, 1), dim, dtype="<i4")
    table = np.concatenate([prefix.view(np.uint8), payload.view(np.uint8).reshape(count, -1)],
                           axis=1)
    Path(path).write_bytes(table.tobytes())


def load_vectors(path: PathLike, fmt: VecsFormat, normalize: bool = True,
                 metric: Metric = Metric.ANGULAR, dataset_id: Optional[str] = None,
                 limit: Optional[int] = None) -> Dataset:
    """Load an fvecs/bvecs file as a Dataset.

    Without ``normalize`` the stored vectors must already be unit norm.

    Raises:
        MalformedHeader, InconsistentDimensions, TruncatedFile: See ``read_vecs``.
        ValueError: Fewer than two vectors, or non-unit vectors without ``normalize``.
    """
    vectors = read_vecs(path, fmt, limit=limit)
    if normalize:
        vectors = normalize_rows(vectors)
    label = dataset_id or Path(path).stem
    if limit is not None:
        label = f"{label}-first{vectors.shape[0]}"
    logger.info("loaded %d vectors of dim %d from %s", vectors.shape[0], vectors.shape[1], path)
    return Dataset(points=vectors, metric=metric, id=label)


# ============================================================================
# Stored datasets
# ============================================================================

@dataclass(frozen=True)
class DatasetMeta:
    """Sidecar describing a stored dataset."""

    id: str
    n: int
    d: int
    metric: str
    fingerprint: str


def _sidecar_paths(path: PathLike) -> tuple:
    base = Path(path)
    if base.suffix in (".npy", ".json"):
        base = base.with_suffix("")
    return base.with_suffix(".npy"), base.with_suffix(".json")


def save_dataset(ds: Dataset, path: PathLike) -> DatasetMeta:
    """Write ``<path>.npy`` and the ``<path>.json`` sidecar."""
    npy, sidecar = _sidecar_paths(path)
    np.save(npy, ds.points)
    meta = DatasetMeta(id=ds.id, n=ds.n, d=ds.d, metric=ds.metric.value,
                       fingerprint=ds.fingerprint())
    sidecar.write_text(json.dumps(asdict(meta), indent=2, sort_keys=True))
    return meta


def read_meta(path: PathLike) -> DatasetMeta:
    _, sidecar = _sidecar_paths(path)
    return DatasetMeta(**json.loads(sidecar.read_text()))


def load_dataset(path: PathLike) -> Dataset:
    """Load a dataset stored by ``save_dataset`` and check it against its sidecar.

    Raises:
        GraphDatasetMismatch: Points disagree with the sidecar.
    """
    npy, _ = _sidecar_paths(path)
    meta = read_meta(path)
    ds = Dataset(points=np.load(npy), metric=Metric(meta.metric), id=meta.id)
    if ds.n != meta.n or ds.d != meta.d or ds.fingerprint() != meta.fingerprint:
        raise GraphDatasetMismatch(f"{npy} does not match its sidecar")
    return ds


def save_queries(qs: QuerySet, path: PathLike) -> None:
    """Store a query set as ``.npz``."""
    radius = np.nan if qs.planted_radius is None else qs.planted_radius
    planted = np.array([], dtype=np.int64) if qs.planted_index is None else qs.planted_index
    with open(path, "wb") as fh:
        np.savez(fh, queries=qs.queries, ground_truth=qs.ground_truth,
                 planted_radius=np.float64(radius), planted_index=planted)


def load_queries(path: PathLike) -> QuerySet:
    with np.load(path) as archive:
        radius = float(archive["planted_radius"])
        planted = archive["planted_index"]
        return QuerySet(
            queries=archive["queries"],
            ground_truth=archive["ground_truth"],
            planted_radius=None if np.isnan(radius) else radius,
            planted_index=planted if planted.size else None,
        )
