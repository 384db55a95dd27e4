"""Graph files and transform files.

Graph file layout (little-endian)::

    magic    4 bytes   b"NVGR"
    version  uint16
    hlen     uint32    length of the JSON header
    header   hlen bytes, UTF-8 JSON: n, kind, params, dataset_id,
             fingerprint, config_hash, long_scheme, local_edges, long_edges
    body     LEB128 varints: n local degrees, the delta-coded local lists,
             n long degrees, the delta-coded long lists

Lists are sorted by node index, so deltas are nonnegative; the first entry
of each list is stored as-is.
"""

from __future__ import annotations

import json
import logging
import struct
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

from navgraph import config
from navgraph.core.data import Dataset
from navgraph.core.errors import GraphDatasetMismatch, MalformedHeader, TruncatedFile
from navgraph.core.graphs import INDEX_DTYPE, GraphConfig, SearchGraph
from navgraph.core.rerank import Transform, TransformKind, TransformSpec

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

_PREFIX = struct.Struct("<4sHI")
_SEVEN = np.uint64(7)
_LOW_BITS = np.uint64(0x7F)


def encode_varints(values: np.ndarray) -> bytes:
    """LEB128 encoding of nonnegative integers."""
    v = np.asarray(values, dtype=np.int64)
    if v.size == 0:
        return b""
    if v.min() < 0:
        raise ValueError("Varints encode nonnegative integers only")
    v = v.astype(np.uint64)
    nbytes = np.ones(v.size, dtype=np.int64)
    rest = v >> _SEVEN
    while np.any(rest):
        nbytes += rest > 0
        rest >>= _SEVEN
    offsets = np.concatenate([[0], np.cumsum(nbytes)[:-1]])
    out = np.empty(int(nbytes.sum()), dtype=np.uint8)
    rest = v.copy()
    for j in range(int(nbytes.max())):
        active = nbytes > j
        byte = (rest[active] & _LOW_BITS).astype(np.uint8)
        more = (nbytes[active] > j + 1).astype(np.uint8) << 7
        out[offsets[active] + j] = byte | more
        rest[active] >>= _SEVEN
    return out.tobytes()


def decode_varints(buf: np.ndarray, count: int) -> Tuple[np.ndarray, int]:
    """Decode ``count`` varints from the start of ``buf``.

    Returns:
        Tuple of (values as int64, bytes consumed).

    Raises:
        TruncatedFile: ``buf`` ends before ``count`` values are complete.
    """
    if count == 0:
        return np.empty(0, dtype=np.int64), 0
    ends = np.flatnonzero(buf < 0x80)
    if ends.size < count:
        raise TruncatedFile(f"Expected {count} varints, found {ends.size}")
    ends = ends[:count]
    stop = int(ends[-1]) + 1
    starts = np.concatenate([[0], ends[:-1] + 1])
    lengths = ends - starts + 1
    owner = np.repeat(np.arange(count), lengths)
    shift = ((np.arange(stop) - starts[owner]) * 7).astype(np.uint64)
    parts = (buf[:stop] & 0x7F).astype(np.uint64) << shift
    return np.add.reduceat(parts, starts).astype(np.int64), stop


def _encode_lists(indptr: np.ndarray, indices: np.ndarray) -> bytes:
    degrees = np.diff(indptr)
    deltas = indices.astype(np.int64).copy()
    if deltas.size:
        deltas[1:] -= indices[:-1].astype(np.int64)
        firsts = indptr[:-1][degrees > 0]
        deltas[firsts] = indices[firsts]
        if deltas.min() < 0:
            raise ValueError("Neighbor lists must be sorted by index")
    return encode_varints(degrees) + encode_varints(deltas)


def _decode_lists(buf: np.ndarray, n: int) -> Tuple[np.ndarray, np.ndarray, int]:
    degrees, used = decode_varints(buf, n)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(degrees, out=indptr[1:])
    deltas, more = decode_varints(buf[used:], int(indptr[-1]))
    running = np.cumsum(deltas)
    prefix = np.concatenate([[0], running])
    indices = running - np.repeat(prefix[indptr[:-1]], degrees)
    return indptr, indices.astype(INDEX_DTYPE), used + more


def graph_to_bytes(g: SearchGraph) -> bytes:
    header = {
        "n": g.n,
        "kind": g.config.kind.value,
        "params": g.config.params(),
        "dataset_id": g.dataset_id,
        "fingerprint": g.dataset_fingerprint,
        "config_hash": g.config.config_hash(),
        "long_scheme": g.long_scheme,
        "local_edges": int(g.indices.size),
        "long_edges": int(g.long_indices.size),
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    return b"".join([
        _PREFIX.pack(config.GRAPH_FILE_MAGIC, config.GRAPH_FILE_VERSION, len(blob)),
        blob,
        _encode_lists(g.indptr, g.indices),
        _encode_lists(g.long_indptr, g.long_indices),
    ])


def graph_from_bytes(raw: bytes) -> SearchGraph:
    """Parse a graph file image.

    Raises:
        MalformedHeader: Wrong magic, unknown version, or an unreadable header.
        TruncatedFile: The body is shorter than the header announces.
        GraphDatasetMismatch: The stored config hash disagrees with the params.
    """
    if len(raw) < _PREFIX.size:
        raise TruncatedFile("Graph file shorter than its prefix")
    magic, version, hlen = _PREFIX.unpack_from(raw)
    if magic != config.GRAPH_FILE_MAGIC:
        raise MalformedHeader(f"Not a graph file (magic {magic!r})")
    if version != config.GRAPH_FILE_VERSION:
        raise MalformedHeader(f"Unsupported graph file version {version}")
    end = _PREFIX.size + hlen
    if len(raw) < end:
        raise TruncatedFile("Graph file ends inside its header")
    try:
        header = json.loads(raw[_PREFIX.size:end].decode("utf-8"))
        cfg = GraphConfig.from_params(header["params"])
        n = int(header["n"])
    except (ValueError, KeyError) as exc:
        raise MalformedHeader(f"Unreadable graph header: {exc}") from exc
    if cfg.config_hash() != header.get("config_hash"):
        raise GraphDatasetMismatch("Graph config hash does not match its parameters")

    body = np.frombuffer(raw, dtype=np.uint8, offset=end)
    indptr, indices, used = _decode_lists(body, n)
    long_indptr, long_indices, more = _decode_lists(body[used:], n)
    if indices.size != header["local_edges"] or long_indices.size != header["long_edges"]:
        raise TruncatedFile("Edge counts differ from the header")
    if used + more != body.size:
        raise MalformedHeader(f"{body.size - used - more} trailing bytes after the graph body")
    return SearchGraph(
        indptr=indptr, indices=indices, config=cfg,
        dataset_id=header["dataset_id"], dataset_fingerprint=header["fingerprint"],
        long_indptr=long_indptr, long_indices=long_indices, long_scheme=header["long_scheme"],
    )


def save_graph(g: SearchGraph, path: PathLike) -> None:
    Path(path).write_bytes(graph_to_bytes(g))
    logger.info("Saved %s graph of %s (%d nodes) to %s", g.config.label, g.dataset_id, g.n, path)


def load_graph(path: PathLike, ds: Optional[Dataset] = None) -> SearchGraph:
    """Read a graph file; with ``ds``, also check the graph belongs to it.

    Raises:
        GraphDatasetMismatch: ``ds`` is not the dataset the graph was built on.
    """
    g = graph_from_bytes(Path(path).read_bytes())
    if ds is not None:
        g.check_dataset(ds)
    return g


def save_transform(transform: Transform, path: PathLike) -> None:
    """Persist kind, dimensions, seed and matrix as an ``.npz`` archive."""
    empty = np.empty((0, 0), dtype=np.float64)
    np.savez(
        path,
        kind=np.array(transform.spec.kind.value),
        target_dim=np.array(transform.spec.target_dim),
        seed=np.array(transform.spec.seed),
        source_dim=np.array(transform.source_dim),
        matrix=empty if transform.matrix is None else transform.matrix,
        mean=np.empty(0) if transform.mean is None else transform.mean,
    )


def load_transform(path: PathLike) -> Transform:
    with np.load(path, allow_pickle=False) as archive:
        spec = TransformSpec(kind=TransformKind(str(archive["kind"])),
                             target_dim=int(archive["target_dim"]), seed=int(archive["seed"]))
        matrix = archive["matrix"]
        mean = archive["mean"]
        return Transform(
            spec=spec,
            source_dim=int(archive["source_dim"]),
            matrix=None if matrix.size == 0 else np.array(matrix),
            mean=None if mean.size == 0 else np.array(mean),
        )
