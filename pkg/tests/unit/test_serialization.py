"""Unit tests for graph and transform files.

Tests verify:
- LEB128 varint byte layout and truncation handling
- Graph file contents survive a save/load cycle, long edges included
- Header validation: magic, version, config hash, truncation, trailing bytes
- Dataset binding on load
- Transform archives
"""

import numpy as np
import pytest

from navgraph import config
from navgraph.core.errors import GraphDatasetMismatch, MalformedHeader, TruncatedFile
from navgraph.core.long_edges import LongEdgeConfig, LongEdgeScheme, attach, sample_long_edges
from navgraph.core.rerank import TransformKind, TransformSpec, fit_transform
from navgraph.core.serialization import (
    decode_varints,
    encode_varints,
    graph_from_bytes,
    graph_to_bytes,
    load_graph,
    load_transform,
    save_graph,
    save_transform,
)


class TestVarints:
    """Test the varint codec."""

    def test_known_bytes(self):
        """Seven payload bits per byte, high bit set on all but the last byte."""
        assert encode_varints(np.array([0, 1, 127, 128, 300])) == bytes(
            [0x00, 0x01, 0x7F, 0x80, 0x01, 0xAC, 0x02])

    def test_decode_reports_consumed(self):
        buf = np.frombuffer(bytes([0xAC, 0x02, 0x05, 0xFF]), dtype=np.uint8)
        values, used = decode_varints(buf, 2)
        assert values.tolist() == [300, 5]
        assert used == 3

    def test_large_values(self):
        values = np.array([2 ** 31 - 1, 2 ** 40, 0])
        raw = np.frombuffer(encode_varints(values), dtype=np.uint8)
        decoded, used = decode_varints(raw, 3)
        assert decoded.tolist() == values.tolist()
        assert used == raw.size

    def test_truncated(self):
        with pytest.raises(TruncatedFile):
            decode_varints(np.array([0x80, 0x80], dtype=np.uint8), 1)

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            encode_varints(np.array([3, -1]))

    def test_empty(self):
        assert encode_varints(np.array([], dtype=np.int64)) == b""
        values, used = decode_varints(np.array([], dtype=np.uint8), 0)
        assert values.size == 0 and used == 0


class TestGraphFiles:
    """Test graph file images."""

    @pytest.fixture
    def graph_with_long_edges(self, small_uniform, small_dense_graph):
        edges = sample_long_edges(small_uniform, LongEdgeConfig(
            scheme=LongEdgeScheme.KLEINBERG_RANK, edges_per_node=5, seed=1))
        return attach(small_dense_graph, edges)

    def test_contents_survive(self, graph_with_long_edges):
        """Adjacency, long edges and metadata come back identical."""
        g = graph_with_long_edges
        back = graph_from_bytes(graph_to_bytes(g))
        assert back.to_bytes_key() == g.to_bytes_key()
        assert back.config == g.config
        assert back.dataset_id == g.dataset_id
        assert back.dataset_fingerprint == g.dataset_fingerprint
        assert back.long_scheme == "kl-rank"

    def test_prefix(self, small_dense_graph):
        raw = graph_to_bytes(small_dense_graph)
        assert raw[:4] == config.GRAPH_FILE_MAGIC

    def test_save_and_load_with_dataset(self, tmp_path, small_uniform, small_dense_graph):
        path = tmp_path / "g.graph"
        save_graph(small_dense_graph, path)
        back = load_graph(path, small_uniform)
        assert back.to_bytes_key() == small_dense_graph.to_bytes_key()

    def test_load_with_wrong_dataset(self, tmp_path, small_dense_graph, trap_circle):
        path = tmp_path / "g.graph"
        save_graph(small_dense_graph, path)
        with pytest.raises(GraphDatasetMismatch):
            load_graph(path, trap_circle[0])

    def test_bad_magic(self, small_dense_graph):
        raw = b"XXXX" + graph_to_bytes(small_dense_graph)[4:]
        with pytest.raises(MalformedHeader):
            graph_from_bytes(raw)

    def test_bad_version(self, small_dense_graph):
        raw = bytearray(graph_to_bytes(small_dense_graph))
        raw[4:6] = (99).to_bytes(2, "little")
        with pytest.raises(MalformedHeader):
            graph_from_bytes(bytes(raw))

    def test_short_prefix(self):
        with pytest.raises(TruncatedFile):
            graph_from_bytes(b"NV")

    def test_truncated_body(self, small_dense_graph):
        raw = graph_to_bytes(small_dense_graph)
        with pytest.raises(TruncatedFile):
            graph_from_bytes(raw[:-2])

    def test_truncated_header(self, small_dense_graph):
        raw = graph_to_bytes(small_dense_graph)
        with pytest.raises(TruncatedFile):
            graph_from_bytes(raw[:20])

    def test_trailing_bytes(self, small_dense_graph):
        raw = graph_to_bytes(small_dense_graph) + b"\x00"
        with pytest.raises(MalformedHeader):
            graph_from_bytes(raw)

    def test_config_hash_mismatch(self, small_dense_graph):
        """Edited parameters no longer match the stored hash."""
        raw = graph_to_bytes(small_dense_graph)
        assert b'"M": 3.0' in raw
        with pytest.raises(GraphDatasetMismatch):
            graph_from_bytes(raw.replace(b'"M": 3.0', b'"M": 4.0'))

    def test_unreadable_header(self, small_dense_graph):
        raw = bytearray(graph_to_bytes(small_dense_graph))
        raw[10] = ord("#")
        with pytest.raises(MalformedHeader):
            graph_from_bytes(bytes(raw))


class TestTransformFiles:
    """Test transform archives."""

    @pytest.mark.parametrize("kind,dim", [
        (TransformKind.RANDOM_PROJECTION, 2),
        (TransformKind.PCA, 2),
        (TransformKind.IDENTITY, 3),
    ])
    def test_saved_transform_maps_identically(self, tmp_path, small_uniform, kind, dim):
        _, transform = fit_transform(small_uniform, TransformSpec(kind, dim, seed=4))
        path = tmp_path / "t.npz"
        save_transform(transform, path)
        back = load_transform(path)
        assert back.spec == transform.spec
        assert back.source_dim == transform.source_dim
        np.testing.assert_array_equal(back.apply(small_uniform.points[:5]),
                                      transform.apply(small_uniform.points[:5]))
