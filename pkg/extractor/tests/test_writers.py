import struct

import numpy as np
import pytest

from vlpr_extractor.writers import embedding_map_bytes, text_embeddings_bytes


class TestEmbeddingMapBytes:
    def test_exact_layout(self):
        data = np.arange(4, dtype=np.float32).reshape(1, 2, 2)
        raw = embedding_map_bytes(data)
        assert raw == (
            b"VLPR"
            + struct.pack("<IIII", 1, 1, 2, 2)
            + struct.pack("<4f", 0.0, 1.0, 2.0, 3.0)
        )

    def test_rejects_bad_shapes_and_values(self):
        with pytest.raises(ValueError, match="HxWxD"):
            embedding_map_bytes(np.zeros((2, 2), dtype=np.float32))
        bad = np.zeros((1, 1, 2), dtype=np.float32)
        bad[0, 0, 0] = np.inf
        with pytest.raises(ValueError, match="finite"):
            embedding_map_bytes(bad)


class TestTextEmbeddingsBytes:
    def test_exact_layout(self):
        raw = text_embeddings_bytes(
            ["ab", "c"], np.array([[1.0, 2.0], [3.0, 4.0]], dtype=np.float32)
        )
        assert raw == (
            b"VLTX"
            + struct.pack("<III", 1, 2, 2)
            + struct.pack("<I", 2) + b"ab" + struct.pack("<2f", 1.0, 2.0)
            + struct.pack("<I", 1) + b"c" + struct.pack("<2f", 3.0, 4.0)
        )

    def test_duplicate_label_rejected(self):
        with pytest.raises(ValueError, match="duplicate"):
            text_embeddings_bytes(["a", "a"], np.eye(2, dtype=np.float32))

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError, match="labels"):
            text_embeddings_bytes(["a", "b", "c"], np.eye(2, dtype=np.float32))

    def test_too_few_labels_rejected(self):
        with pytest.raises(ValueError, match="at least 2"):
            text_embeddings_bytes(["only"], np.ones((1, 4), dtype=np.float32))
