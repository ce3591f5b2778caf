"""Binary file formats for embedding maps and text embeddings.

All multi-byte fields are little-endian. Floats are IEEE-754 binary32
unless a format states otherwise. Readers are strict: wrong magic, wrong
version, truncation, and trailing bytes are all rejected with the byte
offset of the problem.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .embedding import PixelEmbeddingMap, TextEmbeddingSet

FORMAT_VERSION = 1

MAGIC_EMBEDDING_MAP = b"VLPR"
MAGIC_TEXT_EMBEDDINGS = b"VLTX"
MAGIC_VOCABULARY = b"VLVB"
MAGIC_INDEX = b"VLIX"


class FormatError(ValueError):
    """Malformed binary input; `offset` is the byte position of the fault."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class ByteReader:
    """Sequential reader over a bytes buffer with offset-aware errors."""

    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, n: int, what: str) -> bytes:
        if self.offset + n > len(self.data):
            raise FormatError(
                f"truncated input: needed {n} bytes for {what}, "
                f"only {len(self.data) - self.offset} left",
                self.offset,
            )
        out = self.data[self.offset : self.offset + n]
        self.offset += n
        return out

    def expect_magic(self, magic: bytes) -> None:
        got = self.take(len(magic), "magic bytes")
        if got != magic:
            raise FormatError(f"bad magic {got!r}, expected {magic!r}", 0)

    def expect_version(self, version: int = FORMAT_VERSION) -> None:
        at = self.offset
        got = self.u32("format version")
        if got != version:
            raise FormatError(f"unsupported format version {got}, expected {version}", at)

    def u8(self, what: str) -> int:
        return self.take(1, what)[0]

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def u64(self, what: str) -> int:
        return struct.unpack("<Q", self.take(8, what))[0]

    def f64(self, what: str) -> float:
        return struct.unpack("<d", self.take(8, what))[0]

    def f32_array(self, count: int, what: str) -> np.ndarray:
        raw = self.take(4 * count, what)
        return np.frombuffer(raw, dtype="<f4").copy()

    def f64_array(self, count: int, what: str) -> np.ndarray:
        raw = self.take(8 * count, what)
        return np.frombuffer(raw, dtype="<f8").copy()

    def utf8(self, what: str) -> str:
        at = self.offset
        n = self.u32(f"{what} length")
        raw = self.take(n, what)
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as e:
            raise FormatError(f"invalid UTF-8 in {what}: {e}", at + 4) from None

    def expect_end(self) -> None:
        if self.offset != len(self.data):
            raise FormatError(
                f"{len(self.data) - self.offset} trailing bytes after payload",
                self.offset,
            )


def pack_u32(value: int) -> bytes:
    return struct.pack("<I", value)


def pack_u64(value: int) -> bytes:
    return struct.pack("<Q", value)


def pack_f64(value: float) -> bytes:
    return struct.pack("<d", value)


def pack_utf8(s: str) -> bytes:
    raw = s.encode("utf-8")
    return pack_u32(len(raw)) + raw


def embedding_map_to_bytes(emb: PixelEmbeddingMap) -> bytes:
    parts = [
        MAGIC_EMBEDDING_MAP,
        pack_u32(FORMAT_VERSION),
        pack_u32(emb.height),
        pack_u32(emb.width),
        pack_u32(emb.dim),
        np.ascontiguousarray(emb.data, dtype="<f4").tobytes(),
    ]
    return b"".join(parts)


def embedding_map_from_bytes(data: bytes, source_image_id: str = "") -> PixelEmbeddingMap:
    r = ByteReader(data)
    r.expect_magic(MAGIC_EMBEDDING_MAP)
    r.expect_version()
    h = r.u32("height")
    w = r.u32("width")
    d = r.u32("dim")
    if h < 1 or w < 1 or d < 1:
        raise FormatError(f"invalid dimensions {h}x{w}x{d}", 8)
    values = r.f32_array(h * w * d, "embedding values")
    r.expect_end()
    return PixelEmbeddingMap(
        height=h,
        width=w,
        dim=d,
        data=values.reshape(h, w, d),
        source_image_id=source_image_id,
    )


def write_embedding_map(emb: PixelEmbeddingMap, path: str | Path) -> None:
    Path(path).write_bytes(embedding_map_to_bytes(emb))


def read_embedding_map(path: str | Path, source_image_id: str | None = None) -> PixelEmbeddingMap:
    path = Path(path)
    if source_image_id is None:
        source_image_id = path.stem
    return embedding_map_from_bytes(path.read_bytes(), source_image_id=source_image_id)


def text_embeddings_to_bytes(texts: TextEmbeddingSet) -> bytes:
    parts = [
        MAGIC_TEXT_EMBEDDINGS,
        pack_u32(FORMAT_VERSION),
        pack_u32(texts.n),
        pack_u32(texts.dim),
    ]
    for label, vec in zip(texts.labels, texts.vectors):
        parts.append(pack_utf8(label))
        parts.append(np.ascontiguousarray(vec, dtype="<f4").tobytes())
    return b"".join(parts)


def text_embeddings_from_bytes(data: bytes) -> TextEmbeddingSet:
    r = ByteReader(data)
    r.expect_magic(MAGIC_TEXT_EMBEDDINGS)
    r.expect_version()
    n = r.u32("label count")
    d = r.u32("dim")
    labels = []
    vectors = np.empty((n, d), dtype=np.float32)
    for i in range(n):
        labels.append(r.utf8(f"label {i}"))
        vectors[i] = r.f32_array(d, f"embedding for label {i}")
    r.expect_end()
    return TextEmbeddingSet(labels=tuple(labels), vectors=vectors)


def write_text_embeddings(texts: TextEmbeddingSet, path: str | Path) -> None:
    Path(path).write_bytes(text_embeddings_to_bytes(texts))


def read_text_embeddings(path: str | Path) -> TextEmbeddingSet:
    return text_embeddings_from_bytes(Path(path).read_bytes())
