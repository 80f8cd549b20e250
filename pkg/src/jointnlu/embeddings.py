"""Frozen word vectors: GloVe/fastText text files and precomputed contextual stores.

Both sources expose ``dim`` and ``vectors_for(utterance)`` so the rest of the
package never needs to know which one it was handed.
"""
from __future__ import annotations

import hashlib
import logging
import struct
from dataclasses import dataclass, field
from typing import BinaryIO, Iterable, Sequence, TextIO

import numpy as np

from .corpus import Corpus, Utterance

log = logging.getLogger(__name__)

CTXV_MAGIC = b"CTXV"
CTXV_VERSION = 1
_CTXV_HEADER = struct.Struct("<4sBIQ")
_CTXV_KEY = struct.Struct("<IH")


class EmbeddingFormatError(ValueError):
    pass


class MissingContextualVector(KeyError):
    pass


def _is_header(fields: list[str]) -> bool:
    return len(fields) == 2 and all(f.isdigit() for f in fields)


class EmbeddingTable:
    """Static token -> vector map.  The backing matrix is read-only."""

    def __init__(self, tokens: Sequence[str], matrix: np.ndarray, source_name: str = "", duplicates: int = 0):
        matrix = np.array(matrix, dtype=np.float32)
        if matrix.ndim != 2 or matrix.shape[1] < 1:
            raise EmbeddingFormatError(f"embedding matrix must be [n, dim>=1], got {matrix.shape}")
        if len(tokens) != matrix.shape[0]:
            raise EmbeddingFormatError("token count does not match matrix rows")
        matrix.flags.writeable = False
        self.matrix = matrix
        self.index = {tok: i for i, tok in enumerate(tokens)}
        self.source_name = source_name
        self.duplicates = duplicates
        self._zero = np.zeros(matrix.shape[1], dtype=np.float32)
        self._zero.flags.writeable = False

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def __len__(self) -> int:
        return len(self.index)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def lookup(self, token: str) -> tuple[np.ndarray, bool]:
        """Exact match, then lowercase match, else the zero vector with ``oov=True``."""
        i = self.index.get(token)
        if i is None:
            i = self.index.get(token.lower())
        if i is None:
            return self._zero, True
        return self.matrix[i], False

    def vectors_for(self, utterance: Utterance | Sequence[str]) -> np.ndarray:
        tokens = utterance.tokens if isinstance(utterance, Utterance) else utterance
        return np.stack([self.lookup(t)[0] for t in tokens])

    def checksum(self) -> str:
        h = hashlib.sha256()
        for tok in self.index:
            h.update(tok.encode("utf-8"))
            h.update(b"\0")
        h.update(np.ascontiguousarray(self.matrix).tobytes())
        return h.hexdigest()


def load_embedding_text(reader: TextIO | Iterable[str], expected_dim: int | None = None,
                        source_name: str = "") -> EmbeddingTable:
    """Parse ``<token> <v1> ... <vD>`` lines.

    A leading ``<count> <dim>`` line (fastText ``.vec`` header) is skipped.
    Later duplicates of a token overwrite earlier ones.
    """
    rows: dict[str, np.ndarray] = {}
    dim = expected_dim
    duplicates = 0
    first = True
    for lineno, raw in enumerate(reader, 1):
        line = raw.rstrip("\r\n").rstrip(" ")
        if not line:
            continue
        fields = line.split(" ")
        if first:
            first = False
            if _is_header(fields):
                continue
        token, values = fields[0], fields[1:]
        if dim is None:
            if not values:
                raise EmbeddingFormatError(f"line {lineno}: no vector components")
            dim = len(values)
        if len(values) != dim:
            raise EmbeddingFormatError(f"line {lineno}: expected {dim} components, found {len(values)}")
        try:
            vec = np.array(values, dtype=np.float32)
        except ValueError:
            raise EmbeddingFormatError(f"line {lineno}: non-numeric component") from None
        if token in rows:
            duplicates += 1
        rows[token] = vec
    if duplicates:
        log.warning("%s: %d duplicate tokens, last occurrence kept", source_name or "embeddings", duplicates)
    if dim is None:
        raise EmbeddingFormatError("no embedding vectors found")
    matrix = np.stack(list(rows.values())) if rows else np.zeros((0, dim), dtype=np.float32)
    return EmbeddingTable(list(rows), matrix, source_name, duplicates)


def read_embeddings(path, expected_dim: int | None = None) -> EmbeddingTable:
    with open(path, encoding="utf-8") as fh:
        return load_embedding_text(fh, expected_dim, source_name=str(path))


def oov_report(table: EmbeddingTable, corpus: Corpus) -> dict:
    total = 0
    missing = 0
    oov_tokens: dict[str, None] = {}
    for u in corpus:
        for tok in u.tokens:
            total += 1
            if table.lookup(tok)[1]:
                missing += 1
                oov_tokens[tok] = None
    return {"oov_rate": missing / total if total else 0.0, "oov_tokens": list(oov_tokens)}


# ---------------------------------------------------------------- contextual


@dataclass
class ContextualStore:
    """Precomputed per-occurrence vectors keyed by ``(utterance_id, position)``."""

    dim: int
    entries: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.dim < 1:
            raise EmbeddingFormatError("contextual dim must be >= 1")
        for key, vec in self.entries.items():
            if np.shape(vec) != (self.dim,):
                raise EmbeddingFormatError(f"vector for {key} has shape {np.shape(vec)}, expected ({self.dim},)")

    def __len__(self) -> int:
        return len(self.entries)

    def get(self, utterance_id: int, position: int) -> np.ndarray:
        try:
            return self.entries[(utterance_id, position)]
        except KeyError:
            raise MissingContextualVector(
                f"missing contextual vector for utterance {utterance_id}, position {position}"
            ) from None

    def vectors_for(self, utterance: Utterance) -> np.ndarray:
        if not isinstance(utterance, Utterance):
            raise TypeError("contextual vectors are keyed by utterance id; pass an Utterance")
        return np.stack([self.get(utterance.id, i) for i in range(len(utterance))])

    def checksum(self) -> str:
        return hashlib.sha256(dump_contextual_bytes(self)).hexdigest()


def load_contextual(reader: BinaryIO) -> ContextualStore:
    blob = reader.read()
    if len(blob) < _CTXV_HEADER.size:
        raise EmbeddingFormatError("truncated contextual store header")
    magic, version, dim, count = _CTXV_HEADER.unpack_from(blob)
    if magic != CTXV_MAGIC:
        raise EmbeddingFormatError(f"bad magic {magic!r}")
    if version != CTXV_VERSION:
        raise EmbeddingFormatError(f"unsupported contextual store version {version}")
    if dim < 1:
        raise EmbeddingFormatError("contextual dim must be >= 1")
    rec = np.dtype([("uid", "<u4"), ("pos", "<u2"), ("vec", "<f4", (dim,))])
    body = blob[_CTXV_HEADER.size:]
    if len(body) < count * rec.itemsize:
        raise EmbeddingFormatError(
            f"truncated contextual store: {count} records of {rec.itemsize} bytes declared, {len(body)} bytes present"
        )
    if len(body) > count * rec.itemsize:
        raise EmbeddingFormatError("trailing bytes after last record (vector length disagrees with header dim?)")
    records = np.frombuffer(body, dtype=rec, count=count)
    entries = {}
    for uid, pos, vec in zip(records["uid"].tolist(), records["pos"].tolist(), records["vec"]):
        if (uid, pos) in entries:
            raise EmbeddingFormatError(f"duplicate contextual key ({uid}, {pos})")
        v = vec.astype(np.float32)
        v.flags.writeable = False
        entries[(uid, pos)] = v
    return ContextualStore(dim, entries)


def dump_contextual_bytes(store: ContextualStore) -> bytes:
    parts = [_CTXV_HEADER.pack(CTXV_MAGIC, CTXV_VERSION, store.dim, len(store.entries))]
    for (uid, pos), vec in store.entries.items():
        parts.append(_CTXV_KEY.pack(uid, pos))
        parts.append(np.asarray(vec, dtype="<f4").tobytes())
    return b"".join(parts)


def save_contextual(store: ContextualStore, writer: BinaryIO) -> None:
    writer.write(dump_contextual_bytes(store))


def read_contextual(path) -> ContextualStore:
    with open(path, "rb") as fh:
        return load_contextual(fh)
