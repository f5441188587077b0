"""Domain types for embeddings, labels and splits, plus bit-exact file persistence.

Two kinds of payload share one container: dense float32 vectors and packed
binary codes. Packed rows use one bit per code position, most-significant bit
first within each byte, and any trailing pad bits in the last byte of a row
are forced to zero.

The on-disk embedding format (``.gemb``) is a little-endian stream::

    magic    4 bytes  b"GEMB"
    version  u16      1
    dtype    u8       0 = float32, 1 = packed bits
    reserved u8       0
    count    u64      number of rows
    dim      u32      float components per row, or bits per code
    payload  count * dim * 4 bytes          (float32)
             count * ceil(dim / 8) bytes    (packed bits)

Dataset manifests are line-delimited JSON records with a separate JSON array
of label names as the vocabulary.
"""
from __future__ import annotations

import enum
import io
import json
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Iterable, Sequence, TextIO, Union

import numpy as np

from .errors import ConfigError, CorruptionError, FormatError, StorageError, ValidationError

MAGIC = b"GEMB"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHBBQI")  # magic, version, dtype, reserved, count, dim

PathLike = Union[str, Path]


class Dtype(enum.Enum):
    """Payload type of an embedding matrix; values are the wire codes."""

    FLOAT32 = 0
    PACKED_BITS = 1


class Split(enum.Enum):
    TRAIN = "train"
    VAL = "val"
    TEST = "test"


def packed_row_bytes(dim: int) -> int:
    """Bytes per packed-bits row for a code of `dim` bits."""
    return (dim + 7) // 8


def _pad_mask(dim: int) -> int:
    """Byte mask selecting the pad bits of the final byte (0 when dim % 8 == 0)."""
    used = dim % 8
    if used == 0:
        return 0
    return 0xFF >> used


@dataclass(frozen=True)
class EmbeddingMatrix:
    """Immutable row-major matrix of float vectors or packed binary codes.

    `data` is `(count, dim)` float32 for FLOAT32, or `(count, ceil(dim/8))`
    uint8 for PACKED_BITS with MSB-first bit order and zeroed pad bits.
    """

    dtype: Dtype
    dim: int
    data: np.ndarray

    def __post_init__(self) -> None:
        if self.dim <= 0:
            raise ValidationError(f"dim must be positive, got {self.dim}")
        arr = self.data
        if arr.ndim != 2:
            raise ValidationError(f"payload must be 2-D, got shape {arr.shape}")
        if self.dtype is Dtype.FLOAT32:
            if arr.dtype != np.float32:
                raise ValidationError(f"float matrix payload must be float32, got {arr.dtype}")
            if arr.shape[1] != self.dim:
                raise ValidationError(f"payload has {arr.shape[1]} columns, expected dim={self.dim}")
            if arr.size and not np.all(np.isfinite(arr)):
                bad = int(np.flatnonzero(~np.isfinite(arr).all(axis=1))[0])
                raise ValidationError(f"non-finite value in float payload at row {bad}")
        else:
            width = packed_row_bytes(self.dim)
            if arr.dtype != np.uint8:
                raise ValidationError(f"packed matrix payload must be uint8, got {arr.dtype}")
            if arr.shape[1] != width:
                raise ValidationError(
                    f"packed payload has {arr.shape[1]} bytes per row, expected {width} for dim={self.dim}"
                )
            mask = _pad_mask(self.dim)
            if mask and arr.size and np.any(arr[:, -1] & mask):
                bad = int(np.flatnonzero(arr[:, -1] & mask)[0])
                raise ValidationError(f"nonzero pad bits in packed row {bad}")
        if not arr.flags.c_contiguous:
            object.__setattr__(self, "data", np.ascontiguousarray(arr))
        self.data.setflags(write=False)

    @property
    def count(self) -> int:
        return self.data.shape[0]

    @property
    def payload_nbytes(self) -> int:
        return self.data.nbytes

    def row(self, i: int) -> np.ndarray:
        return self.data[i]

    @classmethod
    def from_floats(cls, values: np.ndarray) -> "EmbeddingMatrix":
        values = np.asarray(values, dtype=np.float32)
        if values.ndim != 2:
            raise ValidationError(f"expected a 2-D array, got shape {values.shape}")
        return cls(Dtype.FLOAT32, values.shape[1], values)

    @classmethod
    def from_bits(cls, bits: np.ndarray) -> "EmbeddingMatrix":
        """Pack a `(count, dim)` boolean/0-1 array into a PACKED_BITS matrix."""
        bits = np.asarray(bits)
        if bits.ndim != 2:
            raise ValidationError(f"expected a 2-D bit array, got shape {bits.shape}")
        packed = pack_bits(bits)
        return cls(Dtype.PACKED_BITS, bits.shape[1], packed)


def pack_bits(bits: np.ndarray) -> np.ndarray:
    """Pack rows of 0/1 values into bytes, MSB first, pad bits zero."""
    bits = np.asarray(bits).astype(np.uint8, copy=False)
    return np.packbits(bits, axis=1, bitorder="big")


def unpack_bits(matrix: EmbeddingMatrix) -> np.ndarray:
    """Unpack a PACKED_BITS matrix into a `(count, dim)` uint8 array of 0/1."""
    if matrix.dtype is not Dtype.PACKED_BITS:
        raise ValidationError("unpack_bits requires a packed-bits matrix")
    bits = np.unpackbits(matrix.data, axis=1, bitorder="big")
    return bits[:, : matrix.dim]


# ---------------------------------------------------------------------------
# GEMB persistence


def _open_sink(destination: Union[BinaryIO, PathLike]):
    if isinstance(destination, (str, Path)):
        return open(destination, "wb"), True
    return destination, False


def _open_source(source: Union[BinaryIO, PathLike]):
    if isinstance(source, (str, Path)):
        return open(source, "rb"), True
    return source, False


def write_embeddings(matrix: EmbeddingMatrix, destination: Union[BinaryIO, PathLike]) -> int:
    """Serialize a matrix to a GEMB stream; returns total bytes written."""
    sink, owned = _open_sink(destination)
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, matrix.dtype.value, 0, matrix.count, matrix.dim)
    written = 0
    try:
        try:
            sink.write(header)
            written += len(header)
            payload = matrix.data.tobytes()
            sink.write(payload)
            written += len(payload)
        except OSError as exc:
            raise StorageError(f"write failed after {written} bytes: {exc}") from exc
    finally:
        if owned:
            sink.close()
    return written


def read_embeddings(source: Union[BinaryIO, PathLike]) -> EmbeddingMatrix:
    """Parse a GEMB stream; the exact inverse of :func:`write_embeddings`."""
    stream, owned = _open_source(source)
    try:
        header = stream.read(_HEADER.size)
        if len(header) < _HEADER.size:
            raise FormatError(f"stream too short for header ({len(header)} bytes)")
        magic, version, dtype_code, reserved, count, dim = _HEADER.unpack(header)
        if magic != MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
        if version != FORMAT_VERSION:
            raise FormatError(f"unsupported version {version}")
        try:
            dtype = Dtype(dtype_code)
        except ValueError:
            raise FormatError(f"unknown dtype code {dtype_code}") from None
        if reserved != 0:
            raise FormatError(f"reserved byte must be 0, got {reserved}")
        if dim == 0:
            raise FormatError("dim must be positive")
        if dtype is Dtype.FLOAT32:
            row_bytes = dim * 4
        else:
            row_bytes = packed_row_bytes(dim)
        expected = count * row_bytes
        payload = stream.read(expected)
        if len(payload) != expected:
            raise CorruptionError(
                f"payload truncated: expected {expected} bytes for count={count}, got {len(payload)}"
            )
        if stream.read(1):
            raise CorruptionError("trailing bytes after payload")
    finally:
        if owned:
            stream.close()
    if dtype is Dtype.FLOAT32:
        data = np.frombuffer(payload, dtype="<f4").reshape(count, dim).astype(np.float32, copy=True)
    else:
        data = np.frombuffer(payload, dtype=np.uint8).reshape(count, row_bytes).copy()
    return EmbeddingMatrix(dtype, dim, data)


# ---------------------------------------------------------------------------
# Manifest


@dataclass(frozen=True)
class ManifestRecord:
    id: str
    row: int
    split: Split
    labels: frozenset[int]


@dataclass(frozen=True)
class DatasetManifest:
    """Per-record ids, splits and label sets plus the label vocabulary."""

    records: tuple[ManifestRecord, ...]
    vocabulary: tuple[str, ...]
    _by_row: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self) -> None:
        ids: set[str] = set()
        rows: set[int] = set()
        vocab_size = len(self.vocabulary)
        by_row = {}
        for rec in self.records:
            if rec.id in ids:
                raise ValidationError(f"duplicate record id {rec.id!r}")
            ids.add(rec.id)
            if rec.row < 0:
                raise ValidationError(f"record {rec.id!r} has negative row {rec.row}")
            if rec.row in rows:
                raise ValidationError(f"duplicate row index {rec.row} (record {rec.id!r})")
            rows.add(rec.row)
            if not rec.labels:
                raise ValidationError(f"record {rec.id!r} has an empty label set")
            for label in rec.labels:
                if not 0 <= label < vocab_size:
                    raise ValidationError(
                        f"record {rec.id!r} has label index {label} outside vocabulary of {vocab_size}"
                    )
            by_row[rec.row] = rec
        object.__setattr__(self, "_by_row", by_row)

    def __len__(self) -> int:
        return len(self.records)

    def by_split(self, split: Split) -> list[ManifestRecord]:
        return [r for r in self.records if r.split is split]

    def record_at_row(self, row: int) -> ManifestRecord:
        return self._by_row[row]

    def validate_against(self, matrix: EmbeddingMatrix) -> None:
        """Check every row index addresses a matrix row."""
        for rec in self.records:
            if rec.row >= matrix.count:
                raise ValidationError(
                    f"record {rec.id!r} references row {rec.row}, matrix has {matrix.count} rows"
                )


def _read_text(source: Union[TextIO, PathLike]) -> str:
    if isinstance(source, (str, Path)):
        return Path(source).read_text()
    return source.read()


def load_manifest(
    records_source: Union[TextIO, PathLike],
    vocabulary_source: Union[TextIO, PathLike, Sequence[str]],
) -> DatasetManifest:
    """Parse a JSONL record stream plus a JSON vocabulary into a manifest.

    Each record line is an object with fields id / row / split / labels.
    All manifest invariants are validated; offending records are named.
    """
    if isinstance(vocabulary_source, (list, tuple)):
        vocab = list(vocabulary_source)
    else:
        vocab = json.loads(_read_text(vocabulary_source))
    if not isinstance(vocab, list) or not all(isinstance(v, str) for v in vocab):
        raise ValidationError("vocabulary must be a JSON array of strings")

    records = []
    for lineno, line in enumerate(_read_text(records_source).splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"manifest line {lineno}: invalid JSON ({exc})") from None
        missing = {"id", "row", "split", "labels"} - obj.keys()
        if missing:
            raise ValidationError(f"manifest line {lineno}: missing fields {sorted(missing)}")
        try:
            split = Split(obj["split"])
        except ValueError:
            raise ValidationError(
                f"manifest line {lineno}: unknown split {obj['split']!r} (expected train/val/test)"
            ) from None
        labels = obj["labels"]
        if not isinstance(labels, list) or not all(isinstance(x, int) for x in labels):
            raise ValidationError(f"manifest line {lineno}: labels must be a list of integers")
        records.append(
            ManifestRecord(id=str(obj["id"]), row=int(obj["row"]), split=split, labels=frozenset(labels))
        )
    return DatasetManifest(records=tuple(records), vocabulary=tuple(vocab))


def save_manifest(
    manifest: DatasetManifest,
    records_dest: Union[TextIO, PathLike],
    vocabulary_dest: Union[TextIO, PathLike],
) -> None:
    """Write a manifest back out as canonical JSONL + JSON vocabulary."""
    lines = []
    for rec in manifest.records:
        lines.append(
            json.dumps(
                {"id": rec.id, "row": rec.row, "split": rec.split.value, "labels": sorted(rec.labels)},
                separators=(",", ":"),
            )
        )
    text = "\n".join(lines) + ("\n" if lines else "")
    vocab_text = json.dumps(list(manifest.vocabulary), indent=0) + "\n"
    if isinstance(records_dest, (str, Path)):
        Path(records_dest).write_text(text)
    else:
        records_dest.write(text)
    if isinstance(vocabulary_dest, (str, Path)):
        Path(vocabulary_dest).write_text(vocab_text)
    else:
        vocabulary_dest.write(vocab_text)


# ---------------------------------------------------------------------------
# Query / database split selection


@dataclass(frozen=True)
class QueryDatabasePair:
    """Disjoint row sets: queries from one split, database from another."""

    query_rows: np.ndarray
    database_rows: np.ndarray

    def __post_init__(self) -> None:
        q = np.asarray(self.query_rows, dtype=np.int64)
        d = np.asarray(self.database_rows, dtype=np.int64)
        if np.intersect1d(q, d).size:
            raise ValidationError("query rows and database rows overlap")
        object.__setattr__(self, "query_rows", q)
        object.__setattr__(self, "database_rows", d)
        self.query_rows.setflags(write=False)
        self.database_rows.setflags(write=False)


def select_pair(manifest: DatasetManifest, query_split: Split, db_split: Split) -> QueryDatabasePair:
    """Row indices of the two splits, each sorted ascending by row.

    The two splits must differ; sharing a split would place the same
    geographic scenes on both sides of the retrieval task.
    """
    if query_split is db_split:
        raise ConfigError(
            f"query and database splits are both {query_split.value!r}; they must differ"
        )
    if Split.TRAIN in (query_split, db_split):
        warnings.warn(
            "using the train split for retrieval; prefer val queries against the test"
            " database and keep official val/test out of any model training",
            stacklevel=2,
        )
    q_rows = sorted(r.row for r in manifest.by_split(query_split))
    d_rows = sorted(r.row for r in manifest.by_split(db_split))
    if not q_rows:
        raise ValidationError(f"split {query_split.value!r} has no records")
    if not d_rows:
        raise ValidationError(f"split {db_split.value!r} has no records")
    return QueryDatabasePair(
        query_rows=np.array(q_rows, dtype=np.int64),
        database_rows=np.array(d_rows, dtype=np.int64),
    )
