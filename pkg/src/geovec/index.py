"""Retrieval indexes: exhaustive flat scan and inverted-file (IVF) search.

An IVF index clusters the database (k-means for float vectors, bitwise
k-majority for packed codes), keeps one inverted list of row ids per
centroid, and at query time ranks centroids by the index metric, then scans
only the top `nprobe` lists. Probing all `nlist` lists degenerates to the
flat scan exactly: both paths share the same distance kernels and the same
(distance, row id) total order, so results are bit-identical.

Index files (``.givf``) are self-contained: they embed the indexed vectors,
the inverted lists (delta-encoded sorted row ids), the centroids and an
optional record-id table, so a query needs nothing but the index file.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from io import BytesIO
from pathlib import Path
from typing import BinaryIO, Optional, Sequence, Union

import numpy as np

from . import metrics as _metrics
from ._kernels import hamming_topk, jaccard_topk, packed_to_words, query_to_words
from .errors import ConfigError, CorruptionError, FormatError, ValidationError
from .metrics import Metric
from .vecstore import Dtype, EmbeddingMatrix, packed_row_bytes, read_embeddings, write_embeddings

INDEX_MAGIC = b"GIVF"
INDEX_VERSION = 1
_DEFAULT_SAMPLE_PER_LIST = 256  # training subsample cap, in points per centroid

_METRIC_CODES = {
    Metric.L1: 0,
    Metric.L2: 1,
    Metric.L2_SQUARED: 2,
    Metric.COSINE: 3,
    Metric.HAMMING: 4,
    Metric.JACCARD: 5,
}
_METRIC_FROM_CODE = {v: k for k, v in _METRIC_CODES.items()}


@dataclass(frozen=True)
class IvfParams:
    """Clustering and probing parameters.

    `train_sample_cap` bounds how many vectors the clustering trains on
    (None means 256 per centroid, the usual IVF practice); inverted lists
    always cover every indexed row via a final assignment pass.
    """

    nlist: int = 128
    nprobe: int = 8
    max_iterations: int = 25
    seed: int = 0
    train_sample_cap: Optional[int] = None

    def validate(self) -> None:
        if self.nlist < 1:
            raise ConfigError(f"nlist must be positive, got {self.nlist}")
        if not 1 <= self.nprobe <= self.nlist:
            raise ConfigError(f"nprobe must be in [1, nlist={self.nlist}], got {self.nprobe}")
        if self.max_iterations < 1:
            raise ConfigError(f"max_iterations must be positive, got {self.max_iterations}")
        if self.train_sample_cap is not None and self.train_sample_cap < self.nlist:
            raise ConfigError("train_sample_cap must be at least nlist")

    def resolved_sample_cap(self) -> int:
        if self.train_sample_cap is not None:
            return self.train_sample_cap
        return self.nlist * _DEFAULT_SAMPLE_PER_LIST


@dataclass(frozen=True)
class RetrievalResult:
    """Ranked entries `(row id, distance)`, ascending by (distance, row id)."""

    entries: list[tuple[int, float]]

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def row_ids(self) -> list[int]:
        return [row for row, _ in self.entries]


def _check_rows(rows: Sequence[int], count: int) -> np.ndarray:
    rows = np.asarray(rows, dtype=np.int64)
    if rows.size == 0:
        raise ValidationError("row list is empty")
    if rows.min() < 0 or rows.max() >= count:
        raise ValidationError(f"row index out of range [0, {count})")
    if np.unique(rows).size != rows.size:
        raise ValidationError("row list contains duplicates")
    return np.sort(rows)


def _validate_query(query: np.ndarray, dtype: Dtype, dim: int) -> np.ndarray:
    query = np.asarray(query)
    if query.ndim != 1:
        raise ValidationError("query must be a 1-D vector")
    if dtype is Dtype.FLOAT32:
        if not np.issubdtype(query.dtype, np.floating):
            raise ValidationError(f"index holds float vectors, query dtype is {query.dtype}")
        if query.shape[0] != dim:
            raise ValidationError(f"query dim {query.shape[0]} does not match index dim {dim}")
    else:
        if query.dtype != np.uint8:
            raise ValidationError(f"index holds packed codes, query dtype is {query.dtype}")
        expected = packed_row_bytes(dim)
        if query.shape[0] != expected:
            raise ValidationError(
                f"query is {query.shape[0]} bytes, index codes are {expected} bytes (dim {dim})"
            )
        pad_bits = expected * 8 - dim
        if pad_bits and query[-1] & ((1 << pad_bits) - 1):
            raise ValidationError("query has nonzero pad bits")
    return query


def _select_topk(dists: np.ndarray, rids: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """k smallest under the (distance, row id) total order, sorted ascending."""
    n = dists.shape[0]
    if n <= k:
        order = np.lexsort((rids, dists))
        return rids[order], dists[order]
    part = np.argpartition(dists, k - 1)[:k]
    boundary = dists[part].max()
    lt_mask = dists < boundary
    lt_ids = rids[lt_mask]
    lt_d = dists[lt_mask]
    # ties at the boundary are resolved by smallest row id
    need = k - lt_ids.shape[0]
    eq_ids = rids[dists == boundary]
    if eq_ids.shape[0] > need:
        eq_ids = np.partition(eq_ids, need - 1)[:need]
    ids = np.concatenate([lt_ids, np.sort(eq_ids)])
    ds = np.concatenate([lt_d, np.full(eq_ids.shape[0], boundary)])
    order = np.lexsort((ids, ds))
    return ids[order], ds[order]


def _entries_from_arrays(ids: np.ndarray, dists: np.ndarray) -> list[tuple[int, float]]:
    return [(int(i), float(d)) for i, d in zip(ids, dists)]


def _scan_packed(
    words: np.ndarray,
    starts: np.ndarray,
    ends: np.ndarray,
    qwords: np.ndarray,
    row_ids: np.ndarray,
    k: int,
    metric: Metric,
) -> list[tuple[int, float]]:
    total = int((ends - starts).sum())
    if k >= total:
        # asking for everything: a full lexsort beats the selection kernel
        pos = np.concatenate(
            [np.arange(s, e, dtype=np.int64) for s, e in zip(starts, ends)]
        ) if total else np.empty(0, np.int64)
        dists = _metrics.packed_block_distances(words[pos], qwords, metric)
        rids = row_ids[pos]
        order = np.lexsort((rids, dists))
        return _entries_from_arrays(rids[order], dists[order])
    out_ids = np.empty(k, dtype=np.int64)
    if metric is Metric.HAMMING:
        out_dists = np.empty(k, dtype=np.int64)
        n = hamming_topk(words, starts, ends, qwords, row_ids, k, out_ids, out_dists)
    else:
        out_dists = np.empty(k, dtype=np.float64)
        n = jaccard_topk(words, starts, ends, qwords, row_ids, k, out_ids, out_dists)
    return _entries_from_arrays(out_ids[:n], out_dists[:n])


class FlatIndex:
    """Exhaustive index over an explicit row set."""

    def __init__(
        self,
        metric: Metric,
        dtype: Dtype,
        dim: int,
        row_ids: np.ndarray,
        block: np.ndarray,
        record_ids: Optional[tuple[str, ...]] = None,
    ):
        self.metric = metric
        self.dtype = dtype
        self.dim = dim
        self.row_ids = row_ids
        self.block = block
        self.record_ids = record_ids
        self._words = packed_to_words(block) if dtype is Dtype.PACKED_BITS else None
        self._all_start = np.zeros(1, dtype=np.int64)
        self._all_end = np.array([block.shape[0]], dtype=np.int64)

    def __len__(self) -> int:
        return self.block.shape[0]

    @property
    def indexed_rows(self) -> np.ndarray:
        """Row ids in storage-position order (aligned with `record_ids`)."""
        return self.row_ids

    def search(self, query: np.ndarray, k: int, nprobe: Optional[int] = None) -> RetrievalResult:
        if k < 1:
            raise ValidationError(f"k must be positive, got {k}")
        query = _validate_query(query, self.dtype, self.dim)
        if self.dtype is Dtype.PACKED_BITS:
            qwords = query_to_words(query)
            entries = _scan_packed(
                self._words, self._all_start, self._all_end, qwords, self.row_ids, k, self.metric
            )
            return RetrievalResult(entries)
        dists = _metrics.float_block_distances(self.block, query, self.metric)
        ids, ds = _select_topk(dists, self.row_ids, k)
        return RetrievalResult(_entries_from_arrays(ids, ds))


class IvfIndex:
    """Inverted-file index: centroids plus one row-id list per centroid."""

    def __init__(
        self,
        params: IvfParams,
        metric: Metric,
        centroids: EmbeddingMatrix,
        lists: tuple[np.ndarray, ...],
        block: np.ndarray,
        record_ids: Optional[tuple[str, ...]] = None,
    ):
        self.params = params
        self.metric = metric
        self.centroids = centroids
        self.lists = lists
        self.dtype = centroids.dtype
        self.dim = centroids.dim
        self.record_ids = record_ids
        # positions are the concatenation of the lists; block rows follow them
        sizes = np.array([lst.shape[0] for lst in lists], dtype=np.int64)
        self._offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        self._list_rows = (
            np.concatenate(lists).astype(np.int64) if len(lists) else np.empty(0, np.int64)
        )
        self.database_rows = np.sort(self._list_rows)
        self.block = block
        self._words = packed_to_words(block) if self.dtype is Dtype.PACKED_BITS else None
        self._centroid_words = (
            packed_to_words(centroids.data) if self.dtype is Dtype.PACKED_BITS else None
        )

    def __len__(self) -> int:
        return self.block.shape[0]

    @property
    def nlist(self) -> int:
        return self.params.nlist

    @property
    def indexed_rows(self) -> np.ndarray:
        """Row ids in storage-position order (aligned with `record_ids`)."""
        return self._list_rows

    def list_sizes(self) -> np.ndarray:
        return np.diff(self._offsets)

    def search(self, query: np.ndarray, k: int, nprobe: Optional[int] = None) -> RetrievalResult:
        if k < 1:
            raise ValidationError(f"k must be positive, got {k}")
        probe_n = self.params.nprobe if nprobe is None else nprobe
        if not 1 <= probe_n <= self.params.nlist:
            raise ConfigError(f"nprobe must be in [1, nlist={self.params.nlist}], got {probe_n}")
        query = _validate_query(query, self.dtype, self.dim)

        # rank centroids under the index metric; stable sort breaks ties by id
        centroid_dists = _metrics.block_distances(self.centroids.data, query, self.metric)
        probe = np.argsort(centroid_dists, kind="stable")[:probe_n]
        starts = self._offsets[probe]
        ends = self._offsets[probe + 1]

        if self.dtype is Dtype.PACKED_BITS:
            qwords = query_to_words(query)
            entries = _scan_packed(self._words, starts, ends, qwords, self._list_rows, k, self.metric)
            return RetrievalResult(entries)

        chunks_d = []
        chunks_r = []
        for s, e in zip(starts, ends):
            if e > s:
                chunks_d.append(_metrics.float_block_distances(self.block[s:e], query, self.metric))
                chunks_r.append(self._list_rows[s:e])
        if not chunks_d:
            return RetrievalResult([])
        dists = np.concatenate(chunks_d)
        rids = np.concatenate(chunks_r)
        ids, ds = _select_topk(dists, rids, k)
        return RetrievalResult(_entries_from_arrays(ids, ds))


AnyIndex = Union[FlatIndex, IvfIndex]


def build_flat(
    database: EmbeddingMatrix,
    rows: Sequence[int],
    metric: Metric,
    record_ids: Optional[Sequence[str]] = None,
) -> FlatIndex:
    """Exhaustive index over exactly the given rows."""
    if not metric.compatible_with(database.dtype):
        raise ValidationError(f"metric {metric.value} incompatible with {database.dtype.name}")
    row_ids = _check_rows(rows, database.count)
    block = np.ascontiguousarray(database.data[row_ids])
    recs = tuple(record_ids) if record_ids is not None else None
    if recs is not None and len(recs) != row_ids.shape[0]:
        raise ValidationError("record_ids length does not match rows")
    return FlatIndex(metric, database.dtype, database.dim, row_ids, block, recs)


# ---------------------------------------------------------------------------
# Clustering


def _kmeanspp_init(X: np.ndarray, nlist: int, rng: np.random.Generator) -> np.ndarray:
    """Seeded k-means++ initialization over float64 data."""
    n = X.shape[0]
    centroids = np.empty((nlist, X.shape[1]), dtype=np.float64)
    centroids[0] = X[int(rng.integers(n))]
    d2 = ((X - centroids[0]) ** 2).sum(axis=1)
    for i in range(1, nlist):
        total = float(d2.sum())
        if total <= 0.0:
            idx = int(rng.integers(n))
        else:
            r = rng.random() * total
            idx = min(int(np.searchsorted(np.cumsum(d2), r, side="right")), n - 1)
        centroids[i] = X[idx]
        d2 = np.minimum(d2, ((X - centroids[i]) ** 2).sum(axis=1))
    return centroids


def _sq_dists(X: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Squared L2 from every row of X to every centroid, float64."""
    x2 = (X * X).sum(axis=1)[:, None]
    c2 = (centroids * centroids).sum(axis=1)[None, :]
    d2 = x2 + c2 - 2.0 * (X @ centroids.T)
    np.maximum(d2, 0.0, out=d2)
    return d2


def _repair_empty(
    assign: np.ndarray, point_dist: np.ndarray, nlist: int
) -> tuple[np.ndarray, np.ndarray]:
    """Give each empty cluster the point currently farthest from its centroid."""
    counts = np.bincount(assign, minlength=nlist)
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        point_dist = point_dist.copy()
        for c in empty:
            far = int(point_dist.argmax())
            assign[far] = c
            point_dist[far] = -1.0
        counts = np.bincount(assign, minlength=nlist)
    return assign, counts


def _group_reduce(values: np.ndarray, assign: np.ndarray, nlist: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-cluster sums of `values` rows; every cluster must be non-empty."""
    order = np.argsort(assign, kind="stable")
    boundaries = np.searchsorted(assign[order], np.arange(nlist))
    sums = np.add.reduceat(values[order].astype(np.float64), boundaries, axis=0)
    return sums, order


def train_kmeans(
    database: EmbeddingMatrix, rows: Sequence[int], params: IvfParams
) -> tuple[np.ndarray, np.ndarray]:
    """Lloyd k-means under L2 with seeded k-means++ init.

    Returns float32 centroids `(nlist, dim)` and the final assignment of the
    given rows. Stops after `max_iterations` rounds or when no assignment
    changes; empty clusters steal the point farthest from its centroid.
    """
    if database.dtype is not Dtype.FLOAT32:
        raise ValidationError("train_kmeans requires a float32 matrix")
    params.validate()
    row_ids = _check_rows(rows, database.count)
    if params.nlist > row_ids.shape[0]:
        raise ConfigError(f"nlist={params.nlist} exceeds the {row_ids.shape[0]} training rows")
    X = database.data[row_ids].astype(np.float64)
    rng = np.random.Generator(np.random.PCG64(params.seed))
    centroids = _kmeanspp_init(X, params.nlist, rng)

    assign = None
    for _ in range(params.max_iterations):
        d2 = _sq_dists(X, centroids)
        new_assign = d2.argmin(axis=1).astype(np.int64)
        new_assign, counts = _repair_empty(new_assign, d2[np.arange(X.shape[0]), new_assign], params.nlist)
        if assign is not None and np.array_equal(new_assign, assign):
            break
        assign = new_assign
        sums, _ = _group_reduce(X, assign, params.nlist)
        centroids = sums / counts[:, None]
    return centroids.astype(np.float32), assign


def _hamming_to_centroids(words: np.ndarray, centroid_words: np.ndarray) -> np.ndarray:
    """`(n, nlist)` Hamming distances, int64."""
    n = words.shape[0]
    nlist = centroid_words.shape[0]
    out = np.empty((n, nlist), dtype=np.int64)
    for c in range(nlist):
        out[:, c] = np.bitwise_count(words ^ centroid_words[c]).sum(axis=1, dtype=np.int64)
    return out


def train_kmajority(
    database: EmbeddingMatrix, rows: Sequence[int], params: IvfParams
) -> tuple[np.ndarray, np.ndarray]:
    """Binary k-means: Hamming assignment, per-bit majority update (ties -> 1).

    Returns packed uint8 centroids `(nlist, row_bytes)` and the final
    assignment. Same stopping, empty-cluster and determinism contract as
    :func:`train_kmeans`.
    """
    if database.dtype is not Dtype.PACKED_BITS:
        raise ValidationError("train_kmajority requires a packed-bits matrix")
    params.validate()
    row_ids = _check_rows(rows, database.count)
    if params.nlist > row_ids.shape[0]:
        raise ConfigError(f"nlist={params.nlist} exceeds the {row_ids.shape[0]} training rows")
    codes = database.data[row_ids]
    words = packed_to_words(codes)
    bits = np.unpackbits(codes, axis=1, bitorder="big")[:, : database.dim]
    rng = np.random.Generator(np.random.PCG64(params.seed))
    n = codes.shape[0]

    # k-means++-style init with squared Hamming weights
    centroid_rows = np.empty(params.nlist, dtype=np.int64)
    centroid_rows[0] = int(rng.integers(n))
    d = np.bitwise_count(words ^ words[centroid_rows[0]]).sum(axis=1, dtype=np.int64)
    for i in range(1, params.nlist):
        w = (d.astype(np.float64)) ** 2
        total = float(w.sum())
        if total <= 0.0:
            idx = int(rng.integers(n))
        else:
            r = rng.random() * total
            idx = min(int(np.searchsorted(np.cumsum(w), r, side="right")), n - 1)
        centroid_rows[i] = idx
        d = np.minimum(d, np.bitwise_count(words ^ words[idx]).sum(axis=1, dtype=np.int64))
    centroid_words = words[centroid_rows].copy()

    assign = None
    pack_width = codes.shape[1]
    centroid_codes = codes[centroid_rows].copy()
    for _ in range(params.max_iterations):
        dists = _hamming_to_centroids(words, centroid_words)
        new_assign = dists.argmin(axis=1).astype(np.int64)
        new_assign, counts = _repair_empty(
            new_assign, dists[np.arange(n), new_assign].astype(np.float64), params.nlist
        )
        if assign is not None and np.array_equal(new_assign, assign):
            break
        assign = new_assign
        ones, _ = _group_reduce(bits, assign, params.nlist)
        majority = (2 * ones >= counts[:, None]).astype(np.uint8)
        centroid_codes = np.packbits(majority, axis=1, bitorder="big")[:, :pack_width]
        centroid_words = packed_to_words(centroid_codes)
    return centroid_codes, assign


def build_ivf(
    database: EmbeddingMatrix,
    rows: Sequence[int],
    metric: Metric,
    params: IvfParams,
    record_ids: Optional[Sequence[str]] = None,
) -> IvfIndex:
    """Train centroids, assign every row, and fill the inverted lists.

    Training may run on a seeded subsample (see `IvfParams.train_sample_cap`);
    the lists always come from a final nearest-centroid pass over all rows,
    so they partition the full row set.
    """
    if not metric.compatible_with(database.dtype):
        raise ValidationError(f"metric {metric.value} incompatible with {database.dtype.name}")
    params.validate()
    row_ids = _check_rows(rows, database.count)
    if params.nlist > row_ids.shape[0]:
        raise ConfigError(f"nlist={params.nlist} exceeds the {row_ids.shape[0]} database rows")

    cap = params.resolved_sample_cap()
    if row_ids.shape[0] > cap:
        rng = np.random.Generator(np.random.PCG64(params.seed))
        train_rows = np.sort(rng.choice(row_ids, size=cap, replace=False))
    else:
        train_rows = row_ids

    if database.dtype is Dtype.FLOAT32:
        centroid_arr, _ = train_kmeans(database, train_rows, params)
        centroids = EmbeddingMatrix(Dtype.FLOAT32, database.dim, centroid_arr)
        assign = np.empty(row_ids.shape[0], dtype=np.int64)
        c64 = centroid_arr.astype(np.float64)
        chunk = 16384
        for s in range(0, row_ids.shape[0], chunk):
            xs = database.data[row_ids[s : s + chunk]].astype(np.float64)
            assign[s : s + xs.shape[0]] = _sq_dists(xs, c64).argmin(axis=1)
    else:
        centroid_codes, _ = train_kmajority(database, train_rows, params)
        centroids = EmbeddingMatrix(Dtype.PACKED_BITS, database.dim, centroid_codes)
        words = packed_to_words(database.data[row_ids])
        assign = _hamming_to_centroids(words, packed_to_words(centroid_codes)).argmin(axis=1)

    # row_ids is ascending, the sort is stable: lists stay ascending by row id
    order = np.argsort(assign, kind="stable")
    sorted_assign = assign[order]
    positions_rows = row_ids[order]
    boundaries = np.searchsorted(sorted_assign, np.arange(params.nlist + 1))
    lists = tuple(
        positions_rows[boundaries[c] : boundaries[c + 1]].copy() for c in range(params.nlist)
    )
    block = np.ascontiguousarray(database.data[positions_rows])

    recs: Optional[tuple[str, ...]] = None
    if record_ids is not None:
        if len(record_ids) != row_ids.shape[0]:
            raise ValidationError("record_ids length does not match rows")
        by_row = dict(zip(row_ids.tolist(), record_ids))
        recs = tuple(by_row[int(r)] for r in positions_rows)
    return IvfIndex(params, metric, centroids, lists, block, recs)


def search(
    index: AnyIndex, query: np.ndarray, k: int, nprobe_override: Optional[int] = None
) -> RetrievalResult:
    """Top-k rows for one query; IVF scans the `nprobe` nearest lists."""
    return index.search(query, k, nprobe_override)


# ---------------------------------------------------------------------------
# GIVF persistence


def _write_varint(buf: bytearray, value: int) -> None:
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            buf.append(byte | 0x80)
        else:
            buf.append(byte)
            return


def _read_varint(stream: BinaryIO) -> int:
    shift = 0
    result = 0
    while True:
        b = stream.read(1)
        if not b:
            raise CorruptionError("truncated varint")
        byte = b[0]
        result |= (byte & 0x7F) << shift
        if not byte & 0x80:
            return result
        shift += 7


def _encode_list(rows: np.ndarray) -> bytes:
    """count + delta-encoded varints of a strictly ascending id list."""
    buf = bytearray()
    _write_varint(buf, rows.shape[0])
    prev = 0
    for i, r in enumerate(rows.tolist()):
        _write_varint(buf, r - prev if i else r)
        prev = r
    return bytes(buf)


def _decode_list(stream: BinaryIO) -> np.ndarray:
    n = _read_varint(stream)
    out = np.empty(n, dtype=np.int64)
    prev = 0
    for i in range(n):
        delta = _read_varint(stream)
        prev = delta if i == 0 else prev + delta
        out[i] = prev
    return out


def _gemb_bytes(matrix: EmbeddingMatrix) -> bytes:
    buf = BytesIO()
    write_embeddings(matrix, buf)
    return buf.getvalue()


def write_index(index: AnyIndex, destination: Union[BinaryIO, Path, str]) -> int:
    """Serialize an index to a GIVF stream; returns total bytes written."""
    out = BytesIO()
    is_ivf = isinstance(index, IvfIndex)
    out.write(INDEX_MAGIC)
    out.write(struct.pack("<HBB", INDEX_VERSION, 1 if is_ivf else 0, _METRIC_CODES[index.metric]))
    out.write(struct.pack("<B", 1 if index.record_ids is not None else 0))
    if is_ivf:
        p = index.params
        cap = -1 if p.train_sample_cap is None else p.train_sample_cap
        out.write(struct.pack("<IIIQq", p.nlist, p.nprobe, p.max_iterations, p.seed, cap))
        for lst in index.lists:
            out.write(_encode_list(lst))
        centroid_block = _gemb_bytes(index.centroids)
        out.write(struct.pack("<Q", len(centroid_block)))
        out.write(centroid_block)
        data = EmbeddingMatrix(index.dtype, index.dim, index.block)
    else:
        out.write(_encode_list(index.row_ids))
        data = EmbeddingMatrix(index.dtype, index.dim, index.block)
    data_block = _gemb_bytes(data)
    out.write(struct.pack("<Q", len(data_block)))
    out.write(data_block)
    if index.record_ids is not None:
        for rid in index.record_ids:
            enc = rid.encode("utf-8")
            out.write(struct.pack("<H", len(enc)))
            out.write(enc)
    payload = out.getvalue()
    if isinstance(destination, (str, Path)):
        with open(destination, "wb") as fh:
            fh.write(payload)
    else:
        destination.write(payload)
    return len(payload)


def _read_exact(stream: BinaryIO, n: int) -> bytes:
    data = stream.read(n)
    if len(data) != n:
        raise CorruptionError(f"expected {n} bytes, got {len(data)}")
    return data


def read_index(source: Union[BinaryIO, Path, str]) -> AnyIndex:
    """Parse a GIVF stream back into a flat or IVF index."""
    if isinstance(source, (str, Path)):
        with open(source, "rb") as fh:
            raw = fh.read()
    else:
        raw = source.read()
    stream = BytesIO(raw)
    magic = stream.read(4)
    if magic != INDEX_MAGIC:
        raise FormatError(f"bad index magic {magic!r}, expected {INDEX_MAGIC!r}")
    version, kind, metric_code = struct.unpack("<HBB", _read_exact(stream, 4))
    if version != INDEX_VERSION:
        raise FormatError(f"unsupported index version {version}")
    if metric_code not in _METRIC_FROM_CODE:
        raise FormatError(f"unknown metric code {metric_code}")
    metric = _METRIC_FROM_CODE[metric_code]
    (has_records,) = struct.unpack("<B", _read_exact(stream, 1))

    if kind == 1:
        nlist, nprobe, max_iter, seed, cap = struct.unpack("<IIIQq", _read_exact(stream, 28))
        params = IvfParams(
            nlist=nlist,
            nprobe=nprobe,
            max_iterations=max_iter,
            seed=seed,
            train_sample_cap=None if cap < 0 else cap,
        )
        lists = tuple(_decode_list(stream) for _ in range(nlist))
        (clen,) = struct.unpack("<Q", _read_exact(stream, 8))
        centroids = read_embeddings(BytesIO(_read_exact(stream, clen)))
        (dlen,) = struct.unpack("<Q", _read_exact(stream, 8))
        data = read_embeddings(BytesIO(_read_exact(stream, dlen)))
        total = int(sum(lst.shape[0] for lst in lists))
        if data.count != total:
            raise CorruptionError(f"data block has {data.count} rows, lists cover {total}")
        record_ids = _read_record_ids(stream, total) if has_records else None
        return IvfIndex(params, metric, centroids, lists, data.data, record_ids)
    if kind != 0:
        raise FormatError(f"unknown index kind {kind}")
    rows = _decode_list(stream)
    (dlen,) = struct.unpack("<Q", _read_exact(stream, 8))
    data = read_embeddings(BytesIO(_read_exact(stream, dlen)))
    if data.count != rows.shape[0]:
        raise CorruptionError(f"data block has {data.count} rows, row list has {rows.shape[0]}")
    record_ids = _read_record_ids(stream, rows.shape[0]) if has_records else None
    return FlatIndex(metric, data.dtype, data.dim, rows, data.data, record_ids)


def _read_record_ids(stream: BinaryIO, count: int) -> tuple[str, ...]:
    out = []
    for _ in range(count):
        (ln,) = struct.unpack("<H", _read_exact(stream, 2))
        out.append(_read_exact(stream, ln).decode("utf-8"))
    return tuple(out)
