"""Distance kernels for float vectors and packed binary codes.

Float metrics (L1, L2, squared L2, cosine) accept float32 or float64 vectors
and always accumulate in float64 so that rankings do not flip from
single-precision rounding at realistic dimensions. Binary metrics (Hamming,
Jaccard) accept packed uint8 codes; pad bits are zero by the store invariant
and therefore never contribute to XOR or AND/OR popcounts.

Jaccard of two all-zero codes is defined as 0: identical codes sit at
distance zero even when the 0/0 ratio is formally undefined.
"""
from __future__ import annotations

import enum
from typing import Optional, Sequence

import numpy as np

from .errors import DomainError, ValidationError
from .vecstore import Dtype, EmbeddingMatrix

_CHUNK_ROWS = 8192  # bounds float64 temporaries to ~50 MB at dim 768


class Metric(enum.Enum):
    L1 = "l1"
    L2 = "l2"
    L2_SQUARED = "l2sq"
    COSINE = "cosine"
    HAMMING = "hamming"
    JACCARD = "jaccard"

    @property
    def is_binary(self) -> bool:
        return self in (Metric.HAMMING, Metric.JACCARD)

    def compatible_with(self, dtype: Dtype) -> bool:
        return self.is_binary == (dtype is Dtype.PACKED_BITS)


def _check_metric_dtype(metric: Metric, dtype: Dtype) -> None:
    if not metric.compatible_with(dtype):
        raise ValidationError(
            f"metric {metric.value} is incompatible with {dtype.name} vectors"
        )


def _classify(arr: np.ndarray) -> Dtype:
    if arr.dtype == np.uint8:
        return Dtype.PACKED_BITS
    if np.issubdtype(arr.dtype, np.floating):
        return Dtype.FLOAT32
    raise ValidationError(f"unsupported vector dtype {arr.dtype}")


def distance(a: np.ndarray, b: np.ndarray, metric: Metric) -> float:
    """Distance between two vectors of the same kind and length.

    Float vectors use float64 accumulation; packed codes use XOR/AND/OR
    popcounts. This scalar form is the reference the batch kernel is
    checked against.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 1 or b.ndim != 1:
        raise ValidationError("distance expects 1-D vectors")
    if a.shape != b.shape:
        raise ValidationError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")
    kind_a, kind_b = _classify(a), _classify(b)
    if kind_a is not kind_b:
        raise ValidationError("mixed float and packed operands")
    _check_metric_dtype(metric, kind_a)

    if metric is Metric.HAMMING:
        return float(np.bitwise_count(a ^ b).sum(dtype=np.int64))
    if metric is Metric.JACCARD:
        inter = int(np.bitwise_count(a & b).sum(dtype=np.int64))
        union = int(np.bitwise_count(a | b).sum(dtype=np.int64))
        if union == 0:
            return 0.0
        return 1.0 - inter / union

    x = a.astype(np.float64)
    y = b.astype(np.float64)
    if metric is Metric.L1:
        return float(np.abs(x - y).sum())
    if metric is Metric.L2_SQUARED:
        d = x - y
        return float((d * d).sum())
    if metric is Metric.L2:
        d = x - y
        return float(np.sqrt((d * d).sum()))
    # cosine
    na2 = float((x * x).sum())
    nb2 = float((y * y).sum())
    if na2 == 0.0 or nb2 == 0.0:
        raise DomainError("cosine distance is undefined for a zero vector")
    dist = 1.0 - float((x * y).sum()) / np.sqrt(na2 * nb2)
    return float(min(2.0, max(0.0, dist)))


# ---------------------------------------------------------------------------
# Vectorized kernels. These back both the public batch op and the indexes;
# flat and IVF searches share them so their distances agree bit for bit.


def float_block_distances(block: np.ndarray, query: np.ndarray, metric: Metric) -> np.ndarray:
    """Float64 distances from `query` to every row of a float 2-D block."""
    q = query.astype(np.float64)
    out = np.empty(block.shape[0], dtype=np.float64)
    if metric is Metric.COSINE:
        qn2 = float((q * q).sum())
        if qn2 == 0.0:
            raise DomainError("cosine distance is undefined for a zero vector")
    for start in range(0, block.shape[0], _CHUNK_ROWS):
        chunk = block[start : start + _CHUNK_ROWS].astype(np.float64)
        if metric is Metric.L1:
            np.abs(chunk - q, out=chunk)
            out[start : start + chunk.shape[0]] = chunk.sum(axis=1)
        elif metric is Metric.L2_SQUARED or metric is Metric.L2:
            chunk -= q
            chunk *= chunk
            d = chunk.sum(axis=1)
            if metric is Metric.L2:
                np.sqrt(d, out=d)
            out[start : start + chunk.shape[0]] = d
        elif metric is Metric.COSINE:
            norms2 = (chunk * chunk).sum(axis=1)
            if np.any(norms2 == 0.0):
                raise DomainError("cosine distance is undefined for a zero vector")
            dots = (chunk * q).sum(axis=1)
            d = 1.0 - dots / np.sqrt(norms2 * qn2)
            np.clip(d, 0.0, 2.0, out=d)
            out[start : start + chunk.shape[0]] = d
        else:
            raise ValidationError(f"{metric.value} is not a float metric")
    return out


def packed_block_distances(block: np.ndarray, query: np.ndarray, metric: Metric) -> np.ndarray:
    """Distances from a packed `query` row to every row of a packed 2-D block.

    Hamming results are exact integers (returned as float64); Jaccard is a
    float64 ratio with the 0/0 case mapped to 0.
    """
    if metric is Metric.HAMMING:
        return np.bitwise_count(block ^ query).sum(axis=1, dtype=np.int64).astype(np.float64)
    if metric is Metric.JACCARD:
        inter = np.bitwise_count(block & query).sum(axis=1, dtype=np.int64)
        union = np.bitwise_count(block | query).sum(axis=1, dtype=np.int64)
        out = np.zeros(block.shape[0], dtype=np.float64)
        nz = union > 0
        out[nz] = 1.0 - inter[nz] / union[nz]
        return out
    raise ValidationError(f"{metric.value} is not a binary metric")


def block_distances(block: np.ndarray, query: np.ndarray, metric: Metric) -> np.ndarray:
    if metric.is_binary:
        return packed_block_distances(block, query, metric)
    return float_block_distances(block, query, metric)


def check_query(query: np.ndarray, matrix: EmbeddingMatrix, metric: Metric) -> np.ndarray:
    """Validate a query vector against a matrix and metric; returns the query."""
    query = np.asarray(query)
    if query.ndim != 1:
        raise ValidationError("query must be a 1-D vector")
    _check_metric_dtype(metric, matrix.dtype)
    if _classify(query) is not matrix.dtype:
        raise ValidationError(
            f"query dtype {query.dtype} does not match matrix dtype {matrix.dtype.name}"
        )
    if query.shape[0] != matrix.data.shape[1]:
        raise ValidationError(
            f"query length {query.shape[0]} does not match matrix rows of {matrix.data.shape[1]}"
        )
    return query


def batch_distances(
    query: np.ndarray,
    database: EmbeddingMatrix,
    metric: Metric,
    subset: Optional[Sequence[int]] = None,
) -> list[tuple[int, float]]:
    """Distances from one query to the requested database rows.

    Returns one `(row, distance)` pair per requested row, in the order the
    rows were requested (all rows ascending when `subset` is None). Each
    distance equals the scalar :func:`distance` on the same pair.
    """
    query = check_query(query, database, metric)
    if subset is None:
        rows = np.arange(database.count, dtype=np.int64)
        block = database.data
    else:
        rows = np.asarray(subset, dtype=np.int64)
        if rows.size and (rows.min() < 0 or rows.max() >= database.count):
            bad = rows[(rows < 0) | (rows >= database.count)][0]
            raise ValidationError(f"subset row {bad} out of range [0, {database.count})")
        if rows.size == 0:
            return []
        block = database.data[rows]
    dists = block_distances(block, query, metric)
    return [(int(r), float(d)) for r, d in zip(rows, dists)]
