"""Latency benchmarking across database sizes, plus synthetic labeled data.

Synthetic records are drawn around class centers on the unit sphere with
isotropic Gaussian noise, carry singleton labels, and are split round-robin
into train/val/test at 60/20/20. The construction stands in for real image
embeddings at desk scale: with noise small against the center separation,
nearest neighbours are overwhelmingly same-class.

The benchmark times only the search call. Index construction, data
generation and reporting all happen outside the measured window, and a
configurable number of warmup queries runs unmeasured first. The headline
statistic is the median, which shrugs off scheduler noise.
"""
from __future__ import annotations

import csv
import io
import os
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import psutil

from . import compress as _compress
from .errors import ConfigError, ResourceError, ValidationError
from .index import IvfParams, build_ivf
from .metrics import Metric
from .vecstore import DatasetManifest, Dtype, EmbeddingMatrix, ManifestRecord, Split

_SPLIT_CYCLE = (Split.TRAIN, Split.TRAIN, Split.TRAIN, Split.VAL, Split.TEST)


def generate_synthetic(
    count: int,
    dim: int,
    num_classes: int,
    cluster_spread: float,
    seed: int,
) -> tuple[EmbeddingMatrix, DatasetManifest]:
    """Deterministic labeled Gaussian class-clusters.

    Class centers are random unit vectors; each record samples its class
    center plus isotropic noise with per-component scale `cluster_spread`.
    Records cycle through classes and through the 60/20/20 split pattern.
    """
    if num_classes > count:
        raise ConfigError(f"num_classes={num_classes} exceeds count={count}")
    if num_classes < 1 or count < 1:
        raise ConfigError("count and num_classes must be positive")
    if cluster_spread < 0:
        raise ConfigError("cluster_spread must be non-negative")
    rng = np.random.Generator(np.random.PCG64(seed))
    centers = rng.standard_normal((num_classes, dim))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    classes = np.arange(count, dtype=np.int64) % num_classes
    noise = rng.standard_normal((count, dim)) * cluster_spread
    values = (centers[classes] + noise).astype(np.float32)
    matrix = EmbeddingMatrix.from_floats(values)

    # the split cycles within each class so every class reaches every split
    records = tuple(
        ManifestRecord(
            id=f"synth-{i:07d}",
            row=i,
            split=_SPLIT_CYCLE[(i // num_classes) % len(_SPLIT_CYCLE)],
            labels=frozenset({int(classes[i])}),
        )
        for i in range(count)
    )
    vocabulary = tuple(f"class_{c:03d}" for c in range(num_classes))
    return matrix, DatasetManifest(records=records, vocabulary=vocabulary)


@dataclass(frozen=True)
class BenchVariant:
    """One vector type to measure: packed codes or float vectors of a length."""

    dtype: Dtype
    dim: int

    @property
    def label(self) -> str:
        return "binary" if self.dtype is Dtype.PACKED_BITS else "float"

    @classmethod
    def parse(cls, text: str) -> "BenchVariant":
        try:
            kind, _, length = text.partition(":")
            dim = int(length)
        except ValueError:
            raise ConfigError(f"bad variant {text!r}, expected e.g. binary:64") from None
        if kind == "binary":
            return cls(Dtype.PACKED_BITS, dim)
        if kind == "float":
            return cls(Dtype.FLOAT32, dim)
        raise ConfigError(f"bad variant kind {kind!r}, expected binary or float")


DEFAULT_VARIANTS = (
    BenchVariant(Dtype.PACKED_BITS, 64),
    BenchVariant(Dtype.PACKED_BITS, 768),
    BenchVariant(Dtype.FLOAT32, 768),
)


@dataclass(frozen=True)
class BenchConfig:
    db_sizes: tuple[int, ...] = (10_000, 50_000, 100_000)
    variants: tuple[BenchVariant, ...] = DEFAULT_VARIANTS
    queries_per_size: int = 32
    repeats: int = 3
    warmup: int = 100
    index: IvfParams = field(default_factory=IvfParams)
    k: int = 20
    seed: int = 0
    num_classes: int = 32
    cluster_spread: float = 0.05

    def validate(self) -> None:
        if not self.db_sizes:
            raise ConfigError("db_sizes is empty")
        if any(s < 1 for s in self.db_sizes):
            raise ConfigError("db_sizes must be positive")
        if list(self.db_sizes) != sorted(self.db_sizes):
            raise ConfigError("db_sizes must be ascending")
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")
        if self.queries_per_size < 1:
            raise ConfigError("queries_per_size must be >= 1")
        if self.warmup < 0:
            raise ConfigError("warmup must be >= 0")
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        self.index.validate()


@dataclass(frozen=True)
class BenchRow:
    dtype_label: str
    length: int
    db_size: int
    median_ms: float
    p95_ms: float
    mean_ms: float


@dataclass(frozen=True)
class BenchReport:
    rows: tuple[BenchRow, ...]
    environment: dict

    def row_for(self, dtype_label: str, length: int, db_size: int) -> BenchRow:
        for row in self.rows:
            if (row.dtype_label, row.length, row.db_size) == (dtype_label, length, db_size):
                return row
        raise KeyError(f"no bench row for {dtype_label}/{length} at {db_size}")


def _capture_environment() -> dict:
    return {
        "cores": os.cpu_count(),
        "memory_gb": round(psutil.virtual_memory().total / 2**30, 2),
    }


def _measure_queries(
    search: Callable[[np.ndarray], object],
    queries: Sequence[np.ndarray],
    repeats: int,
    warmup: int,
) -> np.ndarray:
    """Per-call wall times in milliseconds; warmup calls are discarded."""
    nq = len(queries)
    for i in range(warmup):
        search(queries[i % nq])
    samples = np.empty(nq * repeats, dtype=np.float64)
    pos = 0
    for _ in range(repeats):
        for q in queries:
            t0 = time.perf_counter_ns()
            search(q)
            samples[pos] = (time.perf_counter_ns() - t0) / 1e6
            pos += 1
    return samples


def run_bench(config: BenchConfig, progress: Optional[Callable[[str], None]] = None) -> BenchReport:
    """Build one IVF index per (variant, size) and measure per-query latency."""
    config.validate()
    rows = []
    for variant in config.variants:
        for size in config.db_sizes:
            if progress:
                progress(f"bench {variant.label}/{variant.dim} at {size} rows")
            try:
                samples = _bench_one(config, variant, size)
            except MemoryError as exc:
                raise ResourceError(
                    f"out of memory benchmarking {variant.label}/{variant.dim} at {size} rows"
                ) from exc
            rows.append(
                BenchRow(
                    dtype_label=variant.label,
                    length=variant.dim,
                    db_size=size,
                    median_ms=float(np.median(samples)),
                    p95_ms=float(np.percentile(samples, 95)),
                    mean_ms=float(samples.mean()),
                )
            )
    return BenchReport(rows=tuple(rows), environment=_capture_environment())


def _bench_one(config: BenchConfig, variant: BenchVariant, size: int) -> np.ndarray:
    total = size + config.queries_per_size
    seq = np.random.SeedSequence([config.seed, variant.dim, variant.dtype.value, size])
    matrix, _ = generate_synthetic(
        count=total,
        dim=variant.dim,
        num_classes=config.num_classes,
        cluster_spread=config.cluster_spread,
        seed=int(seq.generate_state(1, np.uint64)[0]),
    )
    if variant.dtype is Dtype.PACKED_BITS:
        matrix = _compress.binarize(matrix)
        metric = Metric.HAMMING
    else:
        metric = Metric.L1
    db_rows = np.arange(size, dtype=np.int64)
    index = build_ivf(matrix, db_rows, metric, config.index)
    queries = [np.array(matrix.row(size + i)) for i in range(config.queries_per_size)]
    k = config.k
    return _measure_queries(lambda q: index.search(q, k), queries, config.repeats, config.warmup)


def emit_report(report: BenchReport, fmt: str = "csv") -> str:
    """Render a report as CSV rows or as a size-by-variant text table."""
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["dtype", "length", "db_size", "median_ms", "p95_ms", "mean_ms"])
        for row in report.rows:
            writer.writerow(
                [
                    row.dtype_label,
                    row.length,
                    row.db_size,
                    f"{row.median_ms:.6f}",
                    f"{row.p95_ms:.6f}",
                    f"{row.mean_ms:.6f}",
                ]
            )
        return buf.getvalue()
    if fmt != "text":
        raise ValidationError(f"unknown report format {fmt!r}")

    sizes = sorted({row.db_size for row in report.rows})
    variants = []
    for row in report.rows:
        key = (row.dtype_label, row.length)
        if key not in variants:
            variants.append(key)
    header = ["Data type", "Length"] + [_size_label(s) for s in sizes]
    lines = ["  ".join(f"{h:>9}" for h in header)]
    for dtype_label, length in variants:
        cells = [f"{dtype_label.capitalize():>9}", f"{length:>9}"]
        for s in sizes:
            try:
                row = report.row_for(dtype_label, length, s)
                cells.append(f"{row.median_ms:>7.2f}ms")
            except KeyError:
                cells.append(f"{'-':>9}")
        lines.append("  ".join(cells))
    env = report.environment
    lines.append(f"(median per-query latency; {env.get('cores')} cores, {env.get('memory_gb')} GB)")
    return "\n".join(lines) + "\n"


def parse_bench_csv(text: str) -> BenchReport:
    """Re-parse :func:`emit_report` CSV output (round-trip tested)."""
    reader = csv.DictReader(io.StringIO(text))
    rows = []
    for rec in reader:
        rows.append(
            BenchRow(
                dtype_label=rec["dtype"],
                length=int(rec["length"]),
                db_size=int(rec["db_size"]),
                median_ms=float(rec["median_ms"]),
                p95_ms=float(rec["p95_ms"]),
                mean_ms=float(rec["mean_ms"]),
            )
        )
    return BenchReport(rows=tuple(rows), environment={})


def _size_label(size: int) -> str:
    if size % 1000 == 0:
        return f"{size // 1000}K"
    return str(size)
