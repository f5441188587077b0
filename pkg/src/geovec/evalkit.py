"""Retrieval-quality evaluation: label-overlap relevance, AP@k and mAP@k.

A retrieved item is relevant iff its label set intersects the query's label
set; single-label data is the singleton-set special case. AP@k divides the
summed precisions at relevant ranks by the number of relevant items
retrieved within the top k (a query with no hits scores 0). Queries with no
relevant item anywhere in the database are excluded from the mean and
counted separately: averaging forced zeros would measure the dataset, not
the method.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import compress as _compress
from . import index as _index
from .errors import ConfigError, EvaluationError, ValidationError
from .metrics import Metric
from .vecstore import DatasetManifest, Dtype, EmbeddingMatrix, Split, select_pair


def relevance(query_labels: frozenset, candidate_labels: frozenset) -> int:
    """1 iff the label sets overlap."""
    if not query_labels or not candidate_labels:
        raise ValidationError("relevance requires non-empty label sets")
    return 1 if query_labels & candidate_labels else 0


def ap_at_k(rel_flags: Sequence[int], k: int) -> float:
    """Average precision over a ranked 0/1 relevance list of length <= k."""
    if len(rel_flags) > k:
        raise ValidationError(f"got {len(rel_flags)} flags for k={k}")
    hits = 0
    precision_sum = 0.0
    for i, flag in enumerate(rel_flags, start=1):
        if flag:
            hits += 1
            precision_sum += hits / i
    if hits == 0:
        return 0.0
    return precision_sum / hits


@dataclass(frozen=True)
class EvalConfig:
    """One evaluation run: metric, splits, optional compression, index choice."""

    k: int = 20
    metric: Metric = Metric.L1
    query_split: Split = Split.VAL
    db_split: Split = Split.TEST
    compression: Optional[_compress.CompressionSpec] = None
    index: Optional[_index.IvfParams] = None  # None means exhaustive flat search

    def validate(self) -> None:
        if self.k < 1:
            raise ConfigError(f"k must be positive, got {self.k}")
        if self.query_split is self.db_split:
            raise ConfigError("query and database splits must differ")

    def describe(self) -> dict:
        out: dict = {
            "k": self.k,
            "metric": self.metric.value,
            "query_split": self.query_split.value,
            "db_split": self.db_split.value,
        }
        if self.compression is not None:
            out["compression"] = {
                "method": self.compression.method.value,
                "output_bits": self.compression.output_bits,
                "seed": self.compression.seed,
            }
        else:
            out["compression"] = None
        if self.index is not None:
            out["index"] = {
                "type": "ivf",
                "nlist": self.index.nlist,
                "nprobe": self.index.nprobe,
                "max_iterations": self.index.max_iterations,
                "seed": self.index.seed,
            }
        else:
            out["index"] = {"type": "flat"}
        return out


@dataclass(frozen=True)
class QueryOutcome:
    query_id: str
    ap: float
    relevant_retrieved: int
    relevant_in_db: int


@dataclass(frozen=True)
class EvalReport:
    map_at_k: float
    per_query: tuple[QueryOutcome, ...]
    skipped_queries: int
    config: dict

    def to_json(self) -> str:
        payload = {
            "map_at_k": self.map_at_k,
            "queries": len(self.per_query),
            "skipped_queries": self.skipped_queries,
            "config": self.config,
        }
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"

    def per_query_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["query_id", "ap", "relevant_retrieved", "relevant_in_db"])
        for q in self.per_query:
            writer.writerow([q.query_id, f"{q.ap:.12g}", q.relevant_retrieved, q.relevant_in_db])
        return buf.getvalue()


def _effective_metric(config: EvalConfig) -> Metric:
    """The metric actually applied after optional compression.

    Float metrics pair with float data; once compression produces codes, L1
    (and monotonically L2 / squared L2) carries over to Hamming, which it
    equals on 0/1 expansions. Cosine has no rank-faithful binary counterpart
    here, so it must be replaced explicitly.
    """
    if config.compression is None:
        return config.metric
    if config.metric.is_binary:
        return config.metric
    if config.metric is Metric.COSINE:
        raise ConfigError(
            "cosine does not transfer to binary codes; pick hamming or jaccard"
            " when compressing"
        )
    return Metric.HAMMING


def evaluate(
    embeddings: EmbeddingMatrix, manifest: DatasetManifest, config: EvalConfig
) -> EvalReport:
    """Retrieve top-k for every query row and aggregate mAP@k.

    Compression, when configured, is applied to the whole matrix once so
    queries and database transform identically.
    """
    config.validate()
    manifest.validate_against(embeddings)
    pair = select_pair(manifest, config.query_split, config.db_split)

    matrix = embeddings
    if config.compression is not None:
        if embeddings.dtype is not Dtype.FLOAT32:
            raise ConfigError("compression requires float input embeddings")
        matrix = _compress.apply(embeddings, config.compression)
    metric = _effective_metric(config)
    if not metric.compatible_with(matrix.dtype):
        raise ConfigError(f"metric {metric.value} incompatible with {matrix.dtype.name} data")

    db_rows = pair.database_rows
    if config.index is None:
        idx = _index.build_flat(matrix, db_rows, metric)
    else:
        idx = _index.build_ivf(matrix, db_rows, metric, config.index)

    labels_by_row = {r.row: r.labels for r in manifest.records}
    db_labels = [labels_by_row[int(r)] for r in db_rows]

    # per-query relevant counts over the whole database via multi-hot products
    vocab_size = len(manifest.vocabulary)
    db_hot = np.zeros((len(db_labels), vocab_size), dtype=bool)
    for i, labels in enumerate(db_labels):
        db_hot[i, list(labels)] = True

    per_query = []
    ap_sum = 0.0
    usable = 0
    skipped = 0
    for qrow in pair.query_rows.tolist():
        record = manifest.record_at_row(qrow)
        q_hot = np.zeros(vocab_size, dtype=bool)
        q_hot[list(record.labels)] = True
        relevant_in_db = int((db_hot @ q_hot).sum())

        result = idx.search(matrix.row(qrow), config.k)
        flags = [relevance(record.labels, labels_by_row[row]) for row, _ in result.entries]
        relevant_retrieved = sum(flags)
        if relevant_in_db == 0:
            skipped += 1
            per_query.append(QueryOutcome(record.id, 0.0, relevant_retrieved, 0))
            continue
        ap = ap_at_k(flags, config.k)
        ap_sum += ap
        usable += 1
        per_query.append(QueryOutcome(record.id, ap, relevant_retrieved, relevant_in_db))

    if usable == 0:
        raise EvaluationError("no query has a relevant item in the database")
    return EvalReport(
        map_at_k=ap_sum / usable,
        per_query=tuple(per_query),
        skipped_queries=skipped,
        config=config.describe(),
    )


@dataclass(frozen=True)
class MethodComparison:
    """One mAP column per configuration, plus formatting helpers."""

    labels: tuple[str, ...]
    maps: tuple[float, ...]
    k: int
    reports: tuple[EvalReport, ...] = field(repr=False, default=())

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["method", f"map_at_{self.k}"])
        for label, value in zip(self.labels, self.maps):
            writer.writerow([label, f"{value:.6f}"])
        return buf.getvalue()

    def to_text(self) -> str:
        width = max(len(label) for label in self.labels)
        lines = [f"{'method'.ljust(width)}  mAP@{self.k}"]
        for label, value in zip(self.labels, self.maps):
            lines.append(f"{label.ljust(width)}  {value * 100:6.2f}")
        return "\n".join(lines) + "\n"


def compare_methods(
    embeddings: EmbeddingMatrix,
    manifest: DatasetManifest,
    configs: Sequence[EvalConfig],
    labels: Optional[Sequence[str]] = None,
) -> MethodComparison:
    """Evaluate several configs that share k and splits, one column each."""
    if not configs:
        raise ConfigError("compare_methods needs at least one config")
    first = configs[0]
    for cfg in configs[1:]:
        if cfg.k != first.k or cfg.query_split is not first.query_split or cfg.db_split is not first.db_split:
            raise ConfigError("compared configs must share k and splits")
    if labels is None:
        labels = []
        for cfg in configs:
            if cfg.compression is None:
                labels.append("embedding")
            elif cfg.compression.method is _compress.Method.BINARIZE:
                labels.append("binary-embedding")
            else:
                labels.append(f"{cfg.compression.method.value}-{cfg.compression.output_bits}")
    elif len(labels) != len(configs):
        raise ConfigError("labels length must match configs")
    reports = tuple(evaluate(embeddings, manifest, cfg) for cfg in configs)
    return MethodComparison(
        labels=tuple(labels),
        maps=tuple(r.map_at_k for r in reports),
        k=first.k,
        reports=reports,
    )
