"""Synthetic data generation and the latency benchmark harness."""
import numpy as np
import pytest

from geovec.benchkit import (
    BenchConfig,
    BenchReport,
    BenchVariant,
    emit_report,
    generate_synthetic,
    parse_bench_csv,
    run_bench,
)
from geovec.errors import ConfigError
from geovec.evalkit import EvalConfig, evaluate
from geovec.index import IvfParams
from geovec.metrics import Metric
from geovec.vecstore import Dtype, Split


class TestGenerateSynthetic:
    def test_deterministic(self):
        a_matrix, a_manifest = generate_synthetic(200, 32, 8, 0.05, seed=5)
        b_matrix, b_manifest = generate_synthetic(200, 32, 8, 0.05, seed=5)
        assert np.array_equal(a_matrix.data, b_matrix.data)
        assert a_manifest == b_manifest

    def test_different_seeds_differ(self):
        a, _ = generate_synthetic(50, 16, 4, 0.05, seed=1)
        b, _ = generate_synthetic(50, 16, 4, 0.05, seed=2)
        assert not np.array_equal(a.data, b.data)

    def test_zero_spread_points_sit_on_centers(self):
        matrix, manifest = generate_synthetic(40, 16, 4, 0.0, seed=3)
        # all members of one class are identical
        rows_by_class = {}
        for rec in manifest.records:
            (label,) = rec.labels
            rows_by_class.setdefault(label, []).append(rec.row)
        for rows in rows_by_class.values():
            block = matrix.data[rows]
            assert np.all(block == block[0])

    def test_zero_spread_retrieval_is_perfect(self):
        matrix, manifest = generate_synthetic(300, 32, 6, 0.0, seed=4)
        report = evaluate(matrix, manifest, EvalConfig(k=5, metric=Metric.L2))
        assert report.map_at_k == 1.0

    def test_small_spread_high_map(self):
        matrix, manifest = generate_synthetic(600, 128, 10, 0.02, seed=6)
        report = evaluate(matrix, manifest, EvalConfig(k=10, metric=Metric.L1))
        assert report.map_at_k >= 0.95

    def test_split_pattern_covers_each_class(self):
        _, manifest = generate_synthetic(500, 8, 10, 0.05, seed=7)
        for split in Split:
            labels = {next(iter(r.labels)) for r in manifest.by_split(split)}
            assert labels == set(range(10))

    def test_split_proportions(self):
        _, manifest = generate_synthetic(1000, 8, 10, 0.05, seed=8)
        assert len(manifest.by_split(Split.TRAIN)) == 600
        assert len(manifest.by_split(Split.VAL)) == 200
        assert len(manifest.by_split(Split.TEST)) == 200

    def test_singleton_labels(self):
        _, manifest = generate_synthetic(60, 8, 5, 0.05, seed=9)
        assert all(len(r.labels) == 1 for r in manifest.records)

    def test_too_many_classes_rejected(self):
        with pytest.raises(ConfigError, match="num_classes"):
            generate_synthetic(5, 8, 6, 0.05, seed=0)


class TestBenchVariant:
    def test_parse(self):
        v = BenchVariant.parse("binary:64")
        assert v.dtype is Dtype.PACKED_BITS and v.dim == 64
        v = BenchVariant.parse("float:768")
        assert v.dtype is Dtype.FLOAT32 and v.dim == 768

    def test_parse_rejects_garbage(self):
        with pytest.raises(ConfigError):
            BenchVariant.parse("int8:64")
        with pytest.raises(ConfigError):
            BenchVariant.parse("binary")


def tiny_config(**overrides):
    defaults = dict(
        db_sizes=(1000,),
        variants=(BenchVariant(Dtype.PACKED_BITS, 64),),
        queries_per_size=4,
        repeats=1,
        warmup=2,
        index=IvfParams(nlist=8, nprobe=2, seed=0),
        k=5,
        seed=0,
    )
    defaults.update(overrides)
    return BenchConfig(**defaults)


class TestRunBench:
    def test_minimal_single_row(self):
        report = run_bench(tiny_config())
        assert len(report.rows) == 1
        row = report.rows[0]
        assert (row.dtype_label, row.length, row.db_size) == ("binary", 64, 1000)
        assert row.median_ms >= 0.0
        assert row.p95_ms >= row.median_ms >= 0.0
        assert report.environment["cores"] >= 1

    def test_grid_cardinality(self):
        config = tiny_config(
            db_sizes=(500, 1000),
            variants=(BenchVariant(Dtype.PACKED_BITS, 64), BenchVariant(Dtype.FLOAT32, 32)),
        )
        report = run_bench(config)
        assert len(report.rows) == 4

    def test_median_latency_monotone_in_nprobe(self):
        # scanning 16x more lists must cost measurably more per query
        common = dict(
            db_sizes=(20_000,),
            variants=(BenchVariant(Dtype.FLOAT32, 128),),
            queries_per_size=8,
            repeats=3,
            warmup=8,
            k=5,
            seed=1,
        )
        narrow = run_bench(BenchConfig(index=IvfParams(nlist=32, nprobe=1, seed=0), **common))
        wide = run_bench(BenchConfig(index=IvfParams(nlist=32, nprobe=32, seed=0), **common))
        assert wide.rows[0].median_ms > narrow.rows[0].median_ms

    def test_descending_sizes_rejected(self):
        with pytest.raises(ConfigError, match="ascending"):
            run_bench(tiny_config(db_sizes=(1000, 500)))

    def test_zero_repeats_rejected(self):
        with pytest.raises(ConfigError, match="repeats"):
            run_bench(tiny_config(repeats=0))

    def test_out_of_memory_names_the_size(self, monkeypatch):
        from geovec import benchkit
        from geovec.errors import ResourceError

        def explode(config, variant, size):
            raise MemoryError

        monkeypatch.setattr(benchkit, "_bench_one", explode)
        with pytest.raises(ResourceError, match="1000"):
            run_bench(tiny_config())


class TestEmitReport:
    def test_empty_report_header_only(self):
        report = BenchReport(rows=(), environment={})
        assert emit_report(report, "csv") == "dtype,length,db_size,median_ms,p95_ms,mean_ms\n"

    def test_csv_roundtrip(self):
        report = run_bench(tiny_config())
        text = emit_report(report, "csv")
        again = parse_bench_csv(text)
        assert len(again.rows) == 1
        orig, parsed = report.rows[0], again.rows[0]
        assert parsed.dtype_label == orig.dtype_label
        assert parsed.median_ms == pytest.approx(orig.median_ms, abs=1e-6)
        assert parsed.p95_ms == pytest.approx(orig.p95_ms, abs=1e-6)

    def test_text_table_layout(self):
        config = tiny_config(
            db_sizes=(500, 1000),
            variants=(BenchVariant(Dtype.PACKED_BITS, 64), BenchVariant(Dtype.FLOAT32, 32)),
        )
        text = emit_report(run_bench(config), "text")
        lines = text.strip().splitlines()
        assert "Data type" in lines[0] and "1K" in lines[0]
        assert lines[1].lstrip().startswith("Binary")
        assert lines[2].lstrip().startswith("Float")

    def test_unknown_format_rejected(self):
        report = BenchReport(rows=(), environment={})
        with pytest.raises(Exception, match="format"):
            emit_report(report, "yaml")
