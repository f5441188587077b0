"""Walkthrough: per-query latency across database sizes and vector types.

Times IVF search (128 lists, 8 probed) for short binary codes, full-width
binary codes and float vectors as the database grows. Binary scans stay
microsecond-cheap; float scans pay for 32x more bytes per row.

Sizes here are reduced so the demo finishes in under a minute; pass
--full for the 10K/50K/100K grid.

Run with: python demos/03_benchmark_latency.py [--full]
"""
import sys

from geovec.benchkit import BenchConfig, BenchVariant, emit_report, run_bench
from geovec.index import IvfParams
from geovec.vecstore import Dtype

full = "--full" in sys.argv[1:]
sizes = (10_000, 50_000, 100_000) if full else (5_000, 20_000)

config = BenchConfig(
    db_sizes=sizes,
    variants=(
        BenchVariant(Dtype.PACKED_BITS, 64),
        BenchVariant(Dtype.PACKED_BITS, 768),
        BenchVariant(Dtype.FLOAT32, 768),
    ),
    queries_per_size=16 if not full else 32,
    repeats=3,
    warmup=50,
    index=IvfParams(nlist=128, nprobe=8, seed=0),
    k=20,
    seed=0,
)

report = run_bench(config, progress=lambda msg: print(f"  {msg}", file=sys.stderr))
print()
print(emit_report(report, "text"))
print("CSV form:")
print(emit_report(report, "csv"))
