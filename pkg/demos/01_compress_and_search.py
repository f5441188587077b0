"""Walkthrough: compress float embeddings into codes and search them.

Generates a small labeled embedding set, compresses it three ways
(sign binarization, 64-bit group-mean hash, LSH), and runs the same
nearest-neighbour query against each representation to show how much
the ranking survives compression.

Run with: python demos/01_compress_and_search.py
"""
import numpy as np

from geovec.benchkit import generate_synthetic
from geovec.compress import CompressionSpec, Method, binarize, compression_ratio, lsh_hash, trivial_hash
from geovec.index import IvfParams, build_ivf, search
from geovec.metrics import Metric

matrix, manifest = generate_synthetic(count=2000, dim=768, num_classes=16, cluster_spread=0.05, seed=42)
print(f"synthetic set: {matrix.count} rows, dim {matrix.dim}, {len(manifest.vocabulary)} classes")

# three binary representations of the same vectors
codes_full = binarize(matrix)
codes_hash = trivial_hash(matrix, CompressionSpec(Method.TRIVIAL_HASH, output_bits=64))
codes_lsh = lsh_hash(matrix, CompressionSpec(Method.LSH, output_bits=64, seed=7))
for name, codes in [("binarized", codes_full), ("trivial-hash-64", codes_hash), ("lsh-64", codes_lsh)]:
    ratio = compression_ratio(matrix, codes)
    print(f"{name:16s} dim={codes.dim:4d}  payload ratio {float(ratio):6.0f}x")

# index every representation and query with row 0
query_row = 0
query_class = next(iter(manifest.record_at_row(query_row).labels))
params = IvfParams(nlist=32, nprobe=8, seed=1)

float_index = build_ivf(matrix, range(matrix.count), Metric.L1, params)
result = search(float_index, matrix.row(query_row), k=10)
print(f"\ntop-10 for row {query_row} (class {query_class}), float L1:")
for rank, (row, dist) in enumerate(result.entries, start=1):
    label = next(iter(manifest.record_at_row(row).labels))
    marker = "*" if label == query_class else " "
    print(f"  {rank:2d}. row {row:5d}  class {label:2d}{marker}  dist {dist:9.2f}")

for name, codes in [("binarized", codes_full), ("trivial-hash-64", codes_hash)]:
    index = build_ivf(codes, range(codes.count), Metric.HAMMING, params)
    entries = search(index, codes.row(query_row), k=10).entries
    same_class = sum(
        1 for row, _ in entries if manifest.record_at_row(row).labels == {query_class}
    )
    print(f"{name:16s} top-10 same-class hits: {same_class}/10")
