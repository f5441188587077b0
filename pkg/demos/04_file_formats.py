"""Walkthrough: the on-disk formats and the CLI pipeline.

Builds a dataset bundle, compresses it, serializes an IVF index and runs a
query, all through the `geovec` command-line interface, then inspects the
bytes to show the GEMB/GIVF framing.

Run with: python demos/04_file_formats.py
"""
import json
import struct
import tempfile
from pathlib import Path

from geovec.cli import main

root = Path(tempfile.mkdtemp(prefix="geovec-demo-"))
bundle = root / "bundle"
codes = root / "codes.gemb"
index = root / "index.givf"

steps = [
    ["--seed", "9", "synth", "--count", "1000", "--dim", "768", "--classes", "10",
     "--spread", "0.05", "--out", str(bundle)],
    ["--seed", "9", "compress", "--bundle", str(bundle), "--method", "trivial-hash",
     "--bits", "64", "--out", str(codes)],
    ["--seed", "9", "build-index", "--embeddings", str(codes), "--bundle", str(bundle),
     "--split", "test", "--metric", "hamming", "--nlist", "16", "--nprobe", "8",
     "--out", str(index)],
]
for argv in steps:
    print(f"$ geovec {' '.join(argv)}")
    assert main(argv) == 0

print("\nbundle contents:")
for path in sorted(bundle.iterdir()):
    print(f"  {path.name:18s} {path.stat().st_size:8d} bytes")
print("compressed codes sidecar:", json.loads(Path(f"{codes}.meta.json").read_text()))

header = codes.read_bytes()[:20]
magic, version, dtype, _reserved, count, dim = struct.unpack("<4sHBBQI", header)
print(f"\nGEMB header: magic={magic!r} version={version} dtype={dtype} count={count} dim={dim}")

givf = index.read_bytes()
print(f"GIVF file:   magic={givf[:4]!r} kind={'ivf' if givf[6] == 1 else 'flat'} "
      f"size={len(givf)} bytes (self-contained: lists + centroids + vectors + record ids)")

print("\n$ geovec query --index ... --query codes.gemb --query-row 3 --k 5")
main(["query", "--index", str(index), "--query", str(codes), "--query-row", "3", "--k", "5"])
