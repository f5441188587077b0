"""The `geovec` command: ingest -> compress -> index -> query / eval / bench.

Subcommands operate on dataset bundles (a directory holding
``embeddings.gemb`` + ``manifest.jsonl`` + ``vocabulary.json`` + a checksum
file), standalone ``.gemb`` embedding files and ``.givf`` index files. Every
output is written atomically: a failed run never leaves a partial file, and
rerunning with identical flags and inputs reproduces identical bytes
(timing values excepted).

Informational messages go to stderr; query results and tables go to stdout.
Exit status is 0 exactly when the command succeeded.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import shutil
import sys
import tempfile
from pathlib import Path

BUNDLE_EMBEDDINGS = "embeddings.gemb"
BUNDLE_MANIFEST = "manifest.jsonl"
BUNDLE_VOCABULARY = "vocabulary.json"
BUNDLE_CHECKSUMS = "checksums.sha256"

_METRIC_CHOICES = ("l1", "l2", "l2sq", "cosine", "hamming", "jaccard")


def _default_threads():
    raw = os.environ.get("GEOVEC_THREADS", "")
    return int(raw) if raw.isdigit() else None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="geovec",
        description="Similarity search and retrieval evaluation for image embeddings.",
    )
    parser.add_argument("--seed", type=int, default=0, help="seed for all stochastic steps")
    parser.add_argument(
        "--threads",
        type=int,
        default=_default_threads(),
        help="cap internal thread pools (default: $GEOVEC_THREADS)",
    )
    parser.add_argument("--quiet", action="store_true", help="suppress informational output")
    parser.add_argument("--output", type=Path, default=None, help="default output path when --out is omitted")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate raw files and write a dataset bundle")
    p.add_argument("--embeddings", type=Path, required=True)
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--vocab", type=Path, required=True)
    p.add_argument("--out", type=Path, default=None, help="bundle directory to create")

    p = sub.add_parser("compress", help="compress bundle embeddings into binary codes")
    p.add_argument("--bundle", type=Path, required=True)
    p.add_argument("--method", choices=("binarize", "trivial-hash", "lsh"), required=True)
    p.add_argument("--bits", type=int, default=64, help="code length for trivial-hash/lsh")
    p.add_argument("--out", type=Path, default=None, help="output .gemb path")

    p = sub.add_parser("build-index", help="build a flat or IVF index over embeddings")
    p.add_argument("--embeddings", type=Path, default=None, help=".gemb file to index")
    p.add_argument("--bundle", type=Path, default=None, help="bundle supplying rows and record ids")
    p.add_argument("--split", choices=("train", "val", "test"), default=None, help="bundle split to index")
    p.add_argument("--type", choices=("flat", "ivf"), default="ivf")
    p.add_argument("--metric", choices=_METRIC_CHOICES, default="l1")
    p.add_argument("--nlist", type=int, default=128)
    p.add_argument("--nprobe", type=int, default=8)
    p.add_argument("--max-iterations", type=int, default=25)
    p.add_argument("--out", type=Path, default=None, help="output .givf path")

    p = sub.add_parser("query", help="run one query against a serialized index")
    p.add_argument("--index", type=Path, required=True)
    p.add_argument("--query", type=Path, required=True, help=".gemb file holding query vectors")
    p.add_argument("--query-row", type=int, default=0)
    p.add_argument("--k", type=int, default=20)
    p.add_argument("--nprobe", type=int, default=None)
    p.add_argument("--out", type=Path, default=None, help="write result CSV here instead of stdout")

    p = sub.add_parser("eval", help="evaluate retrieval quality (mAP@k) on a bundle")
    p.add_argument("--bundle", type=Path, required=True)
    p.add_argument("--method", choices=("none", "binarize", "trivial-hash", "lsh"), default="none")
    p.add_argument("--bits", type=int, default=64)
    p.add_argument("--metric", choices=_METRIC_CHOICES, default="l1")
    p.add_argument("--k", type=int, default=20)
    p.add_argument("--query-split", choices=("train", "val", "test"), default="val")
    p.add_argument("--db-split", choices=("train", "val", "test"), default="test")
    p.add_argument("--index", choices=("flat", "ivf"), default="flat")
    p.add_argument("--nlist", type=int, default=128)
    p.add_argument("--nprobe", type=int, default=8)
    p.add_argument("--out", type=Path, default=None, help="directory for eval.json and per_query.csv")

    p = sub.add_parser("bench", help="measure per-query latency across database sizes")
    p.add_argument("--sizes", default="10000,50000,100000", help="comma-separated database sizes")
    p.add_argument("--variants", default="binary:64,binary:768,float:768")
    p.add_argument("--queries", type=int, default=32, help="distinct queries per size")
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--warmup", type=int, default=100)
    p.add_argument("--nlist", type=int, default=128)
    p.add_argument("--nprobe", type=int, default=8)
    p.add_argument("--k", type=int, default=20)
    p.add_argument("--out", type=Path, default=None, help="directory for bench.csv and bench.txt")

    p = sub.add_parser("synth", help="generate a synthetic labeled bundle")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--dim", type=int, default=768)
    p.add_argument("--classes", type=int, default=20)
    p.add_argument("--spread", type=float, default=0.05)
    p.add_argument("--out", type=Path, default=None, help="bundle directory to create")

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is not None:
        _cap_threads(args.threads)
    from .errors import GeovecError  # heavy imports stay inside handlers

    handler = _HANDLERS[args.command]
    try:
        handler(args)
    except GeovecError as exc:
        print(f"geovec {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"geovec {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


def _cap_threads(n: int) -> None:
    # must run before numpy/numba pull in their thread pools
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMBA_NUM_THREADS"):
        os.environ[var] = str(max(1, n))


def _info(args, message: str) -> None:
    if not args.quiet:
        print(message, file=sys.stderr)


def _resolve_out(args, fallback_name: str = "") -> Path:
    from .errors import ConfigError

    if args.out is not None:
        return args.out
    if args.output is not None:
        return args.output / fallback_name if fallback_name else args.output
    raise ConfigError("no output path: pass --out (or a global --output)")


def _atomic_write_bytes(path: Path, payload: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _atomic_write_text(path: Path, text: str) -> None:
    _atomic_write_bytes(path, text.encode("utf-8"))


def _write_bundle(out_dir: Path, gemb_bytes: bytes, manifest_text: str, vocab_text: str) -> None:
    """Assemble a bundle in a temp dir, then swap it into place."""
    out_dir = Path(out_dir)
    out_dir.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(dir=out_dir.parent, prefix=f".{out_dir.name}."))
    try:
        (tmp / BUNDLE_EMBEDDINGS).write_bytes(gemb_bytes)
        (tmp / BUNDLE_MANIFEST).write_text(manifest_text)
        (tmp / BUNDLE_VOCABULARY).write_text(vocab_text)
        checksums = []
        for name in (BUNDLE_EMBEDDINGS, BUNDLE_MANIFEST, BUNDLE_VOCABULARY):
            digest = hashlib.sha256((tmp / name).read_bytes()).hexdigest()
            checksums.append(f"{digest}  {name}")
        (tmp / BUNDLE_CHECKSUMS).write_text("\n".join(checksums) + "\n")
        if out_dir.exists():
            shutil.rmtree(out_dir)
        os.rename(tmp, out_dir)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise


def _load_bundle(bundle: Path):
    from .errors import ValidationError
    from .vecstore import load_manifest, read_embeddings

    bundle = Path(bundle)
    for name in (BUNDLE_EMBEDDINGS, BUNDLE_MANIFEST, BUNDLE_VOCABULARY):
        if not (bundle / name).exists():
            raise ValidationError(f"bundle {bundle} is missing {name}")
    matrix = read_embeddings(bundle / BUNDLE_EMBEDDINGS)
    manifest = load_manifest(bundle / BUNDLE_MANIFEST, bundle / BUNDLE_VOCABULARY)
    manifest.validate_against(matrix)
    return matrix, manifest


def _split_counts(manifest) -> str:
    from .vecstore import Split

    counts = {s: len(manifest.by_split(s)) for s in Split}
    return (
        f"{len(manifest)} records ({counts[Split.TRAIN]} train / "
        f"{counts[Split.VAL]} val / {counts[Split.TEST]} test)"
    )


# ---------------------------------------------------------------------------
# Handlers


def _cmd_ingest(args) -> None:
    from io import BytesIO

    from .vecstore import load_manifest, read_embeddings, save_manifest, write_embeddings

    out_dir = _resolve_out(args)
    matrix = read_embeddings(args.embeddings)
    manifest = load_manifest(args.manifest, args.vocab)
    manifest.validate_against(matrix)

    buf = BytesIO()
    write_embeddings(matrix, buf)
    from io import StringIO

    records_buf, vocab_buf = StringIO(), StringIO()
    save_manifest(manifest, records_buf, vocab_buf)
    _write_bundle(out_dir, buf.getvalue(), records_buf.getvalue(), vocab_buf.getvalue())
    _info(args, f"{_split_counts(manifest)}, {len(manifest.vocabulary)} labels, dim {matrix.dim}")
    _info(args, f"bundle written to {out_dir}")


def _compression_spec(method: str, bits: int, seed: int):
    from .compress import CompressionSpec, Method

    if method == "binarize":
        return CompressionSpec(Method.BINARIZE)
    if method == "trivial-hash":
        return CompressionSpec(Method.TRIVIAL_HASH, output_bits=bits)
    return CompressionSpec(Method.LSH, output_bits=bits, seed=seed)


def _cmd_compress(args) -> None:
    from io import BytesIO

    from . import compress as compress_mod
    from .vecstore import write_embeddings

    out = _resolve_out(args, "compressed.gemb")
    matrix, _ = _load_bundle(args.bundle)
    spec = _compression_spec(args.method, args.bits, args.seed)
    spec.validate(matrix.dim)
    codes = compress_mod.apply(matrix, spec)
    buf = BytesIO()
    write_embeddings(codes, buf)
    _atomic_write_bytes(out, buf.getvalue())
    sidecar = {
        "method": spec.method.value,
        "output_bits": codes.dim,
        "seed": spec.seed,
        "input_dim": matrix.dim,
    }
    if spec.method is compress_mod.Method.TRIVIAL_HASH:
        sidecar["group_size"] = matrix.dim // codes.dim
        _info(args, f"trivial hash: {matrix.dim} dims -> {codes.dim} bits (group size {sidecar['group_size']})")
    ratio = compress_mod.compression_ratio(matrix, codes)
    _atomic_write_text(Path(f"{out}.meta.json"), json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    _info(args, f"compressed {matrix.count} rows, payload ratio {float(ratio):g}x -> {out}")


def _metric_from_name(name: str):
    from .metrics import Metric

    return {m.value: m for m in Metric}[name]


def _cmd_build_index(args) -> None:
    import numpy as np
    from io import BytesIO

    from .errors import ConfigError
    from .index import IvfParams, build_flat, build_ivf, write_index
    from .vecstore import Split, read_embeddings

    out = _resolve_out(args, "index.givf")
    record_ids = None
    if args.bundle is not None:
        bundle_matrix, manifest = _load_bundle(args.bundle)
        matrix = read_embeddings(args.embeddings) if args.embeddings else bundle_matrix
        if args.split is not None:
            records = sorted(manifest.by_split(Split(args.split)), key=lambda r: r.row)
            if not records:
                raise ConfigError(f"split {args.split!r} has no records")
            rows = np.array([r.row for r in records], dtype=np.int64)
            record_ids = [r.id for r in records]
        else:
            records = sorted(manifest.records, key=lambda r: r.row)
            rows = np.array([r.row for r in records], dtype=np.int64)
            record_ids = [r.id for r in records]
    elif args.embeddings is not None:
        if args.split is not None:
            raise ConfigError("--split needs --bundle")
        matrix = read_embeddings(args.embeddings)
        rows = np.arange(matrix.count, dtype=np.int64)
    else:
        raise ConfigError("pass --embeddings and/or --bundle")

    metric = _metric_from_name(args.metric)
    if args.type == "flat":
        index = build_flat(matrix, rows, metric, record_ids)
    else:
        params = IvfParams(
            nlist=args.nlist,
            nprobe=args.nprobe,
            max_iterations=args.max_iterations,
            seed=args.seed,
        )
        index = build_ivf(matrix, rows, metric, params, record_ids)
        sizes = index.list_sizes()
        _info(
            args,
            f"ivf lists: {len(sizes)} lists over {int(sizes.sum())} rows "
            f"(min {int(sizes.min())} / median {int(np.median(sizes))} / max {int(sizes.max())})",
        )
    buf = BytesIO()
    nbytes = write_index(index, buf)
    _atomic_write_bytes(out, buf.getvalue())
    _info(args, f"index over {len(index)} rows written to {out} ({nbytes} bytes)")


def _cmd_query(args) -> None:
    from .index import read_index
    from .vecstore import read_embeddings

    index = read_index(args.index)
    queries = read_embeddings(args.query)
    from .errors import ValidationError

    if not 0 <= args.query_row < queries.count:
        raise ValidationError(f"query row {args.query_row} out of range [0, {queries.count})")
    result = index.search(queries.row(args.query_row), args.k, args.nprobe)

    if index.record_ids is not None:
        record_of = dict(zip(index.indexed_rows.tolist(), index.record_ids))
    else:
        record_of = {}
    lines = ["rank,row_id,record_id,distance"]
    for rank, (row, dist) in enumerate(result.entries, start=1):
        lines.append(f"{rank},{row},{record_of.get(row, str(row))},{dist:.12g}")
    text = "\n".join(lines) + "\n"
    if args.out is not None or args.output is not None:
        _atomic_write_text(_resolve_out(args, "query.csv"), text)
    else:
        sys.stdout.write(text)


def _cmd_eval(args) -> None:
    from .evalkit import EvalConfig, evaluate
    from .index import IvfParams
    from .vecstore import Split

    out_dir = _resolve_out(args)
    matrix, manifest = _load_bundle(args.bundle)
    compression = None
    if args.method != "none":
        compression = _compression_spec(args.method, args.bits, args.seed)
    index_params = None
    if args.index == "ivf":
        index_params = IvfParams(nlist=args.nlist, nprobe=args.nprobe, seed=args.seed)
    config = EvalConfig(
        k=args.k,
        metric=_metric_from_name(args.metric),
        query_split=Split(args.query_split),
        db_split=Split(args.db_split),
        compression=compression,
        index=index_params,
    )
    report = evaluate(matrix, manifest, config)
    out_dir.mkdir(parents=True, exist_ok=True)
    _atomic_write_text(out_dir / "eval.json", report.to_json())
    _atomic_write_text(out_dir / "per_query.csv", report.per_query_csv())
    _info(args, f"reports written to {out_dir}")
    print(f"mAP@{args.k} = {report.map_at_k:.6f}")


def _cmd_bench(args) -> None:
    from .benchkit import BenchConfig, BenchVariant, emit_report, run_bench
    from .errors import ConfigError
    from .index import IvfParams

    out_dir = _resolve_out(args)
    try:
        sizes = tuple(int(s) for s in args.sizes.split(",") if s)
    except ValueError:
        raise ConfigError(f"bad --sizes {args.sizes!r}") from None
    variants = tuple(BenchVariant.parse(v) for v in args.variants.split(",") if v)
    config = BenchConfig(
        db_sizes=sizes,
        variants=variants,
        queries_per_size=args.queries,
        repeats=args.repeats,
        warmup=args.warmup,
        index=IvfParams(nlist=args.nlist, nprobe=args.nprobe, seed=args.seed),
        k=args.k,
        seed=args.seed,
    )
    report = run_bench(config, progress=None if args.quiet else lambda m: print(m, file=sys.stderr))
    out_dir.mkdir(parents=True, exist_ok=True)
    _atomic_write_text(out_dir / "bench.csv", emit_report(report, "csv"))
    text = emit_report(report, "text")
    _atomic_write_text(out_dir / "bench.txt", text)
    print(text, end="")


def _cmd_synth(args) -> None:
    from io import BytesIO, StringIO

    from .benchkit import generate_synthetic
    from .vecstore import save_manifest, write_embeddings

    out_dir = _resolve_out(args)
    matrix, manifest = generate_synthetic(
        count=args.count,
        dim=args.dim,
        num_classes=args.classes,
        cluster_spread=args.spread,
        seed=args.seed,
    )
    buf = BytesIO()
    write_embeddings(matrix, buf)
    records_buf, vocab_buf = StringIO(), StringIO()
    save_manifest(manifest, records_buf, vocab_buf)
    _write_bundle(out_dir, buf.getvalue(), records_buf.getvalue(), vocab_buf.getvalue())
    _info(args, f"{_split_counts(manifest)}, {args.classes} classes, spread {args.spread}")
    _info(args, f"bundle written to {out_dir}")


_HANDLERS = {
    "ingest": _cmd_ingest,
    "compress": _cmd_compress,
    "build-index": _cmd_build_index,
    "query": _cmd_query,
    "eval": _cmd_eval,
    "bench": _cmd_bench,
    "synth": _cmd_synth,
}


if __name__ == "__main__":
    sys.exit(main())
