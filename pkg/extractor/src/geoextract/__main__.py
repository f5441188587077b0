"""The `geoextract` command: real extraction runs and the weight-free stub path."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="geoextract",
        description="Embed multispectral image patches with pretrained geospatial encoders.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="embed a dataset with a pretrained model")
    p.add_argument("--config", type=Path, required=True, help="YAML run configuration")

    p = sub.add_parser("stub", help="emit seeded random embeddings, no weights needed")
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--dim", type=int, default=768)
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True, help="output directory")

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "stub":
        from .extract import make_stub_records, stub_extract

        records, vocabulary = make_stub_records(args.count, args.classes, args.seed)
        out = args.out
        stub_extract(
            records,
            dim=args.dim,
            seed=args.seed,
            out_embeddings=out / "embeddings.gemb",
            out_manifest=out / "manifest.jsonl",
            out_vocabulary=out / "vocabulary.json",
            vocabulary=vocabulary,
        )
        print(f"wrote {args.count} stub embeddings (dim {args.dim}) to {out}", file=sys.stderr)
        return 0

    from .config import ConfigError, load_config
    from .encoder import EncoderError, WeightsNotFoundError
    from .extract import ExtractionError, extract
    from .formats import load_records

    try:
        config = load_config(args.config)
        records = load_records(config.records_path)
        matrix = extract(records, config)
    except (ConfigError, WeightsNotFoundError, EncoderError, ExtractionError, OSError) as exc:
        print(f"geoextract run: error: {exc}", file=sys.stderr)
        return 1
    print(
        f"wrote {matrix.shape[0]} embeddings (dim {matrix.shape[1]}) to {config.out_embeddings}",
        file=sys.stderr,
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
