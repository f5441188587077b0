"""Embedding extraction: run an encoder over patches, emit GEMB + manifest.

Rows in the GEMB file follow the input record order exactly, and the
manifest's `row` field indexes those rows, so the retrieval engine can
ingest the pair without further alignment. `stub_extract` produces seeded
random embeddings in the identical formats, which keeps the downstream
pipeline runnable with no model weights or datasets at hand.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .config import ExtractorConfig
from .formats import PatchRecord, write_gemb, write_manifest, write_vocabulary
from .preprocess import preprocess


class ExtractionError(RuntimeError):
    """Inference failed for a specific record."""


def _load_patch(path: Path) -> tuple[np.ndarray, list[str]]:
    """Load one patch: `.npz` with `bands`/`band_names`, or a bare `.npy`.

    A bare array uses positional band names `band0..bandN-1`.
    """
    path = Path(path)
    if path.suffix == ".npz":
        archive = np.load(path)
        bands = archive["bands"]
        names = [str(n) for n in archive["band_names"]]
        return bands, names
    bands = np.load(path)
    return bands, [f"band{i}" for i in range(bands.shape[0])]


def extract(
    records: Sequence[PatchRecord],
    config: ExtractorConfig,
    encoder=None,
) -> np.ndarray:
    """Embed every record and write the GEMB/manifest/vocabulary triple.

    `encoder` defaults to the configured pretrained model; tests inject a
    lightweight stand-in with the same `encode` contract. Returns the
    embedding matrix that was written.
    """
    config.validate()
    if encoder is None:
        from .encoder import build_encoder

        encoder = build_encoder(config)
    if config.vocabulary_path is None:
        raise ValueError("config.vocabulary_path is required for extraction")
    vocabulary = json.loads(Path(config.vocabulary_path).read_text())

    out = np.empty((len(records), encoder.embed_dim), dtype=np.float32)
    batch_inputs = []
    batch_ids = []
    cursor = 0

    def flush():
        nonlocal cursor
        if not batch_inputs:
            return
        stacked = np.stack(batch_inputs)
        try:
            vectors = encoder.encode(stacked)
        except Exception as exc:
            raise ExtractionError(
                f"inference failed on records {batch_ids[0]}..{batch_ids[-1]}: {exc}"
            ) from exc
        out[cursor : cursor + vectors.shape[0]] = vectors
        cursor += vectors.shape[0]
        batch_inputs.clear()
        batch_ids.clear()

    for record in records:
        try:
            bands, names = _load_patch(Path(record.patch))
            batch_inputs.append(preprocess(bands, names, config))
        except ExtractionError:
            raise
        except Exception as exc:
            raise ExtractionError(f"record {record.id!r}: {exc}") from exc
        batch_ids.append(record.id)
        if len(batch_inputs) >= config.batch_size:
            flush()
    flush()

    write_gemb(out, config.out_embeddings)
    write_manifest(records, config.out_manifest)
    write_vocabulary(vocabulary, config.out_vocabulary)
    return out


def make_stub_records(count: int, num_classes: int, seed: int) -> tuple[list[PatchRecord], list[str]]:
    """Deterministic synthetic records with singleton labels and 60/20/20 splits."""
    rng = np.random.Generator(np.random.PCG64(seed))
    cycle = ("train", "train", "train", "val", "test")
    records = []
    for i in range(count):
        records.append(
            PatchRecord(
                id=f"stub-{i:06d}",
                patch=f"stub://{i}",
                split=cycle[(i // max(num_classes, 1)) % len(cycle)],
                labels=(int(rng.integers(num_classes)),),
            )
        )
    vocabulary = [f"class_{c:03d}" for c in range(num_classes)]
    return records, vocabulary


def stub_extract(
    records: Sequence[PatchRecord],
    dim: int,
    seed: int,
    out_embeddings: Path,
    out_manifest: Path,
    out_vocabulary: Path,
    vocabulary: Optional[Sequence[str]] = None,
) -> np.ndarray:
    """Seeded random embeddings in the exact engine formats, no model needed."""
    rng = np.random.Generator(np.random.PCG64(seed))
    values = rng.standard_normal((len(records), dim)).astype(np.float32)
    if vocabulary is None:
        top = max((max(r.labels) for r in records), default=-1)
        vocabulary = [f"class_{c:03d}" for c in range(top + 1)]
    write_gemb(values, out_embeddings)
    write_manifest(records, out_manifest)
    write_vocabulary(vocabulary, out_vocabulary)
    return values
