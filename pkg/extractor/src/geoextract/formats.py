"""Writers for the retrieval engine's on-disk contract.

The engine consumes `.gemb` embedding files, JSONL manifests and a JSON
vocabulary; this module emits them byte-compatibly without importing the
engine. GEMB framing: little-endian magic "GEMB", version u16 = 1, dtype u8
(0 = float32), reserved u8 = 0, count u64, dim u32, then the row-major
float32 payload.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

_HEADER = struct.Struct("<4sHBBQI")
_SPLITS = ("train", "val", "test")


@dataclass(frozen=True)
class PatchRecord:
    """One image patch to embed: identity, source raster, split, labels."""

    id: str
    patch: str
    split: str
    labels: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.split not in _SPLITS:
            raise ValueError(f"record {self.id!r}: unknown split {self.split!r}")
        if not self.labels:
            raise ValueError(f"record {self.id!r}: empty label set")


def write_gemb(values: np.ndarray, destination: Path) -> int:
    """Write a float32 matrix as a GEMB file; returns bytes written."""
    values = np.ascontiguousarray(values, dtype=np.float32)
    if values.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {values.shape}")
    if not np.all(np.isfinite(values)):
        raise ValueError("embeddings contain non-finite values")
    header = _HEADER.pack(b"GEMB", 1, 0, 0, values.shape[0], values.shape[1])
    payload = values.tobytes()
    destination = Path(destination)
    destination.parent.mkdir(parents=True, exist_ok=True)
    destination.write_bytes(header + payload)
    return len(header) + len(payload)


def write_manifest(records: Sequence[PatchRecord], destination: Path) -> None:
    """One JSON object per line, row index equal to list position."""
    lines = [
        json.dumps(
            {"id": rec.id, "row": row, "split": rec.split, "labels": sorted(rec.labels)},
            separators=(",", ":"),
        )
        for row, rec in enumerate(records)
    ]
    destination = Path(destination)
    destination.parent.mkdir(parents=True, exist_ok=True)
    destination.write_text("\n".join(lines) + ("\n" if lines else ""))


def write_vocabulary(names: Sequence[str], destination: Path) -> None:
    destination = Path(destination)
    destination.parent.mkdir(parents=True, exist_ok=True)
    destination.write_text(json.dumps(list(names), indent=0) + "\n")


def load_records(path: Path) -> list[PatchRecord]:
    """Parse a records JSONL file (fields id / patch / split / labels)."""
    records = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        obj = json.loads(line)
        missing = {"id", "patch", "split", "labels"} - obj.keys()
        if missing:
            raise ValueError(f"records line {lineno}: missing fields {sorted(missing)}")
        records.append(
            PatchRecord(
                id=str(obj["id"]),
                patch=str(obj["patch"]),
                split=str(obj["split"]),
                labels=tuple(int(x) for x in obj["labels"]),
            )
        )
    return records
