"""GEMB/manifest emission matches the engine's documented framing."""
import json
import struct

import numpy as np
import pytest

from geoextract.formats import PatchRecord, load_records, write_gemb, write_manifest, write_vocabulary


def test_gemb_header_layout(tmp_path):
    values = np.arange(12, dtype=np.float32).reshape(3, 4)
    out = tmp_path / "m.gemb"
    nbytes = write_gemb(values, out)
    raw = out.read_bytes()
    assert nbytes == len(raw) == 20 + 48
    magic, version, dtype, reserved, count, dim = struct.unpack("<4sHBBQI", raw[:20])
    assert magic == b"GEMB"
    assert (version, dtype, reserved) == (1, 0, 0)
    assert (count, dim) == (3, 4)
    assert np.array_equal(np.frombuffer(raw[20:], dtype="<f4").reshape(3, 4), values)


def test_gemb_rejects_non_finite(tmp_path):
    values = np.zeros((1, 4), dtype=np.float32)
    values[0, 1] = np.inf
    with pytest.raises(ValueError, match="non-finite"):
        write_gemb(values, tmp_path / "bad.gemb")


def test_manifest_rows_follow_list_order(tmp_path):
    records = [
        PatchRecord("b", "p1.npz", "val", (2,)),
        PatchRecord("a", "p0.npz", "test", (0, 1)),
    ]
    out = tmp_path / "manifest.jsonl"
    write_manifest(records, out)
    lines = [json.loads(l) for l in out.read_text().splitlines()]
    assert lines[0] == {"id": "b", "row": 0, "split": "val", "labels": [2]}
    assert lines[1] == {"id": "a", "row": 1, "split": "test", "labels": [0, 1]}


def test_vocabulary_roundtrip(tmp_path):
    out = tmp_path / "vocab.json"
    write_vocabulary(["water", "forest"], out)
    assert json.loads(out.read_text()) == ["water", "forest"]


def test_record_validation():
    with pytest.raises(ValueError, match="split"):
        PatchRecord("x", "p.npz", "validation", (0,))
    with pytest.raises(ValueError, match="label"):
        PatchRecord("x", "p.npz", "val", ())


def test_load_records_roundtrip(tmp_path):
    records = [PatchRecord(f"r{i}", f"p{i}.npz", "train", (i,)) for i in range(4)]
    path = tmp_path / "records.jsonl"
    path.write_text(
        "\n".join(
            json.dumps({"id": r.id, "patch": r.patch, "split": r.split, "labels": list(r.labels)})
            for r in records
        )
    )
    assert load_records(path) == records


def test_load_records_missing_field(tmp_path):
    path = tmp_path / "records.jsonl"
    path.write_text(json.dumps({"id": "x", "split": "val", "labels": [0]}))
    with pytest.raises(ValueError, match="patch"):
        load_records(path)
