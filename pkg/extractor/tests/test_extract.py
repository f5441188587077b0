"""Stub extraction, the engine format contract, and the full CLI round trip."""
import json
import subprocess
import sys

import numpy as np
import pytest

from geoextract.config import ExtractorConfig, ModelKind
from geoextract.extract import ExtractionError, extract, make_stub_records, stub_extract
from geoextract.formats import PatchRecord


def geovec(*argv):
    """Invoke the retrieval engine's CLI; the only allowed coupling."""
    return subprocess.run(
        [sys.executable, "-m", "geovec.cli", *map(str, argv)],
        capture_output=True,
        text=True,
    )


def write_stub(tmp_path, count=120, dim=96, classes=6, seed=3):
    records, vocabulary = make_stub_records(count, classes, seed)
    out = tmp_path / "extracted"
    stub_extract(
        records,
        dim=dim,
        seed=seed,
        out_embeddings=out / "embeddings.gemb",
        out_manifest=out / "manifest.jsonl",
        out_vocabulary=out / "vocabulary.json",
        vocabulary=vocabulary,
    )
    return out


class TestStubExtract:
    def test_deterministic_per_seed(self, tmp_path):
        a = write_stub(tmp_path / "a", seed=5)
        b = write_stub(tmp_path / "b", seed=5)
        assert (a / "embeddings.gemb").read_bytes() == (b / "embeddings.gemb").read_bytes()
        assert (a / "manifest.jsonl").read_text() == (b / "manifest.jsonl").read_text()

    def test_different_seeds_share_header_only(self, tmp_path):
        a = (write_stub(tmp_path / "a", seed=1) / "embeddings.gemb").read_bytes()
        b = (write_stub(tmp_path / "b", seed=2) / "embeddings.gemb").read_bytes()
        assert a[:20] == b[:20]
        assert a[20:] != b[20:]

    def test_splits_cover_every_class(self, tmp_path):
        records, _ = make_stub_records(300, 5, seed=0)
        for split in ("train", "val", "test"):
            labels = {r.labels[0] for r in records if r.split == split}
            assert labels == set(range(5))

    def test_cli_stub_subcommand(self, tmp_path):
        result = subprocess.run(
            [sys.executable, "-m", "geoextract", "stub", "--count", "50", "--dim", "32",
             "--classes", "4", "--seed", "9", "--out", str(tmp_path / "s")],
            capture_output=True,
            text=True,
        )
        assert result.returncode == 0, result.stderr
        assert (tmp_path / "s" / "embeddings.gemb").exists()


class TestEngineContract:
    def test_stub_output_passes_engine_ingest(self, tmp_path):
        out = write_stub(tmp_path)
        result = geovec(
            "ingest",
            "--embeddings", out / "embeddings.gemb",
            "--manifest", out / "manifest.jsonl",
            "--vocab", out / "vocabulary.json",
            "--out", tmp_path / "bundle",
        )
        assert result.returncode == 0, result.stderr
        assert "120 records" in result.stderr

    def test_full_round_trip_without_weights(self, tmp_path):
        """stub extract -> ingest -> compress -> index -> eval, engine CLI only."""
        out = write_stub(tmp_path, count=200, dim=96, classes=6, seed=11)
        bundle = tmp_path / "bundle"
        assert geovec(
            "ingest", "--embeddings", out / "embeddings.gemb",
            "--manifest", out / "manifest.jsonl",
            "--vocab", out / "vocabulary.json", "--out", bundle,
        ).returncode == 0

        codes = tmp_path / "codes.gemb"
        assert geovec(
            "compress", "--bundle", bundle, "--method", "trivial-hash",
            "--bits", "32", "--out", codes,
        ).returncode == 0

        index = tmp_path / "index.givf"
        assert geovec(
            "--seed", "4", "build-index", "--embeddings", codes, "--bundle", bundle,
            "--split", "test", "--metric", "hamming", "--nlist", "4", "--nprobe", "4",
            "--out", index,
        ).returncode == 0

        reports = tmp_path / "eval"
        result = geovec(
            "--seed", "4", "eval", "--bundle", bundle, "--method", "trivial-hash",
            "--bits", "32", "--metric", "hamming", "--k", "10", "--out", reports,
        )
        assert result.returncode == 0, result.stderr
        aggregate = json.loads((reports / "eval.json").read_text())
        assert 0.0 <= aggregate["map_at_k"] <= 1.0


class FakeEncoder:
    """Test double honoring the encoder contract: (B, C, S, S) -> (B, D)."""

    embed_dim = 768

    def __init__(self, channels, input_size):
        self.channels = channels
        self.input_size = input_size

    def encode(self, batch):
        flat = batch.reshape(batch.shape[0], -1).astype(np.float64)
        rng = np.random.default_rng(0)
        mix = rng.standard_normal((flat.shape[1], self.embed_dim))
        return (flat @ mix).astype(np.float32)


RGB_POLICY = {
    "blue": "B02", "green": "B03", "red": "B04",
    "nir_narrow": "mean", "swir_1": "mean", "swir_2": "mean",
}


def extraction_config(tmp_path, **overrides):
    defaults = dict(
        model=ModelKind.PRITHVI_100M,
        band_policy=dict(RGB_POLICY),
        mean=(100.0, 200.0, 300.0, 400.0, 500.0, 600.0),
        std=(10.0, 20.0, 30.0, 40.0, 50.0, 60.0),
        vocabulary_path=tmp_path / "vocab.json",
        out_embeddings=tmp_path / "out" / "embeddings.gemb",
        out_manifest=tmp_path / "out" / "manifest.jsonl",
        out_vocabulary=tmp_path / "out" / "vocabulary.json",
        input_size=32,
        batch_size=4,
    )
    defaults.update(overrides)
    return ExtractorConfig(**defaults)


def make_patches(tmp_path, count, size=24, bands=("B02", "B03", "B04"), seed=0):
    rng = np.random.default_rng(seed)
    records = []
    for i in range(count):
        path = tmp_path / f"patch{i:03d}.npz"
        np.savez(
            path,
            bands=rng.uniform(0, 1000, size=(len(bands), size, size)),
            band_names=np.array(bands),
        )
        records.append(
            PatchRecord(f"patch-{i:03d}", str(path), ("train", "val", "test")[i % 3], (i % 2,))
        )
    return records


class TestExtractWithInjectedEncoder:
    def test_noise_patches_produce_ingestible_files(self, tmp_path):
        records = make_patches(tmp_path, 10)
        config = extraction_config(tmp_path)
        (tmp_path / "vocab.json").write_text(json.dumps(["a", "b"]))
        matrix = extract(records, config, encoder=FakeEncoder(6, 32))
        assert matrix.shape == (10, 768)
        result = geovec(
            "ingest", "--embeddings", config.out_embeddings,
            "--manifest", config.out_manifest,
            "--vocab", config.out_vocabulary,
            "--out", tmp_path / "bundle",
        )
        assert result.returncode == 0, result.stderr

    def test_row_order_follows_records(self, tmp_path):
        records = make_patches(tmp_path, 6)
        config = extraction_config(tmp_path)
        (tmp_path / "vocab.json").write_text(json.dumps(["a", "b"]))
        extract(records, config, encoder=FakeEncoder(6, 32))
        lines = [json.loads(l) for l in config.out_manifest.read_text().splitlines()]
        assert [l["id"] for l in lines] == [r.id for r in records]
        assert [l["row"] for l in lines] == list(range(6))

    def test_batching_does_not_change_output(self, tmp_path):
        records = make_patches(tmp_path, 7)
        (tmp_path / "vocab.json").write_text(json.dumps(["a", "b"]))
        one = extract(records, extraction_config(tmp_path, batch_size=1), encoder=FakeEncoder(6, 32))
        big = extract(records, extraction_config(tmp_path, batch_size=5), encoder=FakeEncoder(6, 32))
        assert np.array_equal(one, big)

    def test_failed_record_named(self, tmp_path):
        records = make_patches(tmp_path, 3)
        records[1] = PatchRecord("broken", str(tmp_path / "missing.npz"), "val", (0,))
        config = extraction_config(tmp_path)
        (tmp_path / "vocab.json").write_text(json.dumps(["a", "b"]))
        with pytest.raises(ExtractionError, match="broken"):
            extract(records, config, encoder=FakeEncoder(6, 32))


class TestRealEncoderPath:
    def test_missing_weights_is_actionable(self, tmp_path):
        from geoextract.encoder import WeightsNotFoundError, build_encoder

        config = extraction_config(tmp_path, weights=tmp_path / "nope.pt")
        with pytest.raises(WeightsNotFoundError, match="huggingface"):
            build_encoder(config)

    def test_vit_forward_shapes_and_pooling(self):
        torch = pytest.importorskip("torch")
        from geoextract.config import Pooling
        from geoextract.encoder import TorchViTEncoder, _build_vit

        torch.manual_seed(0)
        model = _build_vit(torch, in_chans=6, input_size=32, temporal_patch=True)
        encoder = TorchViTEncoder(model, Pooling.MEAN_TOKENS, input_size=32, channels=6)
        batch = np.random.default_rng(1).standard_normal((2, 6, 32, 32)).astype(np.float32)
        out = encoder.encode(batch)
        assert out.shape == (2, 768)
        # deterministic in eval mode
        assert np.array_equal(out, encoder.encode(batch))
        cls_encoder = TorchViTEncoder(model, Pooling.CLS_TOKEN, input_size=32, channels=6)
        assert not np.array_equal(out, cls_encoder.encode(batch))
