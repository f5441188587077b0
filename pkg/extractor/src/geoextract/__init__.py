"""Offline embedding extraction for the geovec retrieval engine.

Runs pretrained geospatial encoders (Prithvi-100M, SatMAE ViT-B, and RGB
baselines) over multispectral image patches and emits `.gemb` embeddings
plus a JSONL manifest in the engine's exact on-disk formats. A seeded stub
path produces format-identical output with no weights or datasets, keeping
the downstream pipeline testable anywhere.
"""

from .config import ExtractorConfig, ModelKind, Pooling, load_config
from .extract import extract, make_stub_records, stub_extract
from .formats import PatchRecord, load_records, write_gemb, write_manifest, write_vocabulary
from .preprocess import bilinear_resize, preprocess, select_bands

__version__ = "0.1.0"

__all__ = [
    "ExtractorConfig",
    "ModelKind",
    "PatchRecord",
    "Pooling",
    "bilinear_resize",
    "extract",
    "load_config",
    "load_records",
    "make_stub_records",
    "preprocess",
    "select_bands",
    "stub_extract",
    "write_gemb",
    "write_manifest",
    "write_vocabulary",
    "__version__",
]
