"""Extractor configuration: model choice, band policy, normalization, paths."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml

MEAN_FILL = "mean"  # band-policy sentinel: fill the channel with its dataset-free mean


class ModelKind(enum.Enum):
    PRITHVI_100M = "prithvi-100m"
    SATMAE_VIT_B = "satmae-vit-b"
    PRITHVI_100M_RGB = "prithvi-100m-rgb"
    VIT_B16_RGB = "vit-b16-rgb"


class Pooling(enum.Enum):
    MEAN_TOKENS = "mean-tokens"
    CLS_TOKEN = "cls-token"


# model input channels, in order, and the native input resolution
MODEL_CHANNELS = {
    ModelKind.PRITHVI_100M: ("blue", "green", "red", "nir_narrow", "swir_1", "swir_2"),
    ModelKind.PRITHVI_100M_RGB: ("blue", "green", "red", "nir_narrow", "swir_1", "swir_2"),
    ModelKind.SATMAE_VIT_B: ("b2", "b3", "b4", "b5", "b6", "b7", "b8", "b8a", "b11", "b12"),
    ModelKind.VIT_B16_RGB: ("red", "green", "blue"),
}
MODEL_INPUT_SIZE = {
    ModelKind.PRITHVI_100M: 224,
    ModelKind.PRITHVI_100M_RGB: 224,
    ModelKind.SATMAE_VIT_B: 96,
    ModelKind.VIT_B16_RGB: 224,
}

WEIGHT_SOURCES = {
    ModelKind.PRITHVI_100M: "https://huggingface.co/ibm-nasa-geospatial/Prithvi-100M (Prithvi_100M.pt)",
    ModelKind.PRITHVI_100M_RGB: "https://huggingface.co/ibm-nasa-geospatial/Prithvi-100M (Prithvi_100M.pt)",
    ModelKind.SATMAE_VIT_B: "https://github.com/sustainlab-group/SatMAE (fMoW-Sentinel ViT-Base checkpoint)",
    ModelKind.VIT_B16_RGB: "torchvision ViT_B_16_Weights.IMAGENET1K_V1 (or any timm vit_base_patch16_224 checkpoint)",
}


class ConfigError(ValueError):
    """The configuration is inconsistent or incomplete."""


@dataclass(frozen=True)
class ExtractorConfig:
    """Full description of one extraction run.

    `band_policy` maps every model input channel to a dataset band name, or
    to the sentinel "mean" to fill the channel with its normalization mean
    (mathematically close to dropping it). It must cover each model channel
    exactly once.
    """

    model: ModelKind
    band_policy: dict[str, str]
    mean: tuple[float, ...]
    std: tuple[float, ...]
    records_path: Optional[Path] = None
    vocabulary_path: Optional[Path] = None
    out_embeddings: Path = Path("out/embeddings.gemb")
    out_manifest: Path = Path("out/manifest.jsonl")
    out_vocabulary: Path = Path("out/vocabulary.json")
    weights: Optional[Path] = None
    pooling: Pooling = Pooling.MEAN_TOKENS
    input_size: Optional[int] = None  # None: the model's native size
    batch_size: int = 8

    @property
    def channels(self) -> tuple[str, ...]:
        return MODEL_CHANNELS[self.model]

    @property
    def resolved_input_size(self) -> int:
        return self.input_size or MODEL_INPUT_SIZE[self.model]

    def validate(self) -> None:
        channels = self.channels
        policy_keys = list(self.band_policy.keys())
        if sorted(policy_keys) != sorted(set(policy_keys)):
            raise ConfigError("band_policy lists a model channel twice")
        missing = [c for c in channels if c not in self.band_policy]
        if missing:
            raise ConfigError(f"band_policy does not cover model channels {missing}")
        extra = [c for c in policy_keys if c not in channels]
        if extra:
            raise ConfigError(f"band_policy names unknown model channels {extra}")
        if len(self.mean) != len(channels) or len(self.std) != len(channels):
            raise ConfigError(
                f"normalization needs {len(channels)} means and stds, "
                f"got {len(self.mean)} and {len(self.std)}"
            )
        if any(s <= 0 for s in self.std):
            raise ConfigError("normalization stds must be positive")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be positive")


def load_config(path: Path) -> ExtractorConfig:
    """Parse the YAML run configuration."""
    raw = yaml.safe_load(Path(path).read_text())
    try:
        model = ModelKind(raw["model"])
        norm = raw["normalization"]
        cfg = ExtractorConfig(
            model=model,
            band_policy={str(k): str(v) for k, v in raw["band_policy"].items()},
            mean=tuple(float(x) for x in norm["mean"]),
            std=tuple(float(x) for x in norm["std"]),
            records_path=Path(raw["dataset"]["records"]),
            vocabulary_path=Path(raw["dataset"]["vocabulary"]),
            out_embeddings=Path(raw["output"]["embeddings"]),
            out_manifest=Path(raw["output"]["manifest"]),
            out_vocabulary=Path(raw["output"]["vocabulary"]),
            weights=Path(raw["weights"]) if raw.get("weights") else None,
            pooling=Pooling(raw.get("pooling", "mean-tokens")),
            input_size=int(raw["input_size"]) if raw.get("input_size") else None,
            batch_size=int(raw.get("batch_size", 8)),
        )
    except KeyError as exc:
        raise ConfigError(f"config is missing {exc}") from None
    cfg.validate()
    return cfg
