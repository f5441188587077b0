"""Patch preprocessing: band selection with mean-fill, bilinear resize, z-score.

A patch arrives as a `(bands, H, W)` float array plus the names of those
bands. The band policy picks one source band per model channel (or the
"mean" sentinel, which fills the channel with its normalization mean so it
lands at exactly zero after standardization). Patches are then bilinearly
resized to the model input resolution and normalized with the model's
pre-training channel statistics.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .config import MEAN_FILL, ConfigError, ExtractorConfig


def bilinear_resize(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Channelwise bilinear resample of a `(C, H, W)` array.

    Uses half-pixel-center sampling with edge clamping. Resizing to the
    source resolution returns the input values unchanged.
    """
    channels, in_h, in_w = image.shape
    if (in_h, in_w) == (out_h, out_w):
        return image.astype(np.float64, copy=True)
    ys = (np.arange(out_h, dtype=np.float64) + 0.5) * (in_h / out_h) - 0.5
    xs = (np.arange(out_w, dtype=np.float64) + 0.5) * (in_w / out_w) - 0.5
    y0 = np.clip(np.floor(ys), 0, in_h - 1).astype(np.int64)
    x0 = np.clip(np.floor(xs), 0, in_w - 1).astype(np.int64)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    wy = np.clip(ys - y0, 0.0, 1.0)[None, :, None]
    wx = np.clip(xs - x0, 0.0, 1.0)[None, None, :]
    img = image.astype(np.float64)
    top = img[:, y0][:, :, x0] * (1 - wx) + img[:, y0][:, :, x1] * wx
    bottom = img[:, y1][:, :, x0] * (1 - wx) + img[:, y1][:, :, x1] * wx
    return top * (1 - wy) + bottom * wy


def select_bands(
    patch: np.ndarray,
    band_names: Sequence[str],
    config: ExtractorConfig,
) -> np.ndarray:
    """Arrange patch bands into model channel order, mean-filling as asked."""
    if patch.ndim != 3:
        raise ConfigError(f"patch must be (bands, H, W), got shape {patch.shape}")
    if patch.shape[0] != len(band_names):
        raise ConfigError(
            f"patch has {patch.shape[0]} bands but {len(band_names)} names were given"
        )
    by_name = {name: patch[i] for i, name in enumerate(band_names)}
    _, h, w = patch.shape
    out = np.empty((len(config.channels), h, w), dtype=np.float64)
    for ci, channel in enumerate(config.channels):
        source = config.band_policy[channel]
        if source == MEAN_FILL:
            out[ci] = config.mean[ci]
        elif source in by_name:
            out[ci] = by_name[source]
        else:
            raise ConfigError(
                f"band policy maps channel {channel!r} to {source!r}, "
                f"which the patch does not provide (has {sorted(by_name)})"
            )
    return out


def preprocess(
    patch: np.ndarray,
    band_names: Sequence[str],
    config: ExtractorConfig,
) -> np.ndarray:
    """Full pipeline: bands -> resize -> standardize; returns `(C, S, S)` float32."""
    config.validate()
    arranged = select_bands(patch, band_names, config)
    size = config.resolved_input_size
    resized = bilinear_resize(arranged, size, size)
    mean = np.asarray(config.mean, dtype=np.float64)[:, None, None]
    std = np.asarray(config.std, dtype=np.float64)[:, None, None]
    return ((resized - mean) / std).astype(np.float32)
