"""Vision-transformer encoders and checkpoint loading.

One ViT implementation covers all supported models; it follows the usual
MAE-style naming (cls_token, pos_embed, patch_embed.proj, blocks.N.{norm1,
attn.qkv, attn.proj, norm2, mlp.fc1, mlp.fc2}, norm) so released encoder
checkpoints load by name. Multi-frame geospatial checkpoints store a 3-D
patch embedding; single-frame inference reuses its depth-1 kernel and the
leading positional embeddings.

torch imports stay inside this module so the stub extraction path works on
hosts without torch.
"""
from __future__ import annotations

from pathlib import Path
from typing import Optional

import numpy as np

from .config import WEIGHT_SOURCES, ExtractorConfig, ModelKind, Pooling


class WeightsNotFoundError(FileNotFoundError):
    """Raised when the configured checkpoint file is absent."""


class EncoderError(RuntimeError):
    """Raised when a checkpoint does not match the model architecture."""


def _torch():
    import torch

    return torch


def _build_vit(torch, in_chans: int, input_size: int, temporal_patch: bool):
    import torch.nn as nn

    embed_dim, depth, heads = 768, 12, 12
    patch = 16
    tokens_per_side = input_size // patch

    class Attention(nn.Module):
        def __init__(self):
            super().__init__()
            self.qkv = nn.Linear(embed_dim, embed_dim * 3, bias=True)
            self.proj = nn.Linear(embed_dim, embed_dim)
            self.scale = (embed_dim // heads) ** -0.5

        def forward(self, x):
            b, n, d = x.shape
            qkv = self.qkv(x).reshape(b, n, 3, heads, d // heads).permute(2, 0, 3, 1, 4)
            q, k, v = qkv[0], qkv[1], qkv[2]
            attn = (q @ k.transpose(-2, -1)) * self.scale
            attn = attn.softmax(dim=-1)
            out = (attn @ v).transpose(1, 2).reshape(b, n, d)
            return self.proj(out)

    class Mlp(nn.Module):
        def __init__(self):
            super().__init__()
            self.fc1 = nn.Linear(embed_dim, embed_dim * 4)
            self.act = nn.GELU()
            self.fc2 = nn.Linear(embed_dim * 4, embed_dim)

        def forward(self, x):
            return self.fc2(self.act(self.fc1(x)))

    class Block(nn.Module):
        def __init__(self):
            super().__init__()
            self.norm1 = nn.LayerNorm(embed_dim, eps=1e-6)
            self.attn = Attention()
            self.norm2 = nn.LayerNorm(embed_dim, eps=1e-6)
            self.mlp = Mlp()

        def forward(self, x):
            x = x + self.attn(self.norm1(x))
            return x + self.mlp(self.norm2(x))

    class PatchEmbed(nn.Module):
        def __init__(self):
            super().__init__()
            if temporal_patch:
                self.proj = nn.Conv3d(
                    in_chans, embed_dim, kernel_size=(1, patch, patch), stride=(1, patch, patch)
                )
            else:
                self.proj = nn.Conv2d(in_chans, embed_dim, kernel_size=patch, stride=patch)

        def forward(self, x):
            if temporal_patch:
                x = self.proj(x.unsqueeze(2))  # (B, D, 1, h, w)
                return x.flatten(2).transpose(1, 2)
            x = self.proj(x)  # (B, D, h, w)
            return x.flatten(2).transpose(1, 2)

    class ViT(nn.Module):
        def __init__(self):
            super().__init__()
            n_tokens = tokens_per_side * tokens_per_side
            self.patch_embed = PatchEmbed()
            self.cls_token = nn.Parameter(torch.zeros(1, 1, embed_dim))
            self.pos_embed = nn.Parameter(torch.zeros(1, n_tokens + 1, embed_dim))
            self.blocks = nn.ModuleList([Block() for _ in range(depth)])
            self.norm = nn.LayerNorm(embed_dim, eps=1e-6)

        def forward(self, x):
            tokens = self.patch_embed(x)
            cls = self.cls_token.expand(tokens.shape[0], -1, -1)
            x = torch.cat([cls, tokens], dim=1) + self.pos_embed
            for block in self.blocks:
                x = block(x)
            return self.norm(x)  # (B, 1 + N, D)

    return ViT()


def _clean_state_dict(raw: dict, n_pos_tokens: int, torch) -> dict:
    """Strip wrapper prefixes, drop decoder weights, trim positional embeds."""
    if "model" in raw and isinstance(raw["model"], dict):
        raw = raw["model"]
    if "state_dict" in raw and isinstance(raw["state_dict"], dict):
        raw = raw["state_dict"]
    cleaned = {}
    for key, value in raw.items():
        for prefix in ("module.", "encoder.", "backbone."):
            if key.startswith(prefix):
                key = key[len(prefix):]
        if key.startswith(("decoder", "mask_token")):
            continue
        cleaned[key] = value
    pos = cleaned.get("pos_embed")
    if pos is not None and pos.shape[1] > n_pos_tokens:
        # multi-frame checkpoints carry one grid per frame; keep the first
        cleaned["pos_embed"] = torch.cat([pos[:, :1], pos[:, 1:n_pos_tokens]], dim=1)
    return cleaned


class TorchViTEncoder:
    """Frozen ViT encoder producing one pooled 768-dim vector per patch."""

    embed_dim = 768

    def __init__(self, model, pooling: Pooling, input_size: int, channels: int):
        torch = _torch()
        self.pooling = pooling
        self.input_size = input_size
        self.channels = channels
        self._model = model.eval()
        for p in self._model.parameters():
            p.requires_grad_(False)
        self._torch = torch

    def encode(self, batch: np.ndarray) -> np.ndarray:
        torch = self._torch
        if batch.ndim != 4 or batch.shape[1] != self.channels:
            raise EncoderError(
                f"expected a (B, {self.channels}, S, S) batch, got shape {batch.shape}"
            )
        with torch.no_grad():
            tokens = self._model(torch.from_numpy(np.ascontiguousarray(batch, dtype=np.float32)))
            if self.pooling is Pooling.MEAN_TOKENS:
                pooled = tokens[:, 1:].mean(dim=1)
            else:
                pooled = tokens[:, 0]
        return pooled.cpu().numpy().astype(np.float32)


def build_encoder(config: ExtractorConfig) -> TorchViTEncoder:
    """Construct the configured model and load its checkpoint.

    Raises :class:`WeightsNotFoundError` with download instructions when the
    checkpoint file is missing, and :class:`EncoderError` when it does not
    fit the architecture.
    """
    if config.weights is None or not Path(config.weights).exists():
        source = WEIGHT_SOURCES[config.model]
        raise WeightsNotFoundError(
            f"checkpoint for {config.model.value} not found at {config.weights}; "
            f"download it from {source} and set `weights:` in the run config"
        )
    torch = _torch()
    channels = len(config.channels)
    size = config.resolved_input_size
    temporal = config.model in (ModelKind.PRITHVI_100M, ModelKind.PRITHVI_100M_RGB)
    model = _build_vit(torch, channels, size, temporal)
    raw = torch.load(config.weights, map_location="cpu")
    n_pos = (size // 16) ** 2 + 1
    state = _clean_state_dict(raw, n_pos, torch)
    missing, unexpected = model.load_state_dict(state, strict=False)
    if missing:
        raise EncoderError(
            f"checkpoint at {config.weights} lacks encoder weights: {sorted(missing)[:6]}..."
        )
    if unexpected:
        # tolerated: heads and training-only buffers
        pass
    return TorchViTEncoder(model, config.pooling, size, channels)
