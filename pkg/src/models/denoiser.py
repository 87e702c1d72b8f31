#!/usr/bin/env python3
"""
Латентный трансформер-денойзер: D пар чередующихся блоков поверх токенов
(вид × модальность × токен). Предсказывает v для каждой пары (вид, модальность).
"""

from __future__ import annotations

import math
from typing import Any, Dict, List, Sequence

import torch
from torch import nn

from core.config import DiffusionConfig
from core.errors import InvalidInputError
from models.attention import AlternatingBlock
from models.latents import LatentLayout


def timestep_embedding(t: torch.Tensor, width: int) -> torch.Tensor:
    """Синусоидальное вложение t ∈ [0, 1] (масштаб 1000), shape t.shape + (width,)."""
    dtype = t.dtype if t.is_floating_point() else torch.get_default_dtype()
    half = width // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=dtype, device=t.device) / half)
    angles = (t.to(dtype) * 1000.0)[..., None] * freqs
    return torch.cat([torch.cos(angles), torch.sin(angles)], dim=-1)


class MultiViewDenoiser(nn.Module):
    """
    Выход потока m: v̂ = head(h) + g_m(t)·x_t. Скалярное усиление g_m пропускает
    шум x_t мимо узкого токена (one-hot семантика шире width), голова несёт
    остаток, определяемый условиями. Модуляции, головы и усиления стартуют с нуля.
    """

    def __init__(self, config: DiffusionConfig, latent: LatentLayout):
        super().__init__()
        if latent.patch != 4:
            raise InvalidInputError("P latents share the codec grid: patch must be 4")
        self.config = config
        self.latent = latent
        width = config.width
        self.inputs = nn.ModuleList(nn.Linear(c + latent.cond_channels, width) for c in latent.modality_channels())
        self.modality_embed = nn.Parameter(torch.randn(3, width) * 0.02)
        self.pos_embed = nn.Parameter(torch.randn(latent.tokens, width) * 0.02)
        self.time_mlp = nn.Sequential(nn.Linear(width, width), nn.SiLU(), nn.Linear(width, width))
        self.blocks = nn.ModuleList(AlternatingBlock(width, config.heads, config.ff_mult) for _ in range(config.depth))
        self.norm_out = nn.LayerNorm(width, elementwise_affine=False)
        self.modulation_out = nn.Sequential(nn.SiLU(), nn.Linear(width, 2 * width))
        self.heads = nn.ModuleList(nn.Linear(width, c) for c in latent.modality_channels())
        self.skip_gains = nn.ModuleList(nn.Linear(width, 1) for _ in range(3))
        for layer in [self.modulation_out[1], *self.heads, *self.skip_gains]:
            nn.init.zeros_(layer.weight)
            nn.init.zeros_(layer.bias)

    def descriptor(self) -> Dict[str, Any]:
        return {
            "kind": "mvmm-denoiser",
            "image_size": self.latent.image_size,
            "patch": self.latent.patch,
            "classes": self.latent.classes,
            "p_channels": self.latent.p_channels,
            "width": self.config.width,
            "depth": self.config.depth,
            "heads": self.config.heads,
            "ff_mult": self.config.ff_mult,
            "use_layout": self.config.use_layout,
        }

    def forward(self, latents: Sequence[torch.Tensor], cond: torch.Tensor, t: torch.Tensor) -> List[torch.Tensor]:
        """
        latents: 3 тензора (B, V, L, C_m) в порядке I, S, P; cond: (B, V, L, C_cond);
        t: (B, V, 3): время каждого потока (0 для чистых источников I).
        """
        if len(latents) != 3:
            raise InvalidInputError("expected latents for I, S and P")
        b, v, l = latents[0].shape[:3]
        if cond.shape[:3] != (b, v, l) or cond.shape[-1] != self.latent.cond_channels:
            raise InvalidInputError(
                f"conditions {tuple(cond.shape)} do not cover all {v} views x {l} tokens"
            )
        if t.shape != (b, v, 3):
            raise InvalidInputError(f"t must have shape {(b, v, 3)}, got {tuple(t.shape)}")
        streams = []
        for m, (proj, x) in enumerate(zip(self.inputs, latents)):
            if x.shape[:3] != (b, v, l) or x.shape[-1] != self.latent.modality_channels()[m]:
                raise InvalidInputError(f"latent {m} has shape {tuple(x.shape)}")
            streams.append(proj(torch.cat([x, cond], dim=-1)))
        tokens = torch.stack(streams, dim=2)
        c = self.time_mlp(timestep_embedding(t.to(tokens.dtype), self.config.width))
        tokens = tokens + self.modality_embed[None, None, :, None, :] + self.pos_embed
        c = c[..., None, :]
        for block in self.blocks:
            tokens = block(tokens, c)
        shift, scale = self.modulation_out(c).chunk(2, dim=-1)
        tokens = self.norm_out(tokens) * (1.0 + scale) + shift
        return [
            head(tokens[:, :, m]) + gain(c[:, :, m]) * x
            for m, (head, gain, x) in enumerate(zip(self.heads, self.skip_gains, latents))
        ]


def denoiser_forward(
    model: MultiViewDenoiser,
    noisy: Sequence[torch.Tensor],
    cond: torch.Tensor,
    t: torch.Tensor,
) -> List[torch.Tensor]:
    return model(noisy, cond, t)
