#!/usr/bin/env python3
"""
Автоэнкодер карт координат сцены (SCM) с головой уверенности.

Энкодер заморожен; дообучается только декодер, у которого на выходе 3 канала
SCM + 1 канал «сырой» уверенности.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Dict, Tuple

import numpy as np
import torch
from torch import nn

from core.config import CodecConfig
from core.errors import InvalidInputError
from core.layout import SceneLayout
from core.maps import SceneCoordMap


def confidence_activation(raw: torch.Tensor) -> torch.Tensor:
    """
    c = 1 + exp(raw); raw ограничен снизу log(eps) своего типа, поэтому c > 1 строго.

    Ниже пола активация постоянна: raw = -20 в float32 даёт 1 + eps (а не 1 + e^-20),
    и градиент по raw там нулевой.
    """
    floor = float(np.log(torch.finfo(raw.dtype).eps))
    return 1.0 + torch.exp(torch.clamp(raw, min=floor))


@dataclass(frozen=True)
class SceneNormalization:
    """Перевод мировых координат в единичный куб сцены и обратно."""

    offset: Tuple[float, float, float]
    scale: float

    @classmethod
    def from_layout(cls, layout: SceneLayout) -> "SceneNormalization":
        low, high = layout.bounds()
        scale = float(np.max(high - low))
        return cls(offset=tuple(float(v) for v in low), scale=scale if scale > 0 else 1.0)

    def normalize(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points, dtype=np.float64) - np.asarray(self.offset)) / self.scale

    def denormalize(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) * self.scale + np.asarray(self.offset)

    def to_dict(self) -> Dict[str, Any]:
        return {"offset": list(self.offset), "scale": self.scale}


class SCMCodec(nn.Module):
    def __init__(self, config: CodecConfig):
        super().__init__()
        if config.downsample != 4:
            raise InvalidInputError("the desk-scale codec is built for downsample factor 4")
        self.config = config
        h0, h1 = config.hidden
        c = config.latent_channels
        self.encoder = nn.Sequential(
            nn.Conv2d(config.in_channels, h0, 3, stride=1, padding=1),
            nn.SiLU(),
            nn.Conv2d(h0, h1, 3, stride=2, padding=1),
            nn.SiLU(),
            nn.Conv2d(h1, h1, 3, stride=2, padding=1),
            nn.SiLU(),
            nn.Conv2d(h1, c, 1),
        )
        self.decoder = nn.Sequential(
            nn.Conv2d(c, h1, 3, padding=1),
            nn.SiLU(),
            nn.Upsample(scale_factor=2, mode="nearest"),
            nn.Conv2d(h1, h0, 3, padding=1),
            nn.SiLU(),
            nn.Upsample(scale_factor=2, mode="nearest"),
            nn.Conv2d(h0, h0, 3, padding=1),
            nn.SiLU(),
            nn.Conv2d(h0, config.in_channels + 1, 1),
        )
        self.encoder_frozen = False

    def freeze_encoder(self) -> None:
        for param in self.encoder.parameters():
            param.requires_grad_(False)
        self.encoder_frozen = True

    def descriptor(self) -> Dict[str, Any]:
        return {
            "kind": "scm-codec",
            "in_channels": self.config.in_channels,
            "latent_channels": self.config.latent_channels,
            "hidden": list(self.config.hidden),
            "downsample": self.config.downsample,
            "encoder_frozen": self.encoder_frozen,
        }

    def decode_raw(self, latent: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        out = self.decoder(latent)
        return out[:, : self.config.in_channels], out[:, self.config.in_channels]


def encode(codec: SCMCodec, scm: torch.Tensor) -> torch.Tensor:
    """(B, 3, H, W) → латент (B, c, H/f, W/f)."""
    f = codec.config.downsample
    if scm.ndim != 4 or scm.shape[1] != codec.config.in_channels:
        raise InvalidInputError(f"expected (B, {codec.config.in_channels}, H, W), got {tuple(scm.shape)}")
    if scm.shape[2] % f or scm.shape[3] % f:
        raise InvalidInputError(f"SCM size {tuple(scm.shape[2:])} not divisible by {f}")
    return codec.encoder(scm)


def decode(codec: SCMCodec, latent: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
    """Латент → (SCM (B, 3, H, W), уверенность (B, H, W) > 1)."""
    if latent.ndim != 4 or latent.shape[1] != codec.config.latent_channels:
        raise InvalidInputError(
            f"expected latent (B, {codec.config.latent_channels}, h, w), got {tuple(latent.shape)}"
        )
    scm, raw = codec.decode_raw(latent)
    return scm, confidence_activation(raw)


def scm_tensor(scm: SceneCoordMap, norm: SceneNormalization) -> torch.Tensor:
    """SceneCoordMap → нормированный (1, 3, H, W) float32; невалидные пиксели = 0."""
    points = np.where(scm.mask[..., None], norm.normalize(scm.points), 0.0)
    return torch.from_numpy(points.transpose(2, 0, 1).copy()).float().unsqueeze(0)


def tensor_to_scm(tensor: torch.Tensor, mask: np.ndarray, norm: SceneNormalization) -> SceneCoordMap:
    points = tensor.detach().cpu().double().numpy().transpose(1, 2, 0)
    return SceneCoordMap(norm.denormalize(points), mask)
