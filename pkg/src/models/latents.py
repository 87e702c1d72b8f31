#!/usr/bin/env python3
"""
Латентные представления модальностей и токены условий.

- I (RGB): фиксированный patchify 4x4, без потерь; значения в [-1, 1];
- S (семантика): one-hot по палитре → patchify; декодирование: argmax;
- P (координаты): латент SCM-кодека (тот же шаг сетки, что и patchify).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import torch
import torch.nn.functional as F

from core.camera import CameraView, plucker_map
from core.errors import InvalidInputError
from models.codec import SceneNormalization

MODALITIES = ("I", "S", "P")


@dataclass(frozen=True)
class LatentLayout:
    """Размерности каналов токенов для заданных размера кадра, патча и палитры."""

    image_size: int
    patch: int
    classes: int
    p_channels: int

    def __post_init__(self):
        if self.image_size % self.patch:
            raise InvalidInputError(f"image size {self.image_size} not divisible by patch {self.patch}")

    @property
    def grid(self) -> int:
        return self.image_size // self.patch

    @property
    def tokens(self) -> int:
        return self.grid * self.grid

    @property
    def rgb_channels(self) -> int:
        return 3 * self.patch**2

    @property
    def sem_channels(self) -> int:
        return self.classes * self.patch**2

    @property
    def layout_channels(self) -> int:
        return (self.classes + 3) * self.patch**2

    @property
    def warp_channels(self) -> int:
        return 4 * self.patch**2

    @property
    def plucker_channels(self) -> int:
        return 6 * self.patch**2

    @property
    def cond_channels(self) -> int:
        return self.layout_channels + self.warp_channels + self.plucker_channels + 1

    def modality_channels(self):
        return (self.rgb_channels, self.sem_channels, self.p_channels)


def patchify(x: torch.Tensor, patch: int) -> torch.Tensor:
    """(B, C, H, W) → (B, L, C·p²)."""
    return F.pixel_unshuffle(x, patch).flatten(2).transpose(1, 2)


def unpatchify(tokens: torch.Tensor, patch: int, grid: int) -> torch.Tensor:
    """(B, L, C·p²) → (B, C, H, W)."""
    b, l, c = tokens.shape
    return F.pixel_shuffle(tokens.transpose(1, 2).reshape(b, c, grid, grid), patch)


def grid_to_tokens(latent: torch.Tensor) -> torch.Tensor:
    return latent.flatten(2).transpose(1, 2)


def tokens_to_grid(tokens: torch.Tensor, grid: int) -> torch.Tensor:
    b, l, c = tokens.shape
    return tokens.transpose(1, 2).reshape(b, c, grid, grid)


def rgb_to_latent(rgb: torch.Tensor, patch: int) -> torch.Tensor:
    return patchify(rgb * 2.0 - 1.0, patch)


def latent_to_rgb(tokens: torch.Tensor, patch: int, grid: int) -> torch.Tensor:
    return ((unpatchify(tokens, patch, grid) + 1.0) / 2.0).clamp(0.0, 1.0)


def semantic_to_latent(ids: torch.Tensor, classes: int, patch: int) -> torch.Tensor:
    onehot = F.one_hot(ids.long(), classes).permute(0, 3, 1, 2).float()
    return patchify(onehot * 2.0 - 1.0, patch)


def latent_to_semantic(tokens: torch.Tensor, classes: int, patch: int, grid: int) -> torch.Tensor:
    return unpatchify(tokens, patch, grid).argmax(dim=1)


def normalized_plucker(view: CameraView, norm: SceneNormalization) -> np.ndarray:
    """Plücker-карта с центром камеры, переведённым в единичный куб сцены."""
    raw = plucker_map(view)
    d = raw[..., :3]
    origin = norm.normalize(view.center)
    m = np.cross(np.broadcast_to(origin, d.shape), d)
    return np.concatenate([d, m], axis=-1)


def _chw(array: np.ndarray) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(array.transpose(2, 0, 1))).float().unsqueeze(0)


def view_condition(
    layout: LatentLayout,
    layout_semantic: np.ndarray,
    layout_scm: np.ndarray,
    plucker: np.ndarray,
    is_source: bool,
    warp_color: Optional[np.ndarray] = None,
    warp_coverage: Optional[np.ndarray] = None,
    use_layout: bool = True,
) -> torch.Tensor:
    """
    Токены условий одного вида, shape (L, cond_channels).

    layout_scm уже нормирован в куб сцены. Варп задаётся только целевым видам;
    у источников эти каналы нулевые. use_layout=False обнуляет каналы layout'а.
    """
    size = layout.image_size
    if layout_semantic.shape != (size, size):
        raise InvalidInputError(f"condition maps must be {size}x{size}, got {layout_semantic.shape}")
    p = layout.patch
    parts = []
    sem = semantic_to_latent(torch.from_numpy(np.asarray(layout_semantic)).unsqueeze(0), layout.classes, p)
    scm = patchify(_chw(layout_scm), p)
    if not use_layout:
        sem = torch.zeros_like(sem)
        scm = torch.zeros_like(scm)
    parts += [sem, scm]
    if warp_color is not None and not is_source:
        coverage = np.asarray(warp_coverage, dtype=np.float64)[..., None]
        parts.append(patchify(_chw(np.asarray(warp_color) * 2.0 - 1.0), p))
        parts.append(patchify(_chw(coverage), p))
    else:
        parts.append(torch.zeros(1, layout.tokens, layout.warp_channels))
    parts.append(patchify(_chw(plucker), p))
    parts.append(torch.full((1, layout.tokens, 1), 1.0 if is_source else 0.0))
    return torch.cat(parts, dim=-1)[0]
