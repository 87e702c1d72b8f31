#!/usr/bin/env python3
"""
Генераторы видов для итеративного пайплайна.

Бэкенд получает источники (изображения M видов), камеры всех M + N видов,
layout сцены и варпы целевых видов; возвращает ViewMaps для всех видов:
цвет целевых, семантику, SCM и уверенность для всех.
"""

from __future__ import annotations

import asyncio
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence

import numpy as np
import structlog
import torch

from core.camera import CameraView, camera_rays
from core.errors import BackendError, InvalidInputError
from core.layout import SceneLayout
from core.maps import SceneCoordMap, ViewMaps
from core.palette import VOID_ID
from core.raster import depth_to_scm
from core.rng import make_rng, torch_generator
from core.synth import SynthScene, render_gt
from core.warp import WarpedImage
from models.codec import SCMCodec, SceneNormalization
from models.denoiser import MultiViewDenoiser
from models.latents import normalized_plucker, rgb_to_latent, view_condition
from models.training import ViewBatch, decode_views, layout_condition_maps, sample

logger = structlog.get_logger(__name__)


class BackendType(str, Enum):
    """Поддерживаемые генераторы."""

    ORACLE = "oracle"
    TOY = "toy"


@dataclass
class GenerationRequest:
    """Один вызов генератора: первые len(source_images) видов: источники."""

    views: List[CameraView]
    view_ids: List[int]
    source_images: List[np.ndarray]
    layout: SceneLayout
    warps: List[WarpedImage] = field(default_factory=list)
    iteration: int = 0

    @property
    def source_count(self) -> int:
        return len(self.source_images)

    @property
    def target_count(self) -> int:
        return len(self.views) - self.source_count

    def validate(self) -> List[str]:
        errors = []
        if len(self.views) != len(self.view_ids):
            errors.append("views and view_ids differ in length")
        if self.source_count == 0:
            errors.append("at least one source image is required")
        if self.source_count > len(self.views):
            errors.append("more source images than views")
        if len(self.warps) != max(0, self.target_count):
            errors.append(f"expected {self.target_count} warps, got {len(self.warps)}")
        for view, image in zip(self.views, self.source_images):
            if image.shape != (view.height, view.width, 3):
                errors.append(f"source image shape {image.shape} does not match camera")
        return errors


class GeneratorBackend(ABC):
    """Базовый интерфейс генераторов видов."""

    def __init__(self, backend_type: BackendType, max_views: int):
        self.backend_type = backend_type
        self.max_views = max_views

    def describe(self) -> Dict[str, object]:
        return {"backend": self.backend_type.value, "max_views": self.max_views}

    async def generate(self, request: GenerationRequest) -> List[ViewMaps]:
        errors = request.validate()
        if errors:
            raise InvalidInputError("; ".join(errors))
        if len(request.views) > self.max_views:
            raise BackendError(
                f"{self.backend_type.value} backend takes at most {self.max_views} views, got {len(request.views)}"
            )
        maps = await asyncio.to_thread(self._generate, request)
        logger.debug(
            "backend.generated",
            backend=self.backend_type.value,
            iteration=request.iteration,
            sources=request.source_count,
            targets=request.target_count,
        )
        return maps

    @abstractmethod
    def _generate(self, request: GenerationRequest) -> List[ViewMaps]:
        """Синхронная генерация; вызывается в рабочем потоке."""


def _noisy_depth(depth: np.ndarray, sigma: float, rng: np.random.Generator, view: CameraView) -> np.ndarray:
    """Дальность вдоль луча получает N(0, sigma) в метрах; planar-глубина: долю 1/|ray|."""
    valid = depth > 0
    ray_length = np.linalg.norm(camera_rays(view), axis=-1)
    noisy = depth + rng.normal(0.0, sigma, size=depth.shape) / ray_length
    return np.where(valid, np.maximum(noisy, 1e-6), 0.0)


class OracleBackend(GeneratorBackend):
    """
    Рендерит ground truth синтетической сцены. При noise > 0 каждая точка SCM
    сдвигается вдоль своего пиксельного луча на N(0, noise) метров.
    """

    def __init__(self, scene: SynthScene, noise: float = 0.0, confidence: float = 2.0, seed: int = 0, max_views: int = 64):
        super().__init__(BackendType.ORACLE, max_views)
        if noise < 0:
            raise InvalidInputError(f"noise must be >= 0, got {noise}")
        if not confidence > 1.0:
            raise InvalidInputError(f"confidence must exceed 1, got {confidence}")
        self.scene = scene
        self.noise = noise
        self.confidence = confidence
        self.seed = seed
        self._cache: Dict[int, ViewMaps] = {}

    def describe(self) -> Dict[str, object]:
        return {**super().describe(), "noise": self.noise, "confidence": self.confidence, "seed": self.seed}

    def _view_maps(self, view_id: int, view: CameraView) -> ViewMaps:
        cached = self._cache.get(view_id)
        if cached is not None:
            return cached
        maps = render_gt(self.scene, view)
        if self.noise > 0:
            depth = _noisy_depth(maps.depth, self.noise, make_rng(self.seed, 31, view_id), view)
            maps = ViewMaps(semantic=maps.semantic, depth=depth, scm=depth_to_scm(depth, view), color=maps.color)
        maps = maps.with_confidence(np.full(maps.shape, self.confidence))
        self._cache[view_id] = maps
        return maps

    def _generate(self, request: GenerationRequest) -> List[ViewMaps]:
        out = []
        for index, (view_id, view) in enumerate(zip(request.view_ids, request.views)):
            maps = self._view_maps(view_id, view)
            if index < request.source_count:
                maps = ViewMaps(
                    semantic=maps.semantic,
                    depth=maps.depth,
                    scm=maps.scm,
                    color=np.asarray(request.source_images[index], dtype=np.float64),
                    confidence=maps.confidence,
                )
            out.append(maps)
        return out


class ToyDiffusionBackend(GeneratorBackend):
    """Desk-scale денойзер + SCM-кодек; вызов с нулём целевых видов допустим."""

    def __init__(self, codec: SCMCodec, denoiser: MultiViewDenoiser, sample_steps: int = 25, seed: int = 0, max_views: int = 8):
        super().__init__(BackendType.TOY, max_views)
        self.codec = codec
        self.denoiser = denoiser
        self.latent = denoiser.latent
        self.sample_steps = sample_steps
        self.seed = seed

    def describe(self) -> Dict[str, object]:
        return {**super().describe(), "sample_steps": self.sample_steps, "seed": self.seed}

    def _generate(self, request: GenerationRequest) -> List[ViewMaps]:
        size = self.latent.image_size
        for view in request.views:
            if (view.height, view.width) != (size, size):
                raise BackendError(f"toy backend renders {size}x{size} views, got {view.height}x{view.width}")
        norm = SceneNormalization.from_layout(request.layout)
        m = request.source_count
        cond, masks = [], []
        for index, view in enumerate(request.views):
            semantic, scm = layout_condition_maps(request.layout, view, norm)
            warp = request.warps[index - m] if index >= m else None
            cond.append(
                view_condition(
                    self.latent,
                    semantic,
                    scm,
                    normalized_plucker(view, norm),
                    index < m,
                    warp.color if warp else None,
                    warp.coverage if warp else None,
                    self.denoiser.config.use_layout,
                )
            )
            masks.append(semantic != VOID_ID)
        v, tokens = len(request.views), self.latent.tokens
        rgb = torch.zeros(v, 3, size, size)
        for index, image in enumerate(request.source_images):
            rgb[index] = torch.from_numpy(np.ascontiguousarray(image.transpose(2, 0, 1))).float()
        x0 = [
            rgb_to_latent(rgb, self.latent.patch).unsqueeze(0),
            torch.zeros(1, v, tokens, self.latent.sem_channels),
            torch.zeros(1, v, tokens, self.latent.p_channels),
        ]
        batch = ViewBatch(
            x0=x0,
            cond=torch.stack(cond).unsqueeze(0),
            source_mask=torch.tensor([[index < m for index in range(v)]]),
        )
        generator = torch_generator(self.seed, 41, request.iteration)
        latents = sample(self.denoiser, batch, self.sample_steps, generator)
        decoded = decode_views(latents, self.codec, self.latent, norm, masks)

        out = []
        for index, (view, (color, semantic, scm, confidence)) in enumerate(zip(request.views, decoded)):
            depth = view.pose.to_camera(scm.points.reshape(-1, 3))[:, 2].reshape(scm.shape)
            valid = scm.mask & (depth > 0)
            if index < m:
                color = np.asarray(request.source_images[index], dtype=np.float64)
            out.append(
                ViewMaps(
                    semantic=semantic,
                    depth=np.where(valid, depth, 0.0),
                    scm=SceneCoordMap(scm.points, valid),
                    color=color,
                    confidence=confidence,
                )
            )
        return out


class BackendFactory:
    """Фабрика бэкендов по типу."""

    @staticmethod
    def create(
        backend_type: BackendType,
        scene: Optional[SynthScene] = None,
        noise: float = 0.0,
        confidence: float = 2.0,
        codec: Optional[SCMCodec] = None,
        denoiser: Optional[MultiViewDenoiser] = None,
        sample_steps: int = 25,
        seed: int = 0,
    ) -> GeneratorBackend:
        if backend_type == BackendType.ORACLE:
            if scene is None:
                raise InvalidInputError("oracle backend needs a synthetic scene")
            return OracleBackend(scene, noise=noise, confidence=confidence, seed=seed)
        if backend_type == BackendType.TOY:
            if codec is None or denoiser is None:
                raise InvalidInputError("toy backend needs a codec and a denoiser")
            return ToyDiffusionBackend(codec, denoiser, sample_steps=sample_steps, seed=seed)
        raise InvalidInputError(f"Unsupported backend: {backend_type}")


def source_images_for(scene: SynthScene, views: Sequence[CameraView]) -> List[np.ndarray]:
    """Ground-truth цвет источников синтетической сцены."""
    return [render_gt(scene, view).color for view in views]
