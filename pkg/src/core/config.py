#!/usr/bin/env python3
"""
Конфигурация toolkit'а: типизированные pydantic-модели и загрузка из JSON/YAML.
"""

from __future__ import annotations

import json
import math
import os
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import structlog
import yaml
from pydantic import BaseModel, Field, field_validator

logger = structlog.get_logger(__name__)

PACKAGE_VERSION = "0.4.0"


class TrajectoryParams(BaseModel):
    """Параметры генератора траекторий (метры, радианы, пиксели)."""

    count: int = Field(8, ge=2)
    spacing: float = Field(0.5, gt=0)
    clearance: float = Field(0.3, ge=0)
    seed: int = 0
    fov: float = Field(math.pi / 2, gt=0, lt=math.pi)
    image_size: Tuple[int, int] = (64, 64)
    camera_height: float = Field(1.2, gt=0)
    radius: Optional[float] = None
    max_retries: int = Field(200, ge=1)


class CurationThresholds(BaseModel):
    """Пороги отбора сцен, комнат, объектов и кадров."""

    min_scene_area: float = 20.0
    min_scene_objects: int = 35
    min_room_area: float = 8.0
    min_room_objects: int = 3
    min_renderings: int = 1
    min_edge: float = 0.1
    max_edge: float = 1.8
    overexposed_luma: float = 0.98
    overexposed_fraction: float = 0.5
    min_mean_luma: float = 0.05


class RasterConfig(BaseModel):
    near: float = Field(1e-3, gt=0)
    tie_epsilon: float = Field(1e-5, ge=0)


class WarpConfig(BaseModel):
    radius_px: float = Field(1.0, ge=0.5)
    tau: float = Field(1.5, ge=1.0)


class CodecConfig(BaseModel):
    in_channels: int = 3
    latent_channels: int = 8
    hidden: Tuple[int, int] = (32, 64)
    downsample: int = 4
    lambda1: float = 1.0
    alpha: float = 0.2
    lr: float = 1e-3
    lr_decay_at: float = 0.9
    lr_decay_factor: float = 0.01
    weight_decay: float = 0.0
    steps: int = 200
    seed: int = 0


class DiffusionConfig(BaseModel):
    """Desk-scale denoiser и протокол обучения."""

    views_total: int = 8
    source_counts: List[int] = Field(default_factory=lambda: [1, 3, 7])
    image_size: int = 64
    patch: int = 4
    width: int = 64
    depth: int = 4
    heads: int = 4
    ff_mult: int = 2
    use_layout: bool = True
    lr: float = 1e-3
    lr_decay_at: float = 0.9
    lr_decay_factor: float = 0.01
    weight_decay: float = 0.0
    steps: int = 2000
    batch_examples: int = Field(1, ge=1)
    sample_steps: int = 25
    seed: int = 0

    @field_validator("source_counts")
    @classmethod
    def _check_sources(cls, value: List[int]) -> List[int]:
        if not value or any(m not in (1, 3, 7) for m in value):
            raise ValueError("source_counts must be a non-empty subset of {1, 3, 7}")
        return value


class PipelineConfig(BaseModel):
    sources: int = 1
    batch_size: Optional[int] = None
    tau: float = Field(1.5, ge=1.0)
    voxel: float = Field(0.02, gt=0)
    radius_px: float = Field(1.0, ge=0.5)
    oracle_noise: float = Field(0.0, ge=0)
    oracle_confidence: float = Field(2.0, gt=1.0)
    seed: int = 0


class SpatialGenConfig(BaseModel):
    trajectory: TrajectoryParams = Field(default_factory=TrajectoryParams)
    curation: CurationThresholds = Field(default_factory=CurationThresholds)
    raster: RasterConfig = Field(default_factory=RasterConfig)
    warp: WarpConfig = Field(default_factory=WarpConfig)
    codec: CodecConfig = Field(default_factory=CodecConfig)
    diffusion: DiffusionConfig = Field(default_factory=DiffusionConfig)
    pipeline: PipelineConfig = Field(default_factory=PipelineConfig)


class RunConfig(BaseModel):
    """Манифест запуска: полностью разрешённая конфигурация команды."""

    command: str
    params: Dict[str, Any] = Field(default_factory=dict)
    seeds: Dict[str, int] = Field(default_factory=dict)
    threads: int = 1
    version: str = PACKAGE_VERSION
    outputs: List[str] = Field(default_factory=list)

    def write(self, directory: Path, name: str = "manifest.json") -> Path:
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / name
        path.write_text(
            json.dumps(self.model_dump(mode="json"), indent=2, sort_keys=True),
            encoding="utf-8",
        )
        return path


def load_config(config_file: Optional[str]) -> SpatialGenConfig:
    """Загружает конфигурацию из JSON/YAML; при ошибке: значения по умолчанию."""
    if config_file and os.path.exists(config_file):
        try:
            with open(config_file, "r", encoding="utf-8") as fh:
                data = yaml.safe_load(fh) or {}
            return SpatialGenConfig.model_validate(data)
        except Exception as exc:
            logger.warning("config.load_failed", path=config_file, error=str(exc))
    elif config_file:
        logger.warning("config.missing", path=config_file)
    return SpatialGenConfig()
