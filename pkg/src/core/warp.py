#!/usr/bin/env python3
"""
Глобальное облако точек и точечный рендер варпнутых изображений.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np
import structlog

from core.camera import CameraView, project
from core.errors import InvalidInputError
from core.maps import ViewMaps

logger = structlog.get_logger(__name__)

DEPTH_TIE = 1e-9


@dataclass(frozen=True, eq=False)
class GlobalPointCloud:
    """Точки сцены: позиция, цвет, семантика, уверенность (> 1) и кадр-источник."""

    positions: np.ndarray
    colors: np.ndarray
    semantics: np.ndarray
    confidence: np.ndarray
    source_view: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "positions", np.asarray(self.positions, dtype=np.float64).reshape(-1, 3))
        object.__setattr__(self, "colors", np.asarray(self.colors, dtype=np.float64).reshape(-1, 3))
        object.__setattr__(self, "semantics", np.asarray(self.semantics, dtype=np.int64).reshape(-1))
        object.__setattr__(self, "confidence", np.asarray(self.confidence, dtype=np.float64).reshape(-1))
        object.__setattr__(self, "source_view", np.asarray(self.source_view, dtype=np.int64).reshape(-1))
        sizes = {len(self.positions), len(self.colors), len(self.semantics), len(self.confidence), len(self.source_view)}
        if len(sizes) != 1:
            raise InvalidInputError("point attributes must have equal length")

    def __len__(self) -> int:
        return int(self.positions.shape[0])

    def validate(self):
        errors = []
        if not np.all(np.isfinite(self.positions)):
            errors.append("positions must be finite")
        if np.any(self.confidence <= 1.0):
            errors.append("confidence must exceed 1")
        return errors

    @classmethod
    def empty(cls) -> "GlobalPointCloud":
        return cls(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0), np.zeros(0), np.zeros(0))

    def select(self, index: np.ndarray) -> "GlobalPointCloud":
        return GlobalPointCloud(
            self.positions[index],
            self.colors[index],
            self.semantics[index],
            self.confidence[index],
            self.source_view[index],
        )

    @classmethod
    def concat(cls, clouds: Iterable["GlobalPointCloud"]) -> "GlobalPointCloud":
        clouds = list(clouds)
        if not clouds:
            return cls.empty()
        return cls(
            np.concatenate([c.positions for c in clouds]),
            np.concatenate([c.colors for c in clouds]),
            np.concatenate([c.semantics for c in clouds]),
            np.concatenate([c.confidence for c in clouds]),
            np.concatenate([c.source_view for c in clouds]),
        )

    def equals(self, other: "GlobalPointCloud") -> bool:
        return all(
            np.array_equal(a, b)
            for a, b in (
                (self.positions, other.positions),
                (self.colors, other.colors),
                (self.semantics, other.semantics),
                (self.confidence, other.confidence),
                (self.source_view, other.source_view),
            )
        )


@dataclass(frozen=True, eq=False)
class WarpedImage:
    color: np.ndarray
    coverage: np.ndarray


def splat_winners(cloud: GlobalPointCloud, view: CameraView, radius_px: float = 1.0) -> np.ndarray:
    """
    Индекс победившей точки для каждого пикселя (-1: не покрыт).

    Точка покрывает пиксели, чьи центры лежат в квадрате полуширины radius_px вокруг
    её проекции. Побеждает минимальная глубина; при равенстве в пределах 1e-9:
    меньший индекс точки. Результат не зависит от порядка обработки.
    """
    if radius_px < 0.5:
        raise InvalidInputError(f"radius_px must be >= 0.5, got {radius_px}")
    height, width = view.height, view.width
    winners = np.full(height * width, -1, dtype=np.int64)
    if len(cloud) == 0:
        return winners.reshape(height, width)

    uv, z = project(view, cloud.positions)
    front = np.flatnonzero(z > 0)
    if front.size == 0:
        return winners.reshape(height, width)
    pu, pv, pz = uv[front, 0], uv[front, 1], z[front]

    span = int(np.floor(2.0 * radius_px)) + 1
    offsets = np.arange(span)
    base_u = np.ceil(pu - radius_px).astype(np.int64)
    base_v = np.ceil(pv - radius_px).astype(np.int64)
    cand_u = base_u[:, None, None] + offsets[None, None, :]
    cand_v = base_v[:, None, None] + offsets[None, :, None]
    cand_u, cand_v = np.broadcast_arrays(cand_u, cand_v)
    point = np.broadcast_to(front[:, None, None], cand_u.shape)
    depth = np.broadcast_to(pz[:, None, None], cand_u.shape)
    keep = (
        (np.abs(cand_u - pu[:, None, None]) <= radius_px)
        & (np.abs(cand_v - pv[:, None, None]) <= radius_px)
        & (cand_u >= 0)
        & (cand_u < width)
        & (cand_v >= 0)
        & (cand_v < height)
    )
    pixel = (cand_v * width + cand_u)[keep]
    point = point[keep]
    depth = depth[keep]

    best = np.full(height * width, np.inf)
    np.minimum.at(best, pixel, depth)
    near = depth <= best[pixel] + DEPTH_TIE
    first = np.full(height * width, np.iinfo(np.int64).max, dtype=np.int64)
    np.minimum.at(first, pixel[near], point[near])
    covered = first != np.iinfo(np.int64).max
    winners[covered] = first[covered]
    return winners.reshape(height, width)


def splat(cloud: GlobalPointCloud, view: CameraView, radius_px: float = 1.0) -> WarpedImage:
    """Варпнутое изображение: цвет победившей точки, непокрытые пиксели: (0, 0, 0)."""
    winners = splat_winners(cloud, view, radius_px)
    coverage = winners >= 0
    color = np.zeros((view.height, view.width, 3))
    color[coverage] = cloud.colors[winners[coverage]]
    return WarpedImage(color=color, coverage=coverage)


def filter_by_confidence(cloud: GlobalPointCloud, tau: float) -> GlobalPointCloud:
    """Оставляет ровно точки с confidence >= tau, порядок сохраняется."""
    if tau < 1.0:
        raise InvalidInputError(f"tau must be >= 1, got {tau}")
    return cloud.select(np.flatnonzero(cloud.confidence >= tau))


def insert_scm(cloud: GlobalPointCloud, maps: ViewMaps, view_index: int, default_confidence: Optional[float] = None) -> GlobalPointCloud:
    """
    Добавляет по одной точке на валидный пиксель SCM кадра (объединение = конкатенация).

    Сама камера здесь не нужна: точки SCM уже мировые. view_index: индекс кадра
    в траектории, он сохраняется в source_view каждой новой точки как её источник.
    """
    if maps.color is None:
        raise InvalidInputError("maps carry no color")
    if maps.confidence is None and default_confidence is None:
        raise InvalidInputError("maps carry no confidence")
    confidence = maps.confidence_or(default_confidence if default_confidence is not None else 2.0)
    mask = maps.scm.mask
    count = int(mask.sum())
    added = GlobalPointCloud(
        positions=maps.scm.points[mask],
        colors=np.asarray(maps.color, dtype=np.float64)[mask],
        semantics=np.asarray(maps.semantic)[mask],
        confidence=confidence[mask],
        source_view=np.full(count, int(view_index)),
    )
    logger.debug("warp.insert", view=view_index, points=count)
    return GlobalPointCloud.concat([cloud, added])
