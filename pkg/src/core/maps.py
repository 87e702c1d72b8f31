#!/usr/bin/env python3
"""
Пер-кадровые растры: карта координат сцены и набор ViewMaps.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np


@dataclass(frozen=True, eq=False)
class SceneCoordMap:
    """(H, W, 3) мировые координаты + маска валидности; невалидные пиксели = 0."""

    points: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        points = np.asarray(self.points, dtype=np.float64)
        mask = np.asarray(self.mask, dtype=bool)
        points = np.where(mask[..., None], points, 0.0)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "mask", mask)

    @property
    def shape(self):
        return self.mask.shape

    @property
    def valid_count(self) -> int:
        return int(self.mask.sum())


@dataclass(frozen=True, eq=False)
class ViewMaps:
    """Цвет, семантика, глубина, SCM, уверенность и покрытие варпа одного кадра."""

    semantic: np.ndarray
    depth: np.ndarray
    scm: SceneCoordMap
    color: Optional[np.ndarray] = None
    confidence: Optional[np.ndarray] = None
    coverage: Optional[np.ndarray] = field(default=None)

    @property
    def shape(self):
        return self.depth.shape

    def with_confidence(self, confidence: np.ndarray) -> "ViewMaps":
        return replace(self, confidence=np.asarray(confidence, dtype=np.float64))

    def confidence_or(self, default: float) -> np.ndarray:
        if self.confidence is not None:
            return self.confidence
        return np.full(self.shape, float(default))

    def equals(self, other: "ViewMaps") -> bool:
        """Побитовое равенство всех заданных растров."""

        def same(a, b) -> bool:
            if a is None or b is None:
                return a is None and b is None
            return bool(np.array_equal(a, b))

        return (
            same(self.semantic, other.semantic)
            and same(self.depth, other.depth)
            and same(self.scm.points, other.scm.points)
            and same(self.scm.mask, other.scm.mask)
            and same(self.color, other.color)
        )
