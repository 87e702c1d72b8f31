#!/usr/bin/env python3
"""
Треугольная геометрия layout'а и общее правило z-теста.

Правило используется и растеризатором, и ray-cast оракулом, поэтому их
результаты совпадают по семантике пиксель в пиксель.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np
import structlog
from shapely.geometry import Point, Polygon
from shapely.ops import triangulate

from core.layout import SceneLayout, box_corners
from core.palette import CEILING_ID, DOOR_ID, FLOOR_ID, WALL_ID, WINDOW_ID

logger = structlog.get_logger(__name__)

TIE_EPSILON = 1e-5

# door > window > object > wall > floor = ceiling
_PRIORITY = {DOOR_ID: 5, WINDOW_ID: 4, WALL_ID: 2, FLOOR_ID: 1, CEILING_ID: 1}
OBJECT_PRIORITY = 3

# грани бокса по индексам углов (бит 0: x, бит 1: y, бит 2: z)
BOX_FACES = (
    (0, 2, 6, 4),
    (1, 3, 7, 5),
    (0, 1, 5, 4),
    (2, 3, 7, 6),
    (0, 1, 3, 2),
    (4, 5, 7, 6),
)


def category_priority(category: int) -> int:
    return _PRIORITY.get(int(category), OBJECT_PRIORITY)


@dataclass(frozen=True)
class Surfaces:
    """Плоский список треугольников сцены, shape (T, 3, 3), с категорией и приоритетом."""

    triangles: np.ndarray
    categories: np.ndarray
    priorities: np.ndarray

    def __len__(self) -> int:
        return int(self.triangles.shape[0])

    def normals(self) -> np.ndarray:
        tri = self.triangles
        n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        length = np.linalg.norm(n, axis=-1, keepdims=True)
        return np.divide(n, length, out=np.zeros_like(n), where=length > 0)

    @classmethod
    def empty(cls) -> "Surfaces":
        return cls(np.zeros((0, 3, 3)), np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64))


def _quad(corners: np.ndarray) -> List[np.ndarray]:
    return [corners[[0, 1, 2]], corners[[0, 2, 3]]]


def _floor_triangles(vertices: np.ndarray) -> List[np.ndarray]:
    polygon = Polygon(vertices)
    if polygon.convex_hull.area - polygon.area <= 1e-12:
        return [np.array([vertices[0], vertices[i], vertices[i + 1]]) for i in range(1, len(vertices) - 1)]
    triangles = []
    for tri in triangulate(polygon):
        if polygon.contains(Point(tri.centroid.x, tri.centroid.y)):
            triangles.append(np.asarray(tri.exterior.coords)[:3])
    return triangles


def layout_surfaces(layout: SceneLayout, include_shell: bool = True, skip_box: Optional[int] = None) -> Surfaces:
    """
    Треугольники в фиксированном порядке: оболочки комнат (стены, пол, потолок),
    архитектурные quad'ы, затем боксы (12 треугольников на бокс).
    """
    triangles: List[np.ndarray] = []
    categories: List[int] = []

    def add(tris: List[np.ndarray], category: int) -> None:
        triangles.extend(tris)
        categories.extend([category] * len(tris))

    if include_shell:
        for room in layout.rooms:
            verts = np.asarray(room.vertices, dtype=np.float64)
            n = len(verts)
            for i in range(n):
                a, b = verts[i], verts[(i + 1) % n]
                wall = np.array(
                    [
                        [a[0], a[1], room.floor_z],
                        [b[0], b[1], room.floor_z],
                        [b[0], b[1], room.ceiling_z],
                        [a[0], a[1], room.ceiling_z],
                    ]
                )
                add(_quad(wall), WALL_ID)
            flat = _floor_triangles(verts)
            add([np.column_stack([t, np.full(3, room.floor_z)]) for t in flat], FLOOR_ID)
            add([np.column_stack([t, np.full(3, room.ceiling_z)]) for t in flat], CEILING_ID)

    for quad in layout.arch:
        add(_quad(np.asarray(quad.corners, dtype=np.float64)), quad.category)

    for box in layout.boxes:
        if skip_box is not None and box.id == skip_box:
            continue
        corners = box_corners(box)
        for face in BOX_FACES:
            add(_quad(corners[list(face)]), box.category)

    if not triangles:
        return Surfaces.empty()
    cats = np.asarray(categories, dtype=np.int64)
    return Surfaces(
        triangles=np.stack(triangles).astype(np.float64),
        categories=cats,
        priorities=np.array([category_priority(c) for c in cats], dtype=np.int64),
    )


def take_nearer(
    depth: np.ndarray,
    winner: np.ndarray,
    candidate: np.ndarray,
    index: int,
    priorities: np.ndarray,
    epsilon: float = TIE_EPSILON,
) -> None:
    """
    Обновляет z-буфер (depth, winner) на месте кандидатом треугольника index.

    candidate = inf там, где треугольник не попадает. Кандидат побеждает, если ближе
    более чем на epsilon; при |dz| <= epsilon: если выше приоритет категории, а при
    равном приоритете: если меньше индекс треугольника.
    """
    hit = np.isfinite(candidate)
    if not np.any(hit):
        return
    old_pri = np.where(winner >= 0, priorities[np.maximum(winner, 0)], -1)
    new_pri = priorities[index]
    with np.errstate(invalid="ignore"):
        closer = candidate < depth - epsilon
        tie = np.abs(candidate - depth) <= epsilon
    better = (new_pri > old_pri) | ((new_pri == old_pri) & (index < winner))
    take = hit & (closer | (tie & better))
    depth[take] = candidate[take]
    winner[take] = index
