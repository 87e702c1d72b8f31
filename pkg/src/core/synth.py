#!/usr/bin/env python3
"""
Процедурные микро-сцены и точный ray-cast рендер ground truth.

Рендер: независимый оракул для растеризатора: другой алгоритм (Möller–Trumbore
по каждому треугольнику), то же правило z-теста.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import structlog
from shapely.geometry import Polygon

from core.camera import CameraView, equirect_directions, world_rays
from core.config import RasterConfig
from core.errors import PlacementError
from core.geometry import Surfaces, layout_surfaces, take_nearer
from core.layout import (
    ArchKind,
    ArchQuad,
    RoomPolygon,
    SceneLayout,
    SemanticBox,
    layout_from_dict,
    layout_to_dict,
    normalize_yaw,
)
from core.maps import ViewMaps
from core.palette import VOID_ID, CategoryPalette, default_palette
from core.parallel import run_bands
from core.raster import depth_to_scm
from core.rng import make_rng

logger = structlog.get_logger(__name__)

AMBIENT = 0.3
DIFFUSE = 0.7
DEFAULT_LIGHT = (0.3, 0.5, 1.0)
MAX_SCENE_ATTEMPTS = 10
MAX_BOX_ATTEMPTS = 200
HIT_TOLERANCE = 1e-9


class Difficulty(str, Enum):
    EMPTY = "empty"
    SPARSE = "sparse"
    CLUTTERED = "cluttered"


_BOX_COUNTS = {Difficulty.EMPTY: (0, 0), Difficulty.SPARSE: (3, 5), Difficulty.CLUTTERED: (8, 15)}


@dataclass(frozen=True)
class SynthScene:
    """Layout + плоские альбедо категорий + один направленный источник света."""

    layout: SceneLayout
    light_direction: Tuple[float, float, float] = DEFAULT_LIGHT
    light_intensity: float = 1.0
    palette: CategoryPalette = field(default_factory=default_palette)

    def light(self) -> np.ndarray:
        direction = np.asarray(self.light_direction, dtype=np.float64)
        return direction / np.linalg.norm(direction)

    def to_dict(self) -> Dict[str, Any]:
        data = layout_to_dict(self.layout)
        data["lighting"] = {"direction": list(self.light_direction), "intensity": self.light_intensity}
        return data

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SynthScene":
        lighting = data.get("lighting") or {}
        layout = layout_from_dict(data)
        return cls(
            layout=layout,
            light_direction=tuple(float(v) for v in lighting.get("direction", DEFAULT_LIGHT)),
            light_intensity=float(lighting.get("intensity", 1.0)),
        )

    @classmethod
    def from_layout(cls, layout: SceneLayout) -> "SynthScene":
        lighting = layout.extra.get("lighting") or {}
        return cls(
            layout=layout,
            light_direction=tuple(float(v) for v in lighting.get("direction", DEFAULT_LIGHT)),
            light_intensity=float(lighting.get("intensity", 1.0)),
        )


def _wall_opening(a: np.ndarray, b: np.ndarray, offset: float, width: float, z0: float, z1: float) -> Tuple:
    """Quad на стене a→b, копланарный ей; обход как у стены оболочки."""
    direction = (b - a) / np.linalg.norm(b - a)
    p0 = a + offset * direction
    p1 = p0 + width * direction
    return (
        (float(p0[0]), float(p0[1]), z0),
        (float(p1[0]), float(p1[1]), z0),
        (float(p1[0]), float(p1[1]), z1),
        (float(p0[0]), float(p0[1]), z1),
    )


def _try_scene(rng: np.random.Generator, difficulty: Difficulty, room_size: Optional[Tuple[float, float]], palette: CategoryPalette):
    width, depth = room_size if room_size else (rng.uniform(3.0, 6.0), rng.uniform(3.0, 6.0))
    ceiling = float(rng.uniform(2.6, 3.0))
    vertices = ((0.0, 0.0), (float(width), 0.0), (float(width), float(depth)), (0.0, float(depth)))
    room = RoomPolygon(vertices=vertices, floor_z=0.0, ceiling_z=ceiling)

    corners = [np.array(v) for v in vertices]
    door_wall = int(rng.integers(0, 4))
    a, b = corners[door_wall], corners[(door_wall + 1) % 4]
    length = float(np.linalg.norm(b - a))
    arch = [ArchQuad(ArchKind.DOOR, _wall_opening(a, b, rng.uniform(0.2, length - 1.1), 0.9, 0.0, 2.0))]
    window_wall = (door_wall + 2) % 4
    a, b = corners[window_wall], corners[(window_wall + 1) % 4]
    length = float(np.linalg.norm(b - a))
    arch.append(ArchQuad(ArchKind.WINDOW, _wall_opening(a, b, rng.uniform(0.3, length - 1.5), 1.2, 0.9, 2.1)))

    low, high = _BOX_COUNTS[difficulty]
    count = int(rng.integers(low, high + 1)) if high else 0
    room_poly = Polygon(vertices).buffer(-0.05)
    footprints: List[Polygon] = []
    boxes: List[SemanticBox] = []
    object_ids = palette.object_ids()
    for box_id in range(count):
        placed = False
        for _ in range(MAX_BOX_ATTEMPTS):
            size = (float(rng.uniform(0.2, 1.6)), float(rng.uniform(0.2, 1.6)), float(rng.uniform(0.3, 1.8)))
            center = (float(rng.uniform(0.0, width)), float(rng.uniform(0.0, depth)), size[2] / 2.0)
            box = SemanticBox(
                id=box_id,
                center=center,
                size=size,
                yaw=normalize_yaw(float(rng.uniform(-math.pi, math.pi))),
                category=int(object_ids[int(rng.integers(0, len(object_ids)))]),
            )
            footprint = box.footprint_polygon()
            if not room_poly.contains(footprint):
                continue
            if any(footprint.buffer(0.05).intersects(other) for other in footprints):
                continue
            footprints.append(footprint)
            boxes.append(box)
            placed = True
            break
        if not placed:
            return None
    return SceneLayout(rooms=(room,), boxes=tuple(boxes), arch=tuple(arch), room_type="synthetic")


def gen_scene(
    seed: int,
    difficulty: Difficulty = Difficulty.SPARSE,
    room_size: Optional[Tuple[float, float]] = None,
    palette: Optional[CategoryPalette] = None,
) -> SynthScene:
    """
    Прямоугольная комната 3–6 м, дверь и окно на стенах, 0 / 3–5 / 8–15 боксов
    без пересечения оснований. При неудаче: внутренний пересев (ограниченный).
    """
    difficulty = Difficulty(difficulty)
    palette = palette or default_palette()
    for attempt in range(MAX_SCENE_ATTEMPTS):
        rng = make_rng(seed, 7, attempt)
        layout = _try_scene(rng, difficulty, room_size, palette)
        if layout is not None:
            logger.debug("synth.scene", seed=seed, difficulty=difficulty.value, boxes=len(layout.boxes), attempt=attempt)
            return SynthScene(layout=layout, palette=palette)
    raise PlacementError("synth", f"could not place boxes for seed {seed} after {MAX_SCENE_ATTEMPTS} attempts")


def ray_cast(
    surfaces: Surfaces,
    origin: np.ndarray,
    rays: np.ndarray,
    near: float = 1e-3,
    epsilon: float = 1e-5,
    threads: Optional[int] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Ближайшее пересечение луча с треугольниками (Möller–Trumbore).

    rays (H, W, 3) не обязаны быть единичными: возвращаемый параметр t измеряется
    в их длинах. Возвращает (t или inf, индекс треугольника или -1).
    """
    height, width = rays.shape[:2]
    t_buf = np.full((height, width), np.inf)
    winner = np.full((height, width), -1, dtype=np.int64)
    origin = np.asarray(origin, dtype=np.float64)

    def band(row_start: int, row_end: int) -> None:
        d = rays[row_start:row_end]
        t_view = t_buf[row_start:row_end]
        w_view = winner[row_start:row_end]
        for index, tri in enumerate(surfaces.triangles):
            e1 = tri[1] - tri[0]
            e2 = tri[2] - tri[0]
            p = np.cross(d, e2)
            det = p @ e1
            s = origin - tri[0]
            q = np.cross(s, e1)
            with np.errstate(divide="ignore", invalid="ignore"):
                inv = 1.0 / det
                u = (p @ s) * inv
                v = (d @ q) * inv
                t = float(e2 @ q) * inv
            hit = (
                (np.abs(det) > 1e-12)
                & (u >= -HIT_TOLERANCE)
                & (v >= -HIT_TOLERANCE)
                & (u + v <= 1.0 + HIT_TOLERANCE)
                & (t >= near)
            )
            candidate = np.where(hit, t, np.inf)
            take_nearer(t_view, w_view, candidate, index, surfaces.priorities, epsilon)

    if len(surfaces):
        run_bands(height, band, threads)
    return t_buf, winner


def _shade(scene: SynthScene, surfaces: Surfaces, winner: np.ndarray, rays: np.ndarray) -> np.ndarray:
    albedo = scene.palette.albedo()
    hit = winner >= 0
    color = np.zeros(winner.shape + (3,))
    if not np.any(hit):
        return color
    normals = surfaces.normals()[winner[hit]]
    facing = np.sum(normals * rays[hit], axis=-1)
    normals = np.where(facing[:, None] > 0, -normals, normals)
    lambert = np.maximum(0.0, normals @ scene.light())
    shade = AMBIENT + DIFFUSE * scene.light_intensity * lambert
    color[hit] = albedo[surfaces.categories[winner[hit]]] * shade[:, None]
    return np.clip(color, 0.0, 1.0)


def render_gt(
    scene: SynthScene,
    view: CameraView,
    config: Optional[RasterConfig] = None,
    threads: Optional[int] = None,
) -> ViewMaps:
    """Цвет, семантика, глубина и SCM кадра лучевым перебором по всем поверхностям."""
    config = config or RasterConfig()
    surfaces = layout_surfaces(scene.layout)
    rays = world_rays(view)
    depth, winner = ray_cast(surfaces, view.center, rays, config.near, config.tie_epsilon, threads)
    hit = winner >= 0
    semantic = np.full(winner.shape, VOID_ID, dtype=np.int64)
    semantic[hit] = surfaces.categories[winner[hit]]
    depth = np.where(hit, depth, 0.0)
    color = _shade(scene, surfaces, winner, rays)
    return ViewMaps(semantic=semantic, depth=depth, scm=depth_to_scm(depth, view), color=color)


def surface_samples(
    scene: SynthScene,
    views: Sequence[CameraView],
    config: Optional[RasterConfig] = None,
    threads: Optional[int] = None,
) -> np.ndarray:
    """
    Точки истинных поверхностей сцены вдоль пиксельных лучей заданных камер,
    shape (N, 3): те же лучи, по которым строятся SCM сгенерированных видов.
    """
    parts = [render_gt(scene, view, config, threads).scm for view in views]
    points = [scm.points[scm.mask] for scm in parts]
    return np.concatenate(points) if points else np.zeros((0, 3))


def render_panorama(
    scene: SynthScene,
    position: Tuple[float, float, float],
    height: int = 512,
    threads: Optional[int] = None,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Эквиректангулярная панорама H x 2H: (цвет, семантика, расстояние вдоль луча)."""
    surfaces = layout_surfaces(scene.layout)
    rays = equirect_directions(height)
    distance, winner = ray_cast(surfaces, np.asarray(position, dtype=np.float64), rays, threads=threads)
    hit = winner >= 0
    semantic = np.full(winner.shape, VOID_ID, dtype=np.int64)
    semantic[hit] = surfaces.categories[winner[hit]]
    return _shade(scene, surfaces, winner, rays), semantic, np.where(hit, distance, 0.0)
