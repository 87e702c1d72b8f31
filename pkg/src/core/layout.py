#!/usr/bin/env python3
"""
Модель данных 3D семантического layout'а и его layout-JSON представление.

Система координат: мир в метрах, +Z вверх. Yaw: поворот против часовой стрелки
вокруг +Z, если смотреть сверху; хранится в [-pi, pi).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict, ValidationError
from shapely.geometry import Point, Polygon

from core.errors import LayoutInvariantError, LayoutSchemaError
from core.palette import DOOR_ID, WALL_ID, WINDOW_ID, CategoryPalette, default_palette

logger = structlog.get_logger(__name__)

LAYOUT_SCHEMA_VERSION = 1
COPLANAR_TOLERANCE = 1e-6

Vec2 = Tuple[float, float]
Vec3 = Tuple[float, float, float]


def normalize_yaw(yaw: float) -> float:
    """Приводит угол в [-pi, pi)."""
    wrapped = math.fmod(yaw + math.pi, 2.0 * math.pi)
    if wrapped < 0:
        wrapped += 2.0 * math.pi
    result = wrapped - math.pi
    return -math.pi if result >= math.pi else result


def yaw_rotation(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class SemanticBox:
    """Ориентированный семантический бокс: центр, полные размеры, yaw, категория."""

    id: int
    center: Vec3
    size: Vec3
    yaw: float
    category: int

    def rotation(self) -> np.ndarray:
        return yaw_rotation(self.yaw)

    def footprint(self) -> np.ndarray:
        """Четыре угла основания в плоскости пола, против часовой стрелки."""
        corners = box_corners(self)
        return corners[[0, 1, 3, 2], :2]

    def footprint_polygon(self) -> Polygon:
        return Polygon(self.footprint())


class ArchKind(str, Enum):
    WALL = "wall"
    DOOR = "door"
    WINDOW = "window"


_ARCH_CATEGORY = {ArchKind.WALL: WALL_ID, ArchKind.DOOR: DOOR_ID, ArchKind.WINDOW: WINDOW_ID}


@dataclass(frozen=True)
class ArchQuad:
    """Архитектурный элемент: четыре копланарных угла против часовой стрелки."""

    kind: ArchKind
    corners: Tuple[Vec3, Vec3, Vec3, Vec3]

    @property
    def category(self) -> int:
        return _ARCH_CATEGORY[self.kind]

    def newell_normal(self) -> np.ndarray:
        pts = np.asarray(self.corners, dtype=np.float64)
        normal = np.zeros(3)
        for i in range(4):
            cur, nxt = pts[i], pts[(i + 1) % 4]
            normal[0] += (cur[1] - nxt[1]) * (cur[2] + nxt[2])
            normal[1] += (cur[2] - nxt[2]) * (cur[0] + nxt[0])
            normal[2] += (cur[0] - nxt[0]) * (cur[1] + nxt[1])
        return normal

    def area(self) -> float:
        return float(np.linalg.norm(self.newell_normal()) / 2.0)

    def planarity_error(self) -> float:
        normal = self.newell_normal()
        length = np.linalg.norm(normal)
        if length == 0:
            return float("inf")
        normal = normal / length
        pts = np.asarray(self.corners, dtype=np.float64)
        centroid = pts.mean(axis=0)
        return float(np.max(np.abs((pts - centroid) @ normal)))


@dataclass(frozen=True)
class RoomPolygon:
    vertices: Tuple[Vec2, ...]
    floor_z: float
    ceiling_z: float

    def polygon(self) -> Polygon:
        return Polygon(self.vertices)

    @property
    def area(self) -> float:
        return float(self.polygon().area)

    @property
    def height(self) -> float:
        return self.ceiling_z - self.floor_z

    def centroid(self) -> np.ndarray:
        c = self.polygon().centroid
        return np.array([c.x, c.y])


@dataclass(frozen=True)
class SceneLayout:
    """Комнаты, объекты и архитектура сцены: общий 3D prior для всех условий."""

    rooms: Tuple[RoomPolygon, ...] = ()
    boxes: Tuple[SemanticBox, ...] = ()
    arch: Tuple[ArchQuad, ...] = ()
    room_type: str = ""
    extra: Dict[str, Any] = field(default_factory=dict, compare=False, hash=False)

    @property
    def total_area(self) -> float:
        return float(sum(room.area for room in self.rooms))

    def room_index_of(self, box: SemanticBox) -> Optional[int]:
        """Комната бокса: содержащая центроид основания, иначе ближайшая."""
        if not self.rooms:
            return None
        point = Point(box.center[0], box.center[1])
        polygons = [room.polygon() for room in self.rooms]
        for idx, poly in enumerate(polygons):
            if poly.contains(point):
                return idx
        distances = [poly.distance(point) for poly in polygons]
        return int(np.argmin(distances))

    def boxes_in_room(self, room_index: int) -> List[SemanticBox]:
        return [box for box in self.boxes if self.room_index_of(box) == room_index]

    def with_boxes(self, boxes: List[SemanticBox]) -> "SceneLayout":
        return replace(self, boxes=tuple(boxes))

    def bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        """Осевой ограничивающий бокс всей геометрии (комнаты, объекты, архитектура)."""
        points: List[np.ndarray] = []
        for room in self.rooms:
            verts = np.asarray(room.vertices, dtype=np.float64)
            points.append(np.column_stack([verts, np.full(len(verts), room.floor_z)]))
            points.append(np.column_stack([verts, np.full(len(verts), room.ceiling_z)]))
        for box in self.boxes:
            points.append(box_corners(box))
        for quad in self.arch:
            points.append(np.asarray(quad.corners, dtype=np.float64))
        if not points:
            return np.zeros(3), np.zeros(3)
        stacked = np.concatenate(points, axis=0)
        return stacked.min(axis=0), stacked.max(axis=0)


def box_corners(box: SemanticBox) -> np.ndarray:
    """
    8 углов бокса в мировых координатах, shape (8, 3).

    Угол i: бит 0: знак по локальной x, бит 1: по y, бит 2: по z
    (0 → -s/2, 1 → +s/2); смещение поворачивается на yaw вокруг +Z.
    """
    half = np.asarray(box.size, dtype=np.float64) / 2.0
    signs = np.array([[1 if (i >> axis) & 1 else -1 for axis in range(3)] for i in range(8)], dtype=np.float64)
    offsets = signs * half
    return np.asarray(box.center, dtype=np.float64) + offsets @ box.rotation().T


# --- layout-JSON schema -------------------------------------------------------


class _RoomDoc(BaseModel):
    model_config = ConfigDict(extra="forbid")

    vertices: List[Tuple[float, float]]
    floor_z: float
    ceiling_z: float


class _BoxDoc(BaseModel):
    model_config = ConfigDict(extra="forbid")

    id: int
    center: Tuple[float, float, float]
    size: Tuple[float, float, float]
    yaw: float = 0.0
    category: int


class _ArchDoc(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: ArchKind
    corners: Tuple[
        Tuple[float, float, float],
        Tuple[float, float, float],
        Tuple[float, float, float],
        Tuple[float, float, float],
    ]


class LayoutDocument(BaseModel):
    model_config = ConfigDict(extra="allow")

    version: int
    rooms: List[_RoomDoc] = []
    boxes: List[_BoxDoc] = []
    arch: List[_ArchDoc] = []
    room_type: str = ""


def _field_path(loc: Tuple[Any, ...]) -> str:
    return ".".join(str(part) for part in loc) or "$"


def layout_violations(layout: SceneLayout, palette: Optional[CategoryPalette] = None) -> List[LayoutInvariantError]:
    """Все нарушения инвариантов типов, по порядку."""
    palette = palette or default_palette()
    problems: List[LayoutInvariantError] = []
    seen_ids = set()
    for idx, room in enumerate(layout.rooms):
        where = f"rooms[{idx}]"
        if len(room.vertices) < 3:
            problems.append(LayoutInvariantError("room needs at least 3 vertices", where=where))
            continue
        if not all(math.isfinite(v) for vert in room.vertices for v in vert):
            problems.append(LayoutInvariantError("vertices must be finite", where=where))
            continue
        if not room.ceiling_z > room.floor_z:
            problems.append(LayoutInvariantError("ceiling_z must exceed floor_z", where=where))
        poly = room.polygon()
        if not poly.is_valid:
            problems.append(LayoutInvariantError("room polygon must be simple", where=where))
        elif poly.area <= 0:
            problems.append(LayoutInvariantError("room area must be positive", where=where))
    for box in layout.boxes:
        if box.id in seen_ids:
            problems.append(LayoutInvariantError("duplicate box id", box_id=box.id))
        seen_ids.add(box.id)
        if not all(math.isfinite(v) for v in (*box.center, *box.size, box.yaw)):
            problems.append(LayoutInvariantError("non-finite value", box_id=box.id))
            continue
        if any(s <= 0 for s in box.size):
            problems.append(LayoutInvariantError(f"all size components must be > 0, got {list(box.size)}", box_id=box.id))
        if not -math.pi <= box.yaw < math.pi:
            problems.append(LayoutInvariantError("yaw outside [-pi, pi)", box_id=box.id))
        if not palette.is_valid_id(box.category):
            problems.append(LayoutInvariantError(f"category {box.category} not in palette", box_id=box.id))
    if layout.boxes and not layout.rooms:
        problems.append(LayoutInvariantError("boxes present but no room to assign them to", where="rooms"))
    for idx, quad in enumerate(layout.arch):
        where = f"arch[{idx}]"
        if quad.area() <= 1e-12:
            problems.append(LayoutInvariantError("degenerate quad area", where=where))
        elif quad.planarity_error() > COPLANAR_TOLERANCE:
            problems.append(LayoutInvariantError("corners are not coplanar", where=where))
    return problems


def layout_errors(layout: SceneLayout, palette: Optional[CategoryPalette] = None) -> List[str]:
    """Список нарушений в виде строк (пустой: layout валиден)."""
    return [str(problem) for problem in layout_violations(layout, palette)]


def layout_from_dict(data: Dict[str, Any], palette: Optional[CategoryPalette] = None) -> SceneLayout:
    try:
        doc = LayoutDocument.model_validate(data)
    except ValidationError as exc:
        first = exc.errors()[0]
        raise LayoutSchemaError(first.get("msg", "invalid value"), _field_path(tuple(first.get("loc", ())))) from exc
    if doc.version != LAYOUT_SCHEMA_VERSION:
        raise LayoutSchemaError(f"unsupported version {doc.version}", "version")

    layout = SceneLayout(
        rooms=tuple(
            RoomPolygon(
                vertices=tuple((float(x), float(y)) for x, y in room.vertices),
                floor_z=float(room.floor_z),
                ceiling_z=float(room.ceiling_z),
            )
            for room in doc.rooms
        ),
        boxes=tuple(
            SemanticBox(
                id=int(box.id),
                center=tuple(float(v) for v in box.center),
                size=tuple(float(v) for v in box.size),
                yaw=normalize_yaw(float(box.yaw)) if math.isfinite(box.yaw) else float(box.yaw),
                category=int(box.category),
            )
            for box in doc.boxes
        ),
        arch=tuple(
            ArchQuad(kind=quad.kind, corners=tuple(tuple(float(v) for v in c) for c in quad.corners))
            for quad in doc.arch
        ),
        room_type=doc.room_type,
        extra=dict(doc.model_extra or {}),
    )
    problems = layout_violations(layout, palette)
    if problems:
        raise problems[0]
    return layout


def load_layout(document: str, palette: Optional[CategoryPalette] = None) -> SceneLayout:
    """Разбирает layout-JSON текст и проверяет все инварианты."""
    try:
        data = json.loads(document)
    except json.JSONDecodeError as exc:
        raise LayoutSchemaError(f"invalid JSON: {exc.msg}", "$") from exc
    if not isinstance(data, dict):
        raise LayoutSchemaError("document must be an object", "$")
    if "version" not in data:
        raise LayoutSchemaError("field required", "version")
    return layout_from_dict(data, palette)


def layout_to_dict(layout: SceneLayout) -> Dict[str, Any]:
    result: Dict[str, Any] = {
        "version": LAYOUT_SCHEMA_VERSION,
        "rooms": [
            {"vertices": [list(v) for v in room.vertices], "floor_z": room.floor_z, "ceiling_z": room.ceiling_z}
            for room in layout.rooms
        ],
        "boxes": [
            {
                "id": box.id,
                "center": list(box.center),
                "size": list(box.size),
                "yaw": box.yaw,
                "category": box.category,
            }
            for box in layout.boxes
        ],
        "arch": [{"kind": quad.kind.value, "corners": [list(c) for c in quad.corners]} for quad in layout.arch],
        "room_type": layout.room_type,
    }
    for key, value in layout.extra.items():
        result.setdefault(key, value)
    return result


def save_layout(layout: SceneLayout) -> str:
    """Каноническая форма layout-JSON (UTF-8 текст)."""
    return json.dumps(layout_to_dict(layout), indent=2, ensure_ascii=False)


def filter_objects(layout: SceneLayout, min_edge: float = 0.1, max_edge: float = 1.8) -> SceneLayout:
    """
    Оставляет боксы, у которых все рёбра в [min_edge, max_edge] и центроид основания
    лежит внутри комнаты. Порядок сохраняется.
    """
    polygons = [room.polygon() for room in layout.rooms]
    kept = []
    for box in layout.boxes:
        if not all(min_edge <= s <= max_edge for s in box.size):
            logger.debug("layout.box_filtered", box_id=box.id, reason="edge")
            continue
        point = Point(box.center[0], box.center[1])
        if not any(poly.contains(point) for poly in polygons):
            logger.debug("layout.box_filtered", box_id=box.id, reason="outside")
            continue
        kept.append(box)
    return layout.with_boxes(kept)
