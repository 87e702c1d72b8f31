#!/usr/bin/env python3
"""
Генераторы траекторий камеры: forward, inward_orbit, outward_orbit, random_walk.

Все позиции лежат внутри полигона комнаты и не ближе clearance к стенам и
основаниям боксов. Проверка зазора: геометрическая (shapely), реальных
коллизионных мешей нет.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import structlog
from shapely.geometry import Point, Polygon

from core.camera import CameraView
from core.config import TrajectoryParams
from core.errors import InvalidInputError, PlacementError
from core.layout import SceneLayout
from core.rng import make_rng

logger = structlog.get_logger(__name__)

RANDOM_WALK_TURN_STD = math.pi / 6


class TrajectoryPattern(str, Enum):
    FORWARD = "forward"
    INWARD_ORBIT = "inward_orbit"
    OUTWARD_ORBIT = "outward_orbit"
    RANDOM_WALK = "random_walk"


@dataclass(frozen=True)
class Trajectory:
    pattern: TrajectoryPattern
    views: Tuple[CameraView, ...]

    def __len__(self) -> int:
        return len(self.views)

    def validate(self) -> List[str]:
        errors = []
        if len(self.views) < 2:
            errors.append("trajectory needs at least 2 views")
        return errors

    def positions(self) -> np.ndarray:
        return np.array([view.center for view in self.views])

    def to_dict(self) -> Dict[str, Any]:
        return {"pattern": self.pattern.value, "views": [view.to_dict() for view in self.views]}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Trajectory":
        try:
            pattern = TrajectoryPattern(data["pattern"])
            views = tuple(CameraView.from_dict(v) for v in data["views"])
        except (KeyError, ValueError, TypeError) as exc:
            raise InvalidInputError(f"malformed trajectory: {exc}") from exc
        trajectory = cls(pattern, views)
        errors = trajectory.validate()
        if errors:
            raise InvalidInputError("; ".join(errors))
        return trajectory

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "Trajectory":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InvalidInputError(f"invalid trajectory JSON: {exc.msg}") from exc
        return cls.from_dict(data)


class _Placement:
    """Проверка допустимости 2D позиции камеры в одной комнате."""

    def __init__(self, layout: SceneLayout, room_index: int, clearance: float):
        room = layout.rooms[room_index]
        self.polygon: Polygon = room.polygon()
        self.boundary = self.polygon.exterior
        self.footprints = [box.footprint_polygon() for box in layout.boxes]
        self.clearance = clearance

    def is_valid(self, xy: Sequence[float]) -> bool:
        point = Point(xy[0], xy[1])
        if not self.polygon.contains(point):
            return False
        if self.boundary.distance(point) < self.clearance:
            return False
        return all(fp.distance(point) >= self.clearance for fp in self.footprints)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        min_x, min_y, max_x, max_y = self.polygon.bounds
        return np.array([rng.uniform(min_x, max_x), rng.uniform(min_y, max_y)])


def position_problems(trajectory: Trajectory, layout: SceneLayout, clearance: float, room_index: int = 0) -> List[str]:
    """Позиции траектории вне комнаты или ближе clearance к стенам/боксам."""
    placement = _Placement(layout, room_index, clearance - 1e-9)
    return [
        f"view {idx}: position {view.center[:2].tolist()} violates clearance"
        for idx, view in enumerate(trajectory.views)
        if not placement.is_valid(view.center)
    ]


def _views(positions: List[np.ndarray], yaws: List[float], z: float, params: TrajectoryParams) -> Tuple[CameraView, ...]:
    return tuple(
        CameraView.looking((float(p[0]), float(p[1]), z), yaw, 0.0, params.fov, tuple(params.image_size))
        for p, yaw in zip(positions, yaws)
    )


def _forward(placement: _Placement, rng: np.random.Generator, params: TrajectoryParams):
    for _ in range(params.max_retries):
        start = placement.sample(rng)
        heading = rng.uniform(-math.pi, math.pi)
        step = params.spacing * np.array([math.cos(heading), math.sin(heading)])
        positions = [start + k * step for k in range(params.count)]
        if all(placement.is_valid(p) for p in positions):
            return positions, [heading] * params.count
    return None


def _inward_orbit(placement: _Placement, rng: np.random.Generator, params: TrajectoryParams, centroid: np.ndarray):
    radius = params.radius
    if radius is None:
        radius = 0.6 * placement.boundary.distance(Point(centroid[0], centroid[1]))
    for _ in range(params.max_retries):
        if radius <= 1e-6:
            break
        phase = rng.uniform(-math.pi, math.pi)
        angles = [phase + 2.0 * math.pi * k / params.count for k in range(params.count)]
        positions = [centroid + radius * np.array([math.cos(a), math.sin(a)]) for a in angles]
        if all(placement.is_valid(p) for p in positions):
            yaws = [math.atan2(centroid[1] - p[1], centroid[0] - p[0]) for p in positions]
            return positions, yaws
        radius *= 0.9
    return None


def _outward_orbit(placement: _Placement, rng: np.random.Generator, params: TrajectoryParams, centroid: np.ndarray):
    candidates = [centroid] + [placement.sample(rng) for _ in range(params.max_retries)]
    yaw0 = rng.uniform(-math.pi, math.pi)
    for position in candidates:
        if placement.is_valid(position):
            yaws = [yaw0 + 2.0 * math.pi * k / params.count for k in range(params.count)]
            return [position.copy() for _ in range(params.count)], yaws
    return None


def _random_walk(placement: _Placement, rng: np.random.Generator, params: TrajectoryParams):
    for _ in range(params.max_retries):
        position = placement.sample(rng)
        if not placement.is_valid(position):
            continue
        heading = rng.uniform(-math.pi, math.pi)
        positions = [position]
        headings: List[float] = []
        stuck = False
        while len(positions) < params.count and not stuck:
            stuck = True
            for _attempt in range(params.max_retries):
                candidate_heading = heading + rng.normal(0.0, RANDOM_WALK_TURN_STD)
                length = rng.uniform(0.5 * params.spacing, params.spacing)
                candidate = positions[-1] + length * np.array([math.cos(candidate_heading), math.sin(candidate_heading)])
                if placement.is_valid(candidate):
                    heading = candidate_heading
                    headings.append(heading)
                    positions.append(candidate)
                    stuck = False
                    break
        if stuck:
            continue
        # направление кадра k: направление шага k -> k+1, последний кадр наследует предыдущий
        yaws = headings + [headings[-1]]
        return positions, yaws
    return None


def gen_trajectory(
    layout: SceneLayout,
    pattern: TrajectoryPattern,
    params: Optional[TrajectoryParams] = None,
    room_index: int = 0,
) -> Trajectory:
    """Траектория заданного паттерна в комнате room_index; детерминирована по params.seed."""
    params = params or TrajectoryParams()
    pattern = TrajectoryPattern(pattern)
    if not layout.rooms:
        raise PlacementError(pattern.value, "layout has no rooms")
    if not 0 <= room_index < len(layout.rooms):
        raise InvalidInputError(f"room index {room_index} out of range")
    if params.count < 2:
        raise InvalidInputError("count must be >= 2")

    room = layout.rooms[room_index]
    placement = _Placement(layout, room_index, params.clearance)
    rng = make_rng(params.seed, list(TrajectoryPattern).index(pattern))
    centroid = room.centroid()

    if pattern is TrajectoryPattern.FORWARD:
        found = _forward(placement, rng, params)
    elif pattern is TrajectoryPattern.INWARD_ORBIT:
        found = _inward_orbit(placement, rng, params, centroid)
    elif pattern is TrajectoryPattern.OUTWARD_ORBIT:
        found = _outward_orbit(placement, rng, params, centroid)
    else:
        found = _random_walk(placement, rng, params)

    if found is None:
        raise PlacementError(
            pattern.value,
            f"no feasible placement for {params.count} views at clearance {params.clearance} m "
            f"after {params.max_retries} retries",
        )
    positions, yaws = found
    z = room.floor_z + params.camera_height
    trajectory = Trajectory(pattern, _views(positions, yaws, z, params))
    logger.info("trajectory.generated", pattern=pattern.value, views=len(trajectory), seed=params.seed)
    return trajectory
