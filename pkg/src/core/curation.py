#!/usr/bin/env python3
"""
Отбор сцен и кадров для датасета.

Пороги: строгие неравенства ("больше 20 м²", "больше 35 объектов"):
граничные значения отклоняются.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np
import structlog
from shapely.geometry import Point

from core.config import CurationThresholds
from core.layout import SceneLayout, box_corners

logger = structlog.get_logger(__name__)

REC601 = np.array([0.299, 0.587, 0.114])


@dataclass
class CurationResult:
    accepted: bool
    reasons: List[str] = field(default_factory=list)
    retained_rooms: List[int] = field(default_factory=list)
    room_reasons: Dict[int, List[str]] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "accepted": self.accepted,
            "reasons": list(self.reasons),
            "retained_rooms": list(self.retained_rooms),
            "room_reasons": {str(k): v for k, v in self.room_reasons.items()},
        }


def curate(
    scene: SceneLayout,
    panorama_count: int,
    thresholds: Optional[CurationThresholds] = None,
) -> CurationResult:
    """
    Решение accept/reject для сцены.

    Сцена: суммарная площадь комнат > min_scene_area, объектов > min_scene_objects,
    рендеров >= min_renderings. Комната остаётся, если площадь > min_room_area и
    объектов > min_room_objects; сцена без оставшихся комнат отклоняется.
    """
    thresholds = thresholds or CurationThresholds()
    reasons: List[str] = []

    area = scene.total_area
    if not area > thresholds.min_scene_area:
        reasons.append(f"floor area {area:.2f} m2 <= {thresholds.min_scene_area} m2")
    objects = len(scene.boxes)
    if not objects > thresholds.min_scene_objects:
        reasons.append(f"object count {objects} <= {thresholds.min_scene_objects}")
    if panorama_count < thresholds.min_renderings:
        reasons.append(f"renderings {panorama_count} < {thresholds.min_renderings}")

    per_room = [0] * len(scene.rooms)
    for box in scene.boxes:
        idx = scene.room_index_of(box)
        if idx is not None:
            per_room[idx] += 1

    retained: List[int] = []
    room_reasons: Dict[int, List[str]] = {}
    for idx, room in enumerate(scene.rooms):
        problems = []
        if not room.area > thresholds.min_room_area:
            problems.append(f"room floor area {room.area:.2f} m2 <= {thresholds.min_room_area} m2")
        if not per_room[idx] > thresholds.min_room_objects:
            problems.append(f"room object count {per_room[idx]} <= {thresholds.min_room_objects}")
        if problems:
            room_reasons[idx] = problems
        else:
            retained.append(idx)
    if not retained:
        reasons.append("no rooms retained")

    result = CurationResult(accepted=not reasons, reasons=reasons, retained_rooms=retained, room_reasons=room_reasons)
    logger.debug("curation.decision", accepted=result.accepted, reasons=len(reasons), rooms=len(retained))
    return result


def _camera_inside_box(position: np.ndarray, layout: SceneLayout) -> Optional[int]:
    for box in layout.boxes:
        corners = box_corners(box)
        z_min, z_max = corners[:, 2].min(), corners[:, 2].max()
        if not z_min <= position[2] <= z_max:
            continue
        if box.footprint_polygon().covers(Point(position[0], position[1])):
            return box.id
    return None


def check_view_quality(
    position: np.ndarray,
    color: np.ndarray,
    layout: SceneLayout,
    thresholds: Optional[CurationThresholds] = None,
) -> List[str]:
    """
    Проверка отрендеренного кадра: столкновение камеры с мебелью, пересвет,
    недосвет. Пустой список: кадр годен.
    """
    thresholds = thresholds or CurationThresholds()
    reasons: List[str] = []
    hit = _camera_inside_box(np.asarray(position, dtype=np.float64), layout)
    if hit is not None:
        reasons.append(f"camera collides with box {hit}")
    luma = np.asarray(color, dtype=np.float64)[..., :3] @ REC601
    bright = float(np.mean(luma > thresholds.overexposed_luma))
    if bright > thresholds.overexposed_fraction:
        reasons.append(f"over-exposed: {bright:.2f} of pixels above {thresholds.overexposed_luma}")
    mean_luma = float(np.mean(luma))
    if mean_luma < thresholds.min_mean_luma:
        reasons.append(f"under-lit: mean luma {mean_luma:.3f}")
    return reasons
