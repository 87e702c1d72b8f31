#!/usr/bin/env python3
"""
Модели камер, Plücker-карты лучей и преобразование панорама → перспектива.

Соглашения (едины для всего пакета):
- кадр камеры как в OpenCV: x вправо, y вниз, z вперёд; мир: +Z вверх;
- Pose.rotation: camera-to-world, столбцы [right, down, forward];
- центр пикселя (u, v): точка (u + 0.5, v + 0.5);
- depth: z в кадре камеры (planar depth), а не длина луча.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from core.errors import InvalidInputError

WORLD_UP = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        errors = self.validate()
        if errors:
            raise InvalidInputError("; ".join(errors))

    def validate(self) -> List[str]:
        errors = []
        if not (self.fx > 0 and self.fy > 0):
            errors.append("focal lengths must be positive")
        if not 0 < self.cx < self.width:
            errors.append("cx must lie inside the image")
        if not 0 < self.cy < self.height:
            errors.append("cy must lie inside the image")
        return errors

    @classmethod
    def from_fov(cls, fov: float, width: int, height: int) -> "Intrinsics":
        """Горизонтальный fov, квадратные пиксели, главная точка в центре кадра."""
        if not 0 < fov < math.pi:
            raise InvalidInputError(f"fov must lie in (0, pi), got {fov}")
        focal = (width / 2.0) / math.tan(fov / 2.0)
        return cls(fx=focal, fy=focal, cx=width / 2.0, cy=height / 2.0, width=int(width), height=int(height))

    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def inverse(self) -> np.ndarray:
        return np.array(
            [
                [1.0 / self.fx, 0.0, -self.cx / self.fx],
                [0.0, 1.0 / self.fy, -self.cy / self.fy],
                [0.0, 0.0, 1.0],
            ]
        )


@dataclass(frozen=True, eq=False)
class Pose:
    """Жёсткое преобразование camera-to-world."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=np.float64).reshape(3, 3))
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=np.float64).reshape(3))
        errors = self.validate()
        if errors:
            raise InvalidInputError("; ".join(errors))

    def validate(self) -> List[str]:
        errors = []
        r = self.rotation
        if not np.all(np.isfinite(r)) or not np.all(np.isfinite(self.translation)):
            errors.append("pose must be finite")
        elif not np.allclose(r.T @ r, np.eye(3), atol=1e-6):
            errors.append("rotation must be orthonormal")
        elif np.linalg.det(r) <= 0:
            errors.append("rotation determinant must be +1")
        return errors

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Pose):
            return NotImplemented
        return bool(np.array_equal(self.rotation, other.rotation) and np.array_equal(self.translation, other.translation))

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    @property
    def forward(self) -> np.ndarray:
        return self.rotation[:, 2]

    def to_world(self, points: np.ndarray) -> np.ndarray:
        return points @ self.rotation.T + self.translation

    def to_camera(self, points: np.ndarray) -> np.ndarray:
        return (points - self.translation) @ self.rotation


def look_rotation(yaw: float, pitch: float = 0.0) -> np.ndarray:
    """Поворот camera-to-world для взгляда с азимутом yaw (от +X к +Y) и наклоном pitch (вверх > 0)."""
    forward = np.array(
        [math.cos(pitch) * math.cos(yaw), math.cos(pitch) * math.sin(yaw), math.sin(pitch)]
    )
    right = np.cross(forward, WORLD_UP)
    norm = np.linalg.norm(right)
    if norm < 1e-12:
        right = np.array([math.sin(yaw), -math.cos(yaw), 0.0])
    else:
        right = right / norm
    down = np.cross(forward, right)
    return np.column_stack([right, down, forward])


def look_at_rotation(position: Sequence[float], target: Sequence[float]) -> np.ndarray:
    direction = np.asarray(target, dtype=np.float64) - np.asarray(position, dtype=np.float64)
    yaw = math.atan2(direction[1], direction[0])
    pitch = math.atan2(direction[2], math.hypot(direction[0], direction[1]))
    return look_rotation(yaw, pitch)


@dataclass(frozen=True)
class CameraView:
    intrinsics: Intrinsics
    pose: Pose

    @property
    def width(self) -> int:
        return self.intrinsics.width

    @property
    def height(self) -> int:
        return self.intrinsics.height

    @property
    def center(self) -> np.ndarray:
        return self.pose.translation

    @property
    def yaw(self) -> float:
        forward = self.pose.forward
        return math.atan2(forward[1], forward[0])

    @classmethod
    def looking(
        cls,
        position: Sequence[float],
        yaw: float,
        pitch: float = 0.0,
        fov: float = math.pi / 2,
        size: Tuple[int, int] = (64, 64),
    ) -> "CameraView":
        """Камера в position с заданным yaw/pitch; size = (height, width)."""
        height, width = size
        return cls(Intrinsics.from_fov(fov, width, height), Pose(look_rotation(yaw, pitch), np.asarray(position, dtype=np.float64)))

    def to_dict(self) -> Dict[str, Any]:
        k = self.intrinsics
        return {
            "fx": k.fx,
            "fy": k.fy,
            "cx": k.cx,
            "cy": k.cy,
            "width": k.width,
            "height": k.height,
            "rotation": [float(v) for v in self.pose.rotation.reshape(-1)],
            "translation": [float(v) for v in self.pose.translation],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "CameraView":
        intrinsics = Intrinsics(
            fx=float(data["fx"]),
            fy=float(data["fy"]),
            cx=float(data["cx"]),
            cy=float(data["cy"]),
            width=int(data["width"]),
            height=int(data["height"]),
        )
        return cls(intrinsics, Pose(np.asarray(data["rotation"], dtype=np.float64).reshape(3, 3), data["translation"]))


def camera_rays(view: CameraView) -> np.ndarray:
    """Лучи K^-1 [u+.5, v+.5, 1] в кадре камеры, shape (H, W, 3), z = 1."""
    k = view.intrinsics
    us = (np.arange(k.width, dtype=np.float64) + 0.5 - k.cx) / k.fx
    vs = (np.arange(k.height, dtype=np.float64) + 0.5 - k.cy) / k.fy
    uu, vv = np.meshgrid(us, vs)
    return np.stack([uu, vv, np.ones_like(uu)], axis=-1)


def world_rays(view: CameraView) -> np.ndarray:
    """Те же лучи в мировом кадре (не нормированы: параметр t вдоль луча = planar depth)."""
    return camera_rays(view) @ view.pose.rotation.T


def unproject(view: CameraView, pixel: Tuple[float, float], depth: float) -> np.ndarray:
    """Мировая точка пикселя (u, v) на planar-глубине depth."""
    if not depth > 0:
        raise InvalidInputError(f"depth must be positive, got {depth}")
    u, v = pixel
    k = view.intrinsics
    if not (0 <= u < k.width and 0 <= v < k.height):
        raise InvalidInputError(f"pixel {pixel} outside {k.width}x{k.height}")
    ray = k.inverse() @ np.array([u + 0.5, v + 0.5, 1.0])
    return view.pose.to_world(depth * ray)


def unproject_depth(view: CameraView, depth: np.ndarray) -> np.ndarray:
    """Векторная версия unproject для целой карты глубины, shape (H, W, 3)."""
    cam = camera_rays(view) * depth[..., None]
    return view.pose.to_world(cam)


def project(view: CameraView, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Проекция мировых точек (N, 3) в пиксельные координаты.

    Возвращает (uv, z): uv: индекс пикселя в непрерывной шкале (центр пикселя (u, v)
    проецируется ровно в (u, v)), z: planar-глубина. Точки с z <= 0 дают nan в uv.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    cam = view.pose.to_camera(pts)
    z = cam[:, 2]
    k = view.intrinsics
    with np.errstate(divide="ignore", invalid="ignore"):
        u = k.fx * cam[:, 0] / z + k.cx - 0.5
        v = k.fy * cam[:, 1] / z + k.cy - 0.5
    uv = np.stack([u, v], axis=-1)
    uv[z <= 0] = np.nan
    return uv, z


def plucker_map(view: CameraView) -> np.ndarray:
    """(H, W, 6): единичное направление d и момент m = o x d для каждого пикселя."""
    rays = world_rays(view)
    d = rays / np.linalg.norm(rays, axis=-1, keepdims=True)
    m = np.cross(np.broadcast_to(view.center, d.shape), d)
    return np.concatenate([d, m], axis=-1)


# --- equirectangular ----------------------------------------------------------


def _sample_equirect(equirect: np.ndarray, lon: np.ndarray, lat: np.ndarray) -> np.ndarray:
    height, width = equirect.shape[:2]
    x = (lon + math.pi) / (2.0 * math.pi) * width - 0.5
    y = (math.pi / 2.0 - lat) / math.pi * height - 0.5
    y = np.clip(y, 0.0, height - 1.0)

    x0 = np.floor(x)
    ax = x - x0
    x0 = x0.astype(np.int64) % width
    x1 = (x0 + 1) % width
    y0 = np.floor(y).astype(np.int64)
    ay = y - y0
    y1 = np.minimum(y0 + 1, height - 1)

    data = equirect.astype(np.float64)
    if data.ndim == 3:
        ax = ax[..., None]
        ay = ay[..., None]
    top = data[y0, x0] + ax * (data[y0, x1] - data[y0, x0])
    bottom = data[y1, x0] + ax * (data[y1, x1] - data[y1, x0])
    return top + ay * (bottom - top)


def pano_to_persp(
    equirect: np.ndarray,
    yaw: float,
    pitch: float,
    fov: float,
    out_size: Union[int, Tuple[int, int]],
) -> np.ndarray:
    """
    Перспективный кадр из эквиректангулярной панорамы (H x 2H).

    Долгота 0: направление +X, растёт к +Y; столбцы панорамы идут от -pi к pi.
    Билинейная интерполяция, по горизонтали с заворотом, по вертикали с зажимом.
    """
    equirect = np.asarray(equirect)
    if equirect.ndim not in (2, 3) or equirect.shape[1] != 2 * equirect.shape[0]:
        raise InvalidInputError(f"equirect must be H x 2H, got {equirect.shape[:2]}")
    if not 0 < fov < math.pi:
        raise InvalidInputError(f"fov must lie in (0, pi), got {fov}")
    out_h, out_w = (out_size, out_size) if isinstance(out_size, int) else out_size
    view = CameraView.looking((0.0, 0.0, 0.0), yaw, pitch, fov, (out_h, out_w))
    rays = world_rays(view)
    lon = np.arctan2(rays[..., 1], rays[..., 0])
    lat = np.arctan2(rays[..., 2], np.hypot(rays[..., 0], rays[..., 1]))
    sampled = _sample_equirect(equirect, lon, lat)
    if np.issubdtype(equirect.dtype, np.integer):
        info = np.iinfo(equirect.dtype)
        return np.clip(np.rint(sampled), info.min, info.max).astype(equirect.dtype)
    return sampled.astype(equirect.dtype, copy=False)


def pano_split(
    equirect: np.ndarray,
    count: int = 8,
    fov: float = math.pi / 2,
    out_size: Union[int, Tuple[int, int]] = 256,
    pitch: float = 0.0,
) -> List[np.ndarray]:
    """Разрезает панораму на count перспективных кадров с шагом yaw 2*pi/count."""
    if count < 1:
        raise InvalidInputError("count must be >= 1")
    return [pano_to_persp(equirect, 2.0 * math.pi * k / count, pitch, fov, out_size) for k in range(count)]


def equirect_directions(height: int, width: Optional[int] = None) -> np.ndarray:
    """Единичные направления центров пикселей панорамы, shape (H, 2H, 3)."""
    width = width or 2 * height
    lon = (np.arange(width) + 0.5) / width * 2.0 * math.pi - math.pi
    lat = math.pi / 2.0 - (np.arange(height) + 0.5) / height * math.pi
    lon_g, lat_g = np.meshgrid(lon, lat)
    return np.stack(
        [np.cos(lat_g) * np.cos(lon_g), np.cos(lat_g) * np.sin(lon_g), np.sin(lat_g)],
        axis=-1,
    )
