#!/usr/bin/env python3
"""
Растеризация layout'а в условия кадра: семантика, глубина, карта координат сцены.

Z-буфер по треугольникам с отсечением ближней плоскостью; отсечение задних
граней выключено (боксы видны и изнутри).
"""

from __future__ import annotations

from typing import List, Optional, Tuple

import numpy as np
import structlog

from core.camera import CameraView, project, unproject_depth
from core.config import RasterConfig
from core.geometry import Surfaces, layout_surfaces, take_nearer
from core.layout import SceneLayout
from core.maps import SceneCoordMap
from core.palette import VOID_ID
from core.parallel import run_bands

logger = structlog.get_logger(__name__)

INSIDE_TOLERANCE = 1e-9


def clip_near(vertices: np.ndarray, near: float) -> List[np.ndarray]:
    """Sutherland–Hodgman по плоскости z = near, затем веер треугольников."""
    out: List[np.ndarray] = []
    n = len(vertices)
    for i in range(n):
        cur, nxt = vertices[i], vertices[(i + 1) % n]
        cur_in, nxt_in = cur[2] >= near, nxt[2] >= near
        if cur_in:
            out.append(cur)
        if cur_in != nxt_in:
            t = (near - cur[2]) / (nxt[2] - cur[2])
            point = cur + t * (nxt - cur)
            point[2] = near
            out.append(point)
    if len(out) < 3:
        return []
    return [np.array([out[0], out[i], out[i + 1]]) for i in range(1, len(out) - 1)]


def _raster_triangle(
    tri_cam: np.ndarray,
    view: CameraView,
    rows: Tuple[int, int],
) -> Optional[Tuple[slice, slice, np.ndarray]]:
    """Глубина треугольника (в кадре камеры) на пикселях полосы rows; inf вне его."""
    k = view.intrinsics
    z = tri_cam[:, 2]
    sx = k.fx * tri_cam[:, 0] / z + k.cx
    sy = k.fy * tri_cam[:, 1] / z + k.cy

    area = (sx[1] - sx[0]) * (sy[2] - sy[0]) - (sx[2] - sx[0]) * (sy[1] - sy[0])
    if abs(area) < 1e-14:
        return None
    u0 = max(int(np.floor(sx.min() - 0.5)), 0)
    u1 = min(int(np.ceil(sx.max() - 0.5)), k.width - 1)
    v0 = max(int(np.floor(sy.min() - 0.5)), rows[0])
    v1 = min(int(np.ceil(sy.max() - 0.5)), rows[1] - 1)
    if u0 > u1 or v0 > v1:
        return None

    px, py = np.meshgrid(np.arange(u0, u1 + 1) + 0.5, np.arange(v0, v1 + 1) + 0.5)
    w0 = ((sx[1] - px) * (sy[2] - py) - (sx[2] - px) * (sy[1] - py)) / area
    w1 = ((sx[2] - px) * (sy[0] - py) - (sx[0] - px) * (sy[2] - py)) / area
    w2 = 1.0 - w0 - w1
    inside = (w0 >= -INSIDE_TOLERANCE) & (w1 >= -INSIDE_TOLERANCE) & (w2 >= -INSIDE_TOLERANCE)
    if not np.any(inside):
        return None
    inv_z = w0 / z[0] + w1 / z[1] + w2 / z[2]
    with np.errstate(divide="ignore"):
        depth = np.where(inside & (inv_z > 0), 1.0 / np.where(inv_z > 0, inv_z, 1.0), np.inf)
    return slice(v0, v1 + 1), slice(u0, u1 + 1), depth


def rasterize_surfaces(
    surfaces: Surfaces,
    view: CameraView,
    config: Optional[RasterConfig] = None,
    threads: Optional[int] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """Z-буфер: (depth c inf для промаха, индекс победившего треугольника или -1)."""
    config = config or RasterConfig()
    height, width = view.height, view.width
    depth = np.full((height, width), np.inf)
    winner = np.full((height, width), -1, dtype=np.int64)
    if len(surfaces) == 0:
        return depth, winner

    cam_tris = view.pose.to_camera(surfaces.triangles.reshape(-1, 3)).reshape(-1, 3, 3)
    pieces: List[Tuple[int, np.ndarray]] = []
    for index, tri in enumerate(cam_tris):
        if np.all(tri[:, 2] < config.near):
            continue
        for piece in clip_near(tri, config.near):
            pieces.append((index, piece))

    def band(row_start: int, row_end: int) -> None:
        for index, piece in pieces:
            hit = _raster_triangle(piece, view, (row_start, row_end))
            if hit is None:
                continue
            rows, cols, candidate = hit
            take_nearer(depth[rows, cols], winner[rows, cols], candidate, index, surfaces.priorities, config.tie_epsilon)

    run_bands(height, band, threads)
    return depth, winner


def rasterize_layout(
    layout: SceneLayout,
    view: CameraView,
    config: Optional[RasterConfig] = None,
    threads: Optional[int] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Семантическая карта (H, W) int64 и карта глубины (H, W) float64 для кадра.

    Промах: семантика VOID_ID, глубина 0.
    """
    surfaces = layout_surfaces(layout)
    depth, winner = rasterize_surfaces(surfaces, view, config, threads)
    hit = winner >= 0
    semantic = np.full(winner.shape, VOID_ID, dtype=np.int64)
    semantic[hit] = surfaces.categories[winner[hit]]
    depth = np.where(hit, depth, 0.0)
    logger.debug("raster.done", triangles=len(surfaces), covered=int(hit.sum()))
    return semantic, depth


def depth_to_scm(depth: np.ndarray, view: CameraView) -> SceneCoordMap:
    """P = T · (K^-1 · D) для пикселей с depth > 0; остальные невалидны."""
    depth = np.asarray(depth, dtype=np.float64)
    mask = depth > 0
    points = unproject_depth(view, np.where(mask, depth, 0.0))
    return SceneCoordMap(points, mask)


def scm_to_depth(scm: SceneCoordMap, view: CameraView, tolerance_px: float = 0.5) -> Tuple[np.ndarray, int]:
    """
    Обратное преобразование: depth = z точки в кадре камеры.

    Возвращает (depth, inconsistent): точки за камерой дают 0; inconsistent: число
    валидных пикселей, чья точка проецируется дальше tolerance_px от центра своего пикселя.
    """
    height, width = scm.shape
    flat = scm.points.reshape(-1, 3)
    uv, z = project(view, flat)
    z = z.reshape(height, width)
    valid = scm.mask & (z > 0)
    depth = np.where(valid, z, 0.0)

    vs, us = np.mgrid[0:height, 0:width]
    uv = uv.reshape(height, width, 2)
    with np.errstate(invalid="ignore"):
        offset = np.maximum(np.abs(uv[..., 0] - us), np.abs(uv[..., 1] - vs))
        inconsistent = int(np.sum(valid & ~(offset <= tolerance_px)))
    return depth, inconsistent
