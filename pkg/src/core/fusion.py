#!/usr/bin/env python3
"""
Слияние сгенерированных кадров в дедуплицированное облако точек.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, Union

import numpy as np
import structlog

from core.errors import InvalidInputError
from core.warp import GlobalPointCloud

logger = structlog.get_logger(__name__)


@dataclass(frozen=True, eq=False)
class FusedScene:
    cloud: GlobalPointCloud
    voxel: float
    provenance: Dict[int, int] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "points": len(self.cloud),
            "voxel": self.voxel,
            "provenance": {str(k): v for k, v in sorted(self.provenance.items())},
        }


def voxel_keys(positions: np.ndarray, voxel: float) -> np.ndarray:
    return np.floor(positions / voxel).astype(np.int64)


def fuse(source: Union[GlobalPointCloud, Any], voxel: float) -> FusedScene:
    """
    Одна точка на ячейку воксельной сетки: с максимальной уверенностью,
    при равенстве: с меньшим индексом. Выжившие идут в исходном порядке.
    """
    if not voxel > 0:
        raise InvalidInputError(f"voxel must be positive, got {voxel}")
    cloud = source if isinstance(source, GlobalPointCloud) else source.cloud
    if len(cloud) == 0:
        return FusedScene(GlobalPointCloud.empty(), voxel, {})

    keys = voxel_keys(cloud.positions, voxel)
    index = np.arange(len(cloud))
    order = np.lexsort((index, -cloud.confidence, keys[:, 2], keys[:, 1], keys[:, 0]))
    sorted_keys = keys[order]
    first = np.ones(len(order), dtype=bool)
    first[1:] = np.any(sorted_keys[1:] != sorted_keys[:-1], axis=1)
    survivors = np.sort(order[first])

    fused = cloud.select(survivors)
    views, counts = np.unique(fused.source_view, return_counts=True)
    provenance = {int(v): int(c) for v, c in zip(views, counts)}
    logger.info("fusion.done", points_in=len(cloud), points_out=len(fused), voxel=voxel)
    return FusedScene(fused, voxel, provenance)
