#!/usr/bin/env python3
"""
Итеративная генерация плотного набора видов с глобальным облаком точек.

Инициализация: бэкенд выводит S, P источников, облако ← их SCM. Далее для
каждого батча целевых камер: облако фильтруется по уверенности и сплэтится
в целевые виды, бэкенд генерирует виды по исходным M источникам + варпам,
SCM целевых видов добавляются в облако. Источники не меняются между итерациями.
"""

from __future__ import annotations

import asyncio
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import structlog

from core.backends import GenerationRequest, GeneratorBackend
from core.errors import InvalidInputError, PipelineError, SpatialGenError
from core.formats import write_color_png, write_depth_png, write_ply, write_scm, write_semantic_png
from core.iteration_state import IterationLog, IterationStatus
from core.layout import SceneLayout
from core.maps import ViewMaps
from core.trajectory import Trajectory
from core.warp import GlobalPointCloud, WarpedImage, filter_by_confidence, insert_scm, splat

logger = structlog.get_logger(__name__)

SOURCE_COUNTS = (1, 3, 7)
VIEWS_PER_CALL = 8


@dataclass(frozen=True)
class IterationPlan:
    """Индексы траектории: M источников и K непересекающихся батчей целевых видов."""

    sources: Tuple[int, ...]
    batches: Tuple[Tuple[int, ...], ...]

    @property
    def iterations(self) -> int:
        return len(self.batches)

    def targets(self) -> List[int]:
        return [idx for batch in self.batches for idx in batch]

    def order(self) -> List[int]:
        return list(self.sources) + self.targets()

    def validate(self, max_views: int = VIEWS_PER_CALL) -> List[str]:
        errors = []
        seen = set(self.sources)
        if len(seen) != len(self.sources):
            errors.append("duplicate source views")
        for k, batch in enumerate(self.batches, start=1):
            if not batch:
                errors.append(f"batch {k} is empty")
            if len(batch) + len(self.sources) > max_views:
                errors.append(f"batch {k}: {len(batch)} targets + {len(self.sources)} sources exceed {max_views} views")
            overlap = seen.intersection(batch)
            if overlap:
                errors.append(f"batch {k} repeats views {sorted(overlap)}")
            seen.update(batch)
        return errors

    def to_dict(self) -> Dict[str, Any]:
        return {"sources": list(self.sources), "batches": [list(b) for b in self.batches]}


def plan_iterations(
    trajectory: Union[Trajectory, Sequence, int],
    sources: int,
    batch_size: Optional[int] = None,
) -> IterationPlan:
    """
    Первые M видов траектории: источники; остальные жадно режутся на батчи
    по batch_size (по умолчанию 8 − M) в порядке траектории.
    """
    count = trajectory if isinstance(trajectory, int) else len(trajectory)
    if sources not in SOURCE_COUNTS:
        raise InvalidInputError(f"source count must be one of {SOURCE_COUNTS}, got {sources}")
    if count < sources + 1:
        raise InvalidInputError(f"trajectory has {count} views, need at least {sources + 1}")
    batch_size = VIEWS_PER_CALL - sources if batch_size is None else batch_size
    if batch_size < 1:
        raise InvalidInputError(f"batch size must be positive, got {batch_size}")
    rest = list(range(sources, count))
    batches = tuple(tuple(rest[i : i + batch_size]) for i in range(0, len(rest), batch_size))
    return IterationPlan(tuple(range(sources)), batches)


@dataclass
class PipelineState:
    cloud: GlobalPointCloud
    outputs: Dict[int, ViewMaps] = field(default_factory=dict)
    warps: Dict[int, WarpedImage] = field(default_factory=dict)
    cloud_sizes: List[int] = field(default_factory=list)
    log: IterationLog = field(default_factory=IterationLog)
    manifest: Dict[str, Any] = field(default_factory=dict)

    def views(self, plan: IterationPlan) -> List[ViewMaps]:
        return [self.outputs[idx] for idx in plan.order()]

    def equals(self, other: "PipelineState") -> bool:
        if sorted(self.outputs) != sorted(other.outputs) or self.cloud_sizes != other.cloud_sizes:
            return False
        same_views = all(self.outputs[k].equals(other.outputs[k]) for k in self.outputs)
        return same_views and self.cloud.equals(other.cloud)


def _write_checkpoint(
    directory: Path,
    index: int,
    state: PipelineState,
    view_ids: Sequence[int],
) -> Path:
    target = directory / f"iter_{index:02d}"
    target.mkdir(parents=True, exist_ok=True)
    for view_id in view_ids:
        maps = state.outputs[view_id]
        stem = f"view_{view_id:03d}"
        write_color_png(target / f"{stem}_color.png", maps.color)
        write_semantic_png(target / f"{stem}_semantic.png", maps.semantic)
        write_depth_png(target / f"{stem}_depth.png", maps.depth)
        write_scm(target / f"{stem}.scm", maps.scm)
        warp = state.warps.get(view_id)
        if warp is not None:
            write_color_png(target / f"{stem}_warp.png", warp.color)
    write_ply(target / "cloud.ply", state.cloud)
    (target / "iteration.json").write_text(
        json.dumps(state.log.records[index].to_dict(), indent=2, sort_keys=True), encoding="utf-8"
    )
    return target


async def _warp_targets(cloud: GlobalPointCloud, views, radius_px: float) -> List[WarpedImage]:
    return list(await asyncio.gather(*(asyncio.to_thread(splat, cloud, view, radius_px) for view in views)))


async def run(
    plan: IterationPlan,
    trajectory: Trajectory,
    layout: SceneLayout,
    source_images: Sequence[np.ndarray],
    backend: GeneratorBackend,
    tau: float = 1.5,
    radius_px: float = 1.0,
    checkpoint_dir: Optional[Path] = None,
) -> PipelineState:
    """
    Исполняет план. После каждой итерации (если задан checkpoint_dir) виды и
    облако пишутся на диск; при ошибке бэкенда записанные итерации сохраняются,
    а наружу выходит PipelineError с числом завершённых итераций.
    """
    errors = plan.validate(backend.max_views)
    if errors:
        raise InvalidInputError("; ".join(errors))
    if len(source_images) != len(plan.sources):
        raise InvalidInputError(f"plan has {len(plan.sources)} sources, got {len(source_images)} images")
    if tau < 1.0:
        raise InvalidInputError(f"tau must be >= 1, got {tau}")
    views = trajectory.views
    if max(plan.order()) >= len(views):
        raise InvalidInputError("plan refers to views beyond the trajectory")

    state = PipelineState(cloud=GlobalPointCloud.empty())
    state.manifest = {
        "plan": plan.to_dict(),
        "tau": tau,
        "radius_px": radius_px,
        "backend": backend.describe(),
        "checkpoints": [],
    }
    images = [np.asarray(img, dtype=np.float64) for img in source_images]
    source_views = [views[idx] for idx in plan.sources]

    async def checkpoint(index: int, view_ids: Sequence[int]) -> None:
        if checkpoint_dir is None:
            return
        path = await asyncio.to_thread(_write_checkpoint, Path(checkpoint_dir), index, state, view_ids)
        state.log.mark(index, IterationStatus.CHECKPOINTED, checkpoint=str(path))
        state.manifest["checkpoints"].append(str(path))

    # инициализация: S_M, P_M источников вызовом без целевых видов
    state.log.register(0, list(plan.sources))
    try:
        state.log.mark(0, IterationStatus.GENERATING)
        maps = await backend.generate(
            GenerationRequest(views=source_views, view_ids=list(plan.sources), source_images=images, layout=layout)
        )
        for idx, view_maps in zip(plan.sources, maps):
            state.outputs[idx] = view_maps
            state.cloud = insert_scm(state.cloud, view_maps, idx)
        state.cloud_sizes.append(len(state.cloud))
        state.log.mark(0, IterationStatus.INSERTED, points_after=len(state.cloud))
        await checkpoint(0, plan.sources)
    except (SpatialGenError, OSError, RuntimeError, ValueError) as exc:
        state.log.mark_failed(0, str(exc))
        logger.error("pipeline.init_failed", error=str(exc))
        raise PipelineError(f"initialization failed: {exc}", 0) from exc
    logger.info("pipeline.initialized", sources=list(plan.sources), points=len(state.cloud))

    for k, batch in enumerate(plan.batches, start=1):
        record = state.log.register(k, list(batch))
        record.points_before = len(state.cloud)
        try:
            state.log.mark(k, IterationStatus.WARPING)
            target_views = [views[idx] for idx in batch]
            warps = await _warp_targets(filter_by_confidence(state.cloud, tau), target_views, radius_px)
            for idx, warp in zip(batch, warps):
                state.warps[idx] = warp

            state.log.mark(k, IterationStatus.GENERATING, coverage=[float(w.coverage.mean()) for w in warps])
            maps = await backend.generate(
                GenerationRequest(
                    views=source_views + target_views,
                    view_ids=list(plan.sources) + list(batch),
                    source_images=images,
                    layout=layout,
                    warps=warps,
                    iteration=k,
                )
            )
            for idx, view_maps in zip(batch, maps[len(plan.sources) :]):
                state.outputs[idx] = view_maps
                state.cloud = insert_scm(state.cloud, view_maps, idx)
            state.cloud_sizes.append(len(state.cloud))
            state.log.mark(k, IterationStatus.INSERTED, points_after=len(state.cloud))
            await checkpoint(k, batch)
        except (SpatialGenError, OSError, RuntimeError, ValueError) as exc:
            state.log.mark_failed(k, str(exc))
            completed = state.log.completed()
            logger.error("pipeline.iteration_failed", iteration=k, completed=completed, error=str(exc))
            raise PipelineError(f"iteration {k} failed: {exc}", completed) from exc
        logger.info(
            "pipeline.iteration_done",
            iteration=k,
            targets=len(batch),
            points=len(state.cloud),
            coverage=round(float(np.mean(record.coverage)), 4) if record.coverage else 0.0,
        )

    state.manifest["iterations"] = state.log.to_event_list()
    counters = {status.value: n for status, n in state.log.status_counters().items() if n}
    logger.info("pipeline.done", iterations=plan.iterations, points=len(state.cloud), statuses=counters)
    return state


def run_sync(*args, **kwargs) -> PipelineState:
    """Синхронная обёртка для CLI и скриптов."""
    return asyncio.run(run(*args, **kwargs))
