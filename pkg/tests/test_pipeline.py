import json

import numpy as np
import pytest

from core.backends import BackendFactory, BackendType, OracleBackend, source_images_for
from core.camera import project, world_rays
from core.config import TrajectoryParams
from core.errors import BackendError, InvalidInputError, PipelineError
from core.fusion import fuse
from core.geometry import layout_surfaces
from core.iteration_state import IterationStatus
from core.metrics import chamfer
from core.pipeline import IterationPlan, plan_iterations, run, run_sync
from core.synth import Difficulty, gen_scene, ray_cast, render_gt, surface_samples
from core.trajectory import TrajectoryPattern, gen_trajectory
from core.warp import splat_winners


def _setup(views=15, seed=2, sources=1):
    scene = gen_scene(seed, Difficulty.SPARSE)
    trajectory = gen_trajectory(
        scene.layout, TrajectoryPattern.OUTWARD_ORBIT, TrajectoryParams(count=views, image_size=(16, 16), seed=seed)
    )
    plan = plan_iterations(trajectory, sources)
    images = source_images_for(scene, [trajectory.views[i] for i in plan.sources])
    return scene, trajectory, plan, images


class FailingBackend(OracleBackend):
    """Оракул, падающий на заданной итерации."""

    def __init__(self, scene, fail_at):
        super().__init__(scene)
        self.fail_at = fail_at

    def _generate(self, request):
        if request.iteration == self.fail_at:
            raise BackendError(f"synthetic failure at iteration {request.iteration}")
        return super()._generate(request)


@pytest.mark.parametrize(
    "views, sources, batches",
    [
        (15, 1, [7, 7]),
        (8, 7, [1]),
        (8, 1, [7]),
        (12, 3, [5, 4]),
    ],
)
def test_plan_shapes(views, sources, batches):
    plan = plan_iterations(views, sources)
    assert [len(b) for b in plan.batches] == batches
    assert plan.order() == list(range(views))
    assert plan.validate() == []


def test_plan_with_custom_batch_size():
    plan = plan_iterations(10, 3, batch_size=2)
    assert plan.batches == ((3, 4), (5, 6), (7, 8), (9,))


@pytest.mark.parametrize("views, sources", [(10, 2), (3, 3), (1, 1)])
def test_plan_rejects_bad_input(views, sources):
    with pytest.raises(InvalidInputError):
        plan_iterations(views, sources)


def test_plan_validation_catches_overflow():
    plan = IterationPlan(sources=(0, 1, 2), batches=((3, 4, 5, 6, 7, 8),))
    assert any("exceed" in e for e in plan.validate())
    assert any("repeats" in e for e in IterationPlan((0,), ((0, 1),)).validate())


@pytest.mark.asyncio
async def test_oracle_run_reproduces_ground_truth():
    scene, trajectory, plan, images = _setup()
    backend = BackendFactory.create(BackendType.ORACLE, scene=scene)
    state = await run(plan, trajectory, scene.layout, images, backend)
    assert sorted(state.outputs) == list(range(15))
    for idx in plan.targets():
        gt = render_gt(scene, trajectory.views[idx])
        assert np.array_equal(state.outputs[idx].color, gt.color)
        assert np.array_equal(state.outputs[idx].semantic, gt.semantic)
    assert state.log.completed() == 2
    assert all(r.status is IterationStatus.INSERTED for r in state.log.records.values())


@pytest.mark.asyncio
async def test_cloud_bookkeeping_and_coverage():
    scene, trajectory, plan, images = _setup()
    state = await run(plan, trajectory, scene.layout, images, OracleBackend(scene))
    valid = {idx: state.outputs[idx].scm.valid_count for idx in state.outputs}
    assert state.cloud_sizes[0] == sum(valid[i] for i in plan.sources)
    for k, batch in enumerate(plan.batches, start=1):
        assert state.cloud_sizes[k] == state.cloud_sizes[k - 1] + sum(valid[i] for i in batch)
        record = state.log.records[k]
        assert record.points_before == state.cloud_sizes[k - 1]
        assert record.points_after == state.cloud_sizes[k]
    assert len(state.cloud) == state.cloud_sizes[-1]
    # соседние виды вращения на месте перекрываются с уже накопленным облаком
    assert max(state.log.records[1].coverage) > 0.0


def _surface_of(surfaces, view, points):
    """Треугольник, на котором лежит каждая точка, если она видна из view; иначе -1."""
    rays = (points - view.center)[None]
    t, tri = ray_cast(surfaces, view.center, rays)
    return np.where(np.abs(t[0] - 1.0) < 1e-6, tri[0], -1)


@pytest.mark.asyncio
@pytest.mark.parametrize("radius_px", [0.5, 1.0])
async def test_warps_reproduce_ground_truth_colors(radius_px):
    scene, trajectory, plan, images = _setup()
    state = await run(plan, trajectory, scene.layout, images, OracleBackend(scene), radius_px=radius_px)
    surfaces = layout_surfaces(scene.layout)
    normals = surfaces.normals()
    inserted = list(plan.sources)
    checked = covered = 0
    for batch in plan.batches:
        before = state.cloud.select(np.flatnonzero(np.isin(state.cloud.source_view, inserted)))
        for idx in batch:
            view = trajectory.views[idx]
            warp = state.warps[idx]
            winners = splat_winners(before, view, radius_px)
            assert np.array_equal(winners >= 0, warp.coverage)

            vs, us = np.nonzero(winners >= 0)
            points = before.positions[winners[vs, us]]
            uv, _ = project(view, points)
            # проекция победителя попала в сам пиксель
            inside = np.all(np.abs(uv - np.stack([us, vs], axis=-1)) <= 0.5, axis=-1)
            if radius_px == 0.5:
                assert inside.all()
            _, pixel_tri = ray_cast(surfaces, view.center, world_rays(view))
            point_tri = _surface_of(surfaces, view, points)
            target_tri = pixel_tri[vs, us]
            # и лежит на той же затенённой плоскости, что и поверхность под центром пикселя
            same_plane = (
                (point_tri >= 0)
                & (target_tri >= 0)
                & (surfaces.categories[np.maximum(point_tri, 0)] == surfaces.categories[np.maximum(target_tri, 0)])
                & (np.abs(np.sum(normals[point_tri] * normals[target_tri], axis=-1)) > 1.0 - 1e-9)
            )
            exact = inside & same_plane
            gt = render_gt(scene, view).color
            np.testing.assert_array_equal(warp.color[vs[exact], us[exact]], gt[vs[exact], us[exact]])
            checked += int(exact.sum())
            covered += len(vs)
        inserted += list(batch)
    assert covered > 0
    assert checked > (covered // 2 if radius_px == 0.5 else 0)


@pytest.mark.asyncio
@pytest.mark.parametrize("seed", range(5))
async def test_noisy_oracle_fused_cloud_stays_on_surfaces(seed):
    scene = gen_scene(seed, Difficulty.SPARSE, room_size=(4.0, 4.0))
    trajectory = gen_trajectory(
        scene.layout, TrajectoryPattern.OUTWARD_ORBIT, TrajectoryParams(count=15, image_size=(48, 48), seed=seed)
    )
    plan = plan_iterations(trajectory, 1)
    images = source_images_for(scene, [trajectory.views[i] for i in plan.sources])
    state = await run(plan, trajectory, scene.layout, images, OracleBackend(scene, noise=0.01, seed=seed))
    fused = fuse(state.cloud, 0.02).cloud
    truth = surface_samples(scene, trajectory.views)
    assert chamfer(fused, truth, mode="brute") < 0.02


@pytest.mark.asyncio
async def test_louder_oracle_noise_moves_cloud_further():
    scene, trajectory, plan, images = _setup()
    truth = surface_samples(scene, trajectory.views)
    distances = []
    for noise in (0.005, 0.02):
        state = await run(plan, trajectory, scene.layout, images, OracleBackend(scene, noise=noise, seed=4))
        distances.append(chamfer(state.cloud, truth, sample_n=2048))
    assert distances[0] < distances[1]


@pytest.mark.asyncio
async def test_failure_keeps_finished_checkpoints(tmp_path):
    scene, trajectory, plan, images = _setup()
    with pytest.raises(PipelineError) as err:
        await run(plan, trajectory, scene.layout, images, FailingBackend(scene, fail_at=2), checkpoint_dir=tmp_path)
    assert err.value.completed_iterations == 1
    assert (tmp_path / "iter_00" / "cloud.ply").exists()
    assert (tmp_path / "iter_01" / "view_001_color.png").exists()
    assert (tmp_path / "iter_01" / "view_001_warp.png").exists()
    assert not (tmp_path / "iter_02").exists()
    record = json.loads((tmp_path / "iter_01" / "iteration.json").read_text())
    assert record["views"] == list(plan.batches[0])


@pytest.mark.asyncio
async def test_initialization_failure_reports_zero():
    scene, trajectory, plan, images = _setup()
    with pytest.raises(PipelineError) as err:
        await run(plan, trajectory, scene.layout, images, FailingBackend(scene, fail_at=0))
    assert err.value.completed_iterations == 0


@pytest.mark.asyncio
async def test_run_rejects_inconsistent_input():
    scene, trajectory, plan, images = _setup()
    backend = OracleBackend(scene)
    with pytest.raises(InvalidInputError):
        await run(plan, trajectory, scene.layout, images + images, backend)
    with pytest.raises(InvalidInputError):
        await run(plan, trajectory, scene.layout, images, backend, tau=0.5)
    with pytest.raises(InvalidInputError):
        await run(plan_iterations(20, 1), trajectory, scene.layout, images, backend)


def test_runs_are_deterministic():
    scene, trajectory, plan, images = _setup(views=10, sources=3)
    first = run_sync(plan, trajectory, scene.layout, images, OracleBackend(scene, noise=0.02, seed=1))
    second = run_sync(plan, trajectory, scene.layout, images, OracleBackend(scene, noise=0.02, seed=1))
    assert first.equals(second)
    assert first.manifest["plan"] == plan.to_dict()
    assert [e["index"] for e in first.manifest["iterations"]] == [0, 1, 2]


def test_sources_are_passed_through():
    scene, trajectory, plan, images = _setup(views=8, sources=7)
    state = run_sync(plan, trajectory, scene.layout, images, OracleBackend(scene))
    for idx, image in zip(plan.sources, images):
        assert np.array_equal(state.outputs[idx].color, image)
