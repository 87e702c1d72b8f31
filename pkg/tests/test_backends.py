import numpy as np
import pytest

from core.backends import (
    BackendFactory,
    BackendType,
    GenerationRequest,
    OracleBackend,
    ToyDiffusionBackend,
    source_images_for,
)
from core.config import CodecConfig, DiffusionConfig, TrajectoryParams
from core.errors import BackendError, InvalidInputError
from core.synth import Difficulty, gen_scene, render_gt
from core.trajectory import TrajectoryPattern, gen_trajectory
from core.warp import WarpedImage
from models.training import build_codec, build_denoiser, latent_layout_for

CONFIG = DiffusionConfig(image_size=16, width=32, depth=1, heads=4, steps=1, sample_steps=2, seed=3)


@pytest.fixture(scope="module")
def scene_and_views():
    scene = gen_scene(21, Difficulty.EMPTY)
    trajectory = gen_trajectory(
        scene.layout, TrajectoryPattern.INWARD_ORBIT, TrajectoryParams(count=8, image_size=(16, 16), seed=1)
    )
    return scene, list(trajectory.views[:4])


def _blank_warp(view):
    return WarpedImage(color=np.zeros((view.height, view.width, 3)), coverage=np.zeros((view.height, view.width), bool))


def _request(scene, views, sources=1, iteration=1):
    return GenerationRequest(
        views=views,
        view_ids=list(range(len(views))),
        source_images=source_images_for(scene, views[:sources]),
        layout=scene.layout,
        warps=[_blank_warp(v) for v in views[sources:]],
        iteration=iteration,
    )


def test_request_validation(scene_and_views):
    scene, views = scene_and_views
    request = _request(scene, views)
    assert request.validate() == []
    assert (request.source_count, request.target_count) == (1, 3)

    request.warps = request.warps[:1]
    assert any("warps" in e for e in request.validate())

    bad = _request(scene, views)
    bad.source_images = [np.zeros((8, 8, 3))]
    assert any("shape" in e for e in bad.validate())

    empty = _request(scene, views)
    empty.source_images = []
    assert any("source image" in e for e in empty.validate())


def test_factory():
    scene = gen_scene(0, Difficulty.EMPTY)
    backend = BackendFactory.create(BackendType.ORACLE, scene=scene, noise=0.01, seed=5)
    assert isinstance(backend, OracleBackend)
    assert backend.describe()["noise"] == 0.01

    with pytest.raises(InvalidInputError):
        BackendFactory.create(BackendType.ORACLE)
    with pytest.raises(InvalidInputError):
        BackendFactory.create(BackendType.TOY)
    with pytest.raises(InvalidInputError):
        BackendFactory.create("diffusers")


@pytest.mark.parametrize("noise, confidence", [(-0.1, 2.0), (0.0, 1.0)])
def test_oracle_rejects_bad_settings(noise, confidence):
    with pytest.raises(InvalidInputError):
        OracleBackend(gen_scene(0, Difficulty.EMPTY), noise=noise, confidence=confidence)


@pytest.mark.asyncio
async def test_oracle_reproduces_ground_truth(scene_and_views):
    scene, views = scene_and_views
    backend = OracleBackend(scene, confidence=3.0)
    request = _request(scene, views)
    request.source_images = [np.full((16, 16, 3), 0.25)]
    maps = await backend.generate(request)

    assert len(maps) == 4
    # цвет источника берётся из запроса, а не из рендера
    np.testing.assert_array_equal(maps[0].color, 0.25)
    for view, out in zip(views[1:], maps[1:]):
        truth = render_gt(scene, view)
        np.testing.assert_array_equal(out.color, truth.color)
        np.testing.assert_array_equal(out.semantic, truth.semantic)
        np.testing.assert_array_equal(out.depth, truth.depth)
    assert all(np.all(m.confidence == 3.0) for m in maps)

    # повторный вызов отдаёт закешированные карты
    again = await backend.generate(_request(scene, views))
    assert again[2] is maps[2]


@pytest.mark.asyncio
async def test_oracle_noise_is_seeded(scene_and_views):
    scene, views = scene_and_views
    first = await OracleBackend(scene, noise=0.05, seed=7).generate(_request(scene, views))
    second = await OracleBackend(scene, noise=0.05, seed=7).generate(_request(scene, views))
    other = await OracleBackend(scene, noise=0.05, seed=8).generate(_request(scene, views))

    truth = render_gt(scene, views[1]).depth
    valid = truth > 0
    np.testing.assert_array_equal(first[1].depth, second[1].depth)
    assert not np.array_equal(first[1].depth, other[1].depth)
    assert not np.allclose(first[1].depth[valid], truth[valid])
    assert np.all(first[1].depth[~valid] == 0)
    assert np.all(first[1].scm.mask == (first[1].depth > 0))


@pytest.mark.asyncio
async def test_oracle_noise_moves_points_along_rays_in_meters(scene_and_views):
    scene, views = scene_and_views
    maps = await OracleBackend(scene, noise=0.01, seed=3).generate(_request(scene, views))
    clean = render_gt(scene, views[2]).scm
    noisy = maps[2].scm
    valid = clean.mask & noisy.mask
    shift = noisy.points[valid] - clean.points[valid]
    rays = (clean.points - views[2].center)[valid]
    # сдвиг коллинеарен лучу, его длина в метрах имеет разброс noise независимо от пикселя
    cross = np.linalg.norm(np.cross(shift, rays), axis=-1) / np.linalg.norm(rays, axis=-1)
    assert np.all(cross < 1e-9)
    assert np.std(np.linalg.norm(shift, axis=-1) * np.sign(np.sum(shift * rays, axis=-1))) == pytest.approx(0.01, rel=0.2)


@pytest.mark.asyncio
async def test_backend_limits(scene_and_views):
    scene, views = scene_and_views
    with pytest.raises(BackendError):
        await OracleBackend(scene, max_views=2).generate(_request(scene, views))

    request = _request(scene, views)
    request.warps = []
    with pytest.raises(InvalidInputError):
        await OracleBackend(scene).generate(request)


@pytest.fixture(scope="module")
def toy_backend():
    codec_config = CodecConfig()
    latent = latent_layout_for(CONFIG, codec_config)
    codec = build_codec(codec_config)
    denoiser = build_denoiser(CONFIG, latent)
    denoiser.eval()
    return BackendFactory.create(BackendType.TOY, codec=codec, denoiser=denoiser, sample_steps=2, seed=4)


@pytest.mark.asyncio
async def test_toy_backend_maps(scene_and_views, toy_backend):
    scene, views = scene_and_views
    assert isinstance(toy_backend, ToyDiffusionBackend)
    request = _request(scene, views, sources=2)
    maps = await toy_backend.generate(request)

    assert len(maps) == 4
    np.testing.assert_array_equal(maps[0].color, request.source_images[0])
    np.testing.assert_array_equal(maps[1].color, request.source_images[1])
    for out in maps:
        assert out.semantic.shape == (16, 16)
        assert out.depth.shape == (16, 16)
        assert out.color.shape == (16, 16, 3)
        assert out.scm.points.shape == (16, 16, 3)
        assert np.all(out.confidence > 1.0)
        assert np.all(out.depth[~out.scm.mask] == 0)
        assert np.all(out.depth[out.scm.mask] > 0)


@pytest.mark.asyncio
async def test_toy_backend_is_seeded_per_iteration(scene_and_views, toy_backend):
    scene, views = scene_and_views
    first = await toy_backend.generate(_request(scene, views, iteration=1))
    second = await toy_backend.generate(_request(scene, views, iteration=1))
    np.testing.assert_array_equal(first[2].color, second[2].color)


@pytest.mark.asyncio
async def test_toy_backend_rejects_other_sizes(toy_backend):
    scene = gen_scene(21, Difficulty.EMPTY)
    views = list(
        gen_trajectory(
            scene.layout, TrajectoryPattern.INWARD_ORBIT, TrajectoryParams(count=8, image_size=(32, 32), seed=1)
        ).views[:2]
    )
    with pytest.raises(BackendError):
        await toy_backend.generate(_request(scene, views))
