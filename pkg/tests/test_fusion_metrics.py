import math

import numpy as np
import pytest

from core.errors import InvalidInputError
from core.fusion import fuse
from core.metrics import chamfer, psnr, ssim
from core.warp import GlobalPointCloud


def _cloud(positions, confidence, views=None):
    count = len(positions)
    return GlobalPointCloud(
        positions=positions,
        colors=np.zeros((count, 3)),
        semantics=np.full(count, 6),
        confidence=confidence,
        source_view=views if views is not None else np.arange(count),
    )


def test_psnr_identical_is_infinite():
    image = np.random.default_rng(0).random((8, 8, 3))
    assert psnr(image, image) == math.inf


def test_psnr_known_value():
    reference = np.zeros((4, 4, 3))
    assert psnr(reference + 0.1, reference) == pytest.approx(20.0)


def test_psnr_shape_mismatch():
    with pytest.raises(InvalidInputError):
        psnr(np.zeros((4, 4)), np.zeros((4, 5)))


def test_ssim_identity_and_degradation():
    rng = np.random.default_rng(1)
    image = rng.random((24, 24, 3))
    assert ssim(image, image) == pytest.approx(1.0, abs=1e-9)
    noisy = np.clip(image + rng.normal(0.0, 0.2, image.shape), 0.0, 1.0)
    assert ssim(noisy, image) < 0.9


def test_ssim_needs_window_sized_images():
    with pytest.raises(InvalidInputError):
        ssim(np.zeros((8, 8)), np.zeros((8, 8)))


def test_chamfer_known_value():
    assert chamfer(np.array([[0.0, 0.0, 0.0]]), np.array([[1.0, 0.0, 0.0]])) == pytest.approx(2.0)


def test_chamfer_symmetric_and_tree_matches_brute():
    rng = np.random.default_rng(2)
    a = rng.random((700, 3))
    b = rng.random((500, 3)) + 0.05
    assert chamfer(a, b, sample_n=256) == chamfer(b, a, sample_n=256)
    assert abs(chamfer(a, b, mode="tree") - chamfer(a, b, mode="brute")) <= 1e-9
    assert chamfer(a, a) == 0.0


def test_chamfer_rejects_empty_and_bad_mode():
    with pytest.raises(InvalidInputError):
        chamfer(np.zeros((0, 3)), np.zeros((1, 3)))
    with pytest.raises(InvalidInputError):
        chamfer(np.zeros((1, 3)), np.zeros((1, 3)), mode="grid")


def test_fuse_keeps_most_confident_point_per_voxel():
    positions = np.array([[0.01, 0.01, 0.01], [0.02, 0.02, 0.02], [0.03, 0.0, 0.0], [1.0, 1.0, 1.0]])
    fused = fuse(_cloud(positions, [2.0, 3.0, 3.0, 1.5]), voxel=0.1)
    # при равной уверенности побеждает меньший индекс
    assert np.array_equal(fused.cloud.source_view, [1, 3])
    assert fused.provenance == {1: 1, 3: 1}


def test_fuse_is_idempotent_and_sparse():
    rng = np.random.default_rng(3)
    cloud = _cloud(rng.random((500, 3)), 1.0 + rng.random(500), rng.integers(0, 5, 500))
    fused = fuse(cloud, voxel=0.2)
    keys = np.floor(fused.cloud.positions / 0.2).astype(int)
    assert len(np.unique(keys, axis=0)) == len(fused.cloud)
    assert fuse(fused, voxel=0.2).cloud.equals(fused.cloud)
    assert sum(fused.provenance.values()) == len(fused.cloud)


def test_fuse_empty_and_bad_voxel():
    assert len(fuse(GlobalPointCloud.empty(), 0.1).cloud) == 0
    with pytest.raises(InvalidInputError):
        fuse(GlobalPointCloud.empty(), 0.0)
