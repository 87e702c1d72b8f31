import json
import math

import pytest
from pydantic import ValidationError

from core.config import (
    PACKAGE_VERSION,
    DiffusionConfig,
    PipelineConfig,
    RunConfig,
    SpatialGenConfig,
    TrajectoryParams,
    WarpConfig,
    load_config,
)


def test_defaults():
    config = load_config(None)
    assert config == SpatialGenConfig()
    assert config.trajectory.camera_height == 1.2
    assert config.trajectory.fov == pytest.approx(math.pi / 2)
    assert config.raster.tie_epsilon == 1e-5
    assert config.diffusion.source_counts == [1, 3, 7]
    assert config.pipeline.tau == 1.5


def test_yaml_overrides(tmp_path):
    path = tmp_path / "spatialgen.yaml"
    path.write_text("trajectory:\n  spacing: 0.25\npipeline:\n  voxel: 0.05\n  sources: 3\n")
    config = load_config(str(path))
    assert config.trajectory.spacing == 0.25
    assert config.pipeline.voxel == 0.05
    assert config.pipeline.sources == 3
    # остальное: значения по умолчанию
    assert config.codec == SpatialGenConfig().codec


def test_json_is_accepted(tmp_path):
    path = tmp_path / "spatialgen.json"
    path.write_text(json.dumps({"warp": {"radius_px": 1.5}}))
    assert load_config(str(path)).warp.radius_px == 1.5


@pytest.mark.parametrize("content", ["pipeline:\n  tau: 0.5\n", "::: not yaml [", "trajectory: 3\n"])
def test_bad_file_falls_back_to_defaults(tmp_path, content):
    path = tmp_path / "bad.yaml"
    path.write_text(content)
    assert load_config(str(path)) == SpatialGenConfig()


def test_missing_file_falls_back_to_defaults(tmp_path):
    assert load_config(str(tmp_path / "absent.yaml")) == SpatialGenConfig()


@pytest.mark.parametrize(
    "model, values",
    [
        (TrajectoryParams, {"count": 1}),
        (TrajectoryParams, {"fov": math.pi}),
        (WarpConfig, {"radius_px": 0.4}),
        (PipelineConfig, {"tau": 0.9}),
        (PipelineConfig, {"oracle_confidence": 1.0}),
        (DiffusionConfig, {"source_counts": [2]}),
        (DiffusionConfig, {"source_counts": []}),
    ],
)
def test_validation(model, values):
    with pytest.raises(ValidationError):
        model(**values)


def test_run_config_write(tmp_path):
    manifest = RunConfig(command="synth gen", params={"difficulty": "sparse"}, seeds={"scene": 4}, outputs=["a.json"])
    path = manifest.write(tmp_path / "out")
    assert path == tmp_path / "out" / "manifest.json"
    data = json.loads(path.read_text())
    assert data["version"] == PACKAGE_VERSION
    assert data["seeds"] == {"scene": 4}
    assert data["threads"] == 1

    named = manifest.write(tmp_path, "scene.manifest.json")
    assert named.name == "scene.manifest.json"
