import math

import numpy as np
import pytest

from core.config import TrajectoryParams
from core.errors import InvalidInputError, PlacementError
from core.layout import RoomPolygon, SceneLayout, SemanticBox
from core.palette import FIRST_OBJECT_ID
from core.trajectory import Trajectory, TrajectoryPattern, gen_trajectory, position_problems


def _layout(size=8.0, boxes=()):
    room = RoomPolygon(((0.0, 0.0), (size, 0.0), (size, size), (0.0, size)), 0.0, 2.8)
    return SceneLayout(rooms=(room,), boxes=tuple(boxes))


def _angle(a, b):
    return math.remainder(a - b, 2 * math.pi)


def test_forward_spacing_and_heading():
    trajectory = gen_trajectory(_layout(), TrajectoryPattern.FORWARD, TrajectoryParams(count=6, spacing=0.5, seed=3))
    positions = trajectory.positions()
    steps = np.linalg.norm(np.diff(positions[:, :2], axis=0), axis=1)
    assert np.allclose(steps, 0.5)
    yaws = [view.yaw for view in trajectory.views]
    assert np.allclose([_angle(y, yaws[0]) for y in yaws], 0.0, atol=1e-9)
    # камера смотрит вдоль направления движения
    step = positions[1, :2] - positions[0, :2]
    assert _angle(math.atan2(step[1], step[0]), yaws[0]) == pytest.approx(0.0, abs=1e-9)


def test_outward_orbit_rotates_in_place():
    trajectory = gen_trajectory(_layout(), TrajectoryPattern.OUTWARD_ORBIT, TrajectoryParams(count=8, seed=1))
    positions = trajectory.positions()
    assert np.allclose(positions, positions[0])
    yaws = [view.yaw for view in trajectory.views]
    for a, b in zip(yaws, yaws[1:]):
        assert _angle(b, a) == pytest.approx(math.pi / 4, abs=1e-9)


def test_inward_orbit_looks_at_centroid():
    layout = _layout()
    trajectory = gen_trajectory(layout, TrajectoryPattern.INWARD_ORBIT, TrajectoryParams(count=8, seed=2))
    centroid = layout.rooms[0].centroid()
    for view in trajectory.views:
        gaze = np.asarray(centroid) - view.center[:2]
        assert abs(_angle(math.atan2(gaze[1], gaze[0]), view.yaw)) < 1e-6
    radii = np.linalg.norm(trajectory.positions()[:, :2] - centroid, axis=1)
    assert np.allclose(radii, radii[0])


def test_random_walk_is_deterministic():
    params = TrajectoryParams(count=10, spacing=0.6, seed=11)
    first = gen_trajectory(_layout(), TrajectoryPattern.RANDOM_WALK, params)
    second = gen_trajectory(_layout(), TrajectoryPattern.RANDOM_WALK, params)
    assert np.array_equal(first.positions(), second.positions())
    steps = np.linalg.norm(np.diff(first.positions()[:, :2], axis=0), axis=1)
    assert np.all(steps <= 0.6 + 1e-9)
    assert np.all(steps >= 0.3 - 1e-9)


@pytest.mark.parametrize("pattern", list(TrajectoryPattern))
def test_every_pattern_respects_clearance(pattern):
    box = SemanticBox(1, (4.0, 4.0, 0.5), (1.0, 1.0, 1.0), 0.0, FIRST_OBJECT_ID)
    layout = _layout(boxes=[box])
    params = TrajectoryParams(count=8, clearance=0.3, seed=5)
    trajectory = gen_trajectory(layout, pattern, params)
    assert len(trajectory) == 8
    assert position_problems(trajectory, layout, 0.3) == []
    assert np.allclose(trajectory.positions()[:, 2], 1.2)


def test_image_settings_are_applied():
    params = TrajectoryParams(count=3, image_size=(24, 32), fov=math.pi / 3)
    view = gen_trajectory(_layout(), TrajectoryPattern.FORWARD, params).views[0]
    assert (view.height, view.width) == (24, 32)
    assert view.intrinsics.fx == pytest.approx(16.0 / math.tan(math.pi / 6))


def test_room_too_small_raises_placement_error():
    with pytest.raises(PlacementError) as err:
        gen_trajectory(_layout(size=1.0), TrajectoryPattern.FORWARD, TrajectoryParams(clearance=0.6, max_retries=20))
    assert err.value.pattern == "forward"


def test_no_rooms_raises_placement_error():
    with pytest.raises(PlacementError):
        gen_trajectory(SceneLayout(rooms=(), boxes=()), TrajectoryPattern.RANDOM_WALK)


def test_bad_room_index():
    with pytest.raises(InvalidInputError):
        gen_trajectory(_layout(), TrajectoryPattern.FORWARD, room_index=3)


def test_trajectory_json_round_trip():
    trajectory = gen_trajectory(_layout(), TrajectoryPattern.INWARD_ORBIT, TrajectoryParams(count=4))
    restored = Trajectory.from_json(trajectory.to_json())
    assert restored.pattern is TrajectoryPattern.INWARD_ORBIT
    assert restored.views == trajectory.views
