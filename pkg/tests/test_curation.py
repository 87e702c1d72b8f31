import numpy as np
import pytest

from core.config import CurationThresholds
from core.curation import check_view_quality, curate
from core.layout import RoomPolygon, SceneLayout, SemanticBox, filter_objects
from core.palette import FIRST_OBJECT_ID


def _room(width, depth, x0=0.0):
    return RoomPolygon(((x0, 0.0), (x0 + width, 0.0), (x0 + width, depth), (x0, depth)), 0.0, 2.8)


def _boxes(count, edge=0.2, x0=0.0, start_id=0):
    # сетка 6 x N внутри комнаты 7 x 3 м
    return [
        SemanticBox(
            id=start_id + i,
            center=(x0 + 1.0 + (i % 6) * 0.9, 0.5 + (i // 6) * 0.4, edge / 2),
            size=(edge, edge, edge),
            yaw=0.0,
            category=FIRST_OBJECT_ID + i % 62,
        )
        for i in range(count)
    ]


# каталог с заложенными нарушениями: площадь 18/21 м2, объектов 35/36
@pytest.mark.parametrize(
    "width, objects, accepted, reason",
    [
        (6.0, 36, False, "floor area"),
        (7.0, 36, True, None),
        (7.0, 35, False, "object count"),
        (6.0, 35, False, "floor area"),
    ],
)
def test_scene_level_thresholds(width, objects, accepted, reason):
    scene = SceneLayout(rooms=(_room(width, 3.0),), boxes=tuple(_boxes(objects)))
    result = curate(scene, panorama_count=1)
    assert result.accepted is accepted
    if reason:
        assert any(reason in r for r in result.reasons)
    else:
        assert result.reasons == []


def test_both_scene_violations_are_listed():
    scene = SceneLayout(rooms=(_room(6.0, 3.0),), boxes=tuple(_boxes(35)))
    result = curate(scene, panorama_count=1)
    assert any("floor area" in r for r in result.reasons)
    assert any("object count" in r for r in result.reasons)


def test_room_nine_square_meters_with_four_objects_is_retained():
    boxes = [SemanticBox(i, (0.5 + 0.6 * i, 1.5, 0.1), (0.2, 0.2, 0.2), 0.0, FIRST_OBJECT_ID) for i in range(4)]
    result = curate(SceneLayout(rooms=(_room(3.0, 3.0),), boxes=tuple(boxes)), panorama_count=1)
    assert result.retained_rooms == [0]
    assert result.room_reasons == {}
    assert not result.accepted  # сцена целиком меньше 20 м2


def test_room_with_three_objects_is_dropped():
    boxes = [SemanticBox(i, (0.5 + 0.6 * i, 1.5, 0.1), (0.2, 0.2, 0.2), 0.0, FIRST_OBJECT_ID) for i in range(3)]
    result = curate(SceneLayout(rooms=(_room(3.0, 3.0),), boxes=tuple(boxes)), panorama_count=1)
    assert result.retained_rooms == []
    assert any("room object count" in r for r in result.room_reasons[0])
    assert "no rooms retained" in result.reasons


def test_small_room_dropped_but_scene_kept():
    rooms = (_room(7.0, 3.0), _room(2.0, 2.0, x0=8.0))
    boxes = _boxes(36) + [SemanticBox(100 + i, (8.5 + 0.3 * i, 1.0, 0.1), (0.2, 0.2, 0.2), 0.0, FIRST_OBJECT_ID) for i in range(4)]
    result = curate(SceneLayout(rooms=rooms, boxes=tuple(boxes)), panorama_count=1)
    assert result.accepted
    assert result.retained_rooms == [0]
    assert any("room floor area" in r for r in result.room_reasons[1])


@pytest.mark.parametrize(
    "extra_edge, accepted",
    [
        (0.05, False),  # слишком маленький объект отфильтрован, остаётся 35
        (2.0, False),  # слишком большой объект отфильтрован
        (0.2, True),
    ],
)
def test_edge_filter_feeds_object_count(extra_edge, accepted):
    boxes = _boxes(35) + [SemanticBox(99, (3.0, 2.7, extra_edge / 2), (extra_edge,) * 3, 0.0, FIRST_OBJECT_ID)]
    scene = filter_objects(SceneLayout(rooms=(_room(7.0, 3.0),), boxes=tuple(boxes)))
    assert curate(scene, panorama_count=1).accepted is accepted


def test_rendering_count_criterion():
    scene = SceneLayout(rooms=(_room(7.0, 3.0),), boxes=tuple(_boxes(36)))
    result = curate(scene, panorama_count=0)
    assert not result.accepted
    assert any("renderings" in r for r in result.reasons)


def test_custom_thresholds():
    scene = SceneLayout(rooms=(_room(3.0, 3.0),), boxes=tuple(_boxes(5, x0=-0.9)))
    thresholds = CurationThresholds(min_scene_area=5.0, min_scene_objects=4, min_room_area=5.0, min_room_objects=1)
    assert curate(scene, 1, thresholds).accepted


def test_result_serializes():
    scene = SceneLayout(rooms=(_room(6.0, 3.0),), boxes=())
    data = curate(scene, 1).to_dict()
    assert data["accepted"] is False
    assert "0" in data["room_reasons"]


def test_view_quality_flags():
    layout = SceneLayout(
        rooms=(_room(4.0, 4.0),),
        boxes=(SemanticBox(1, (2.0, 2.0, 0.5), (1.0, 1.0, 1.0), 0.0, FIRST_OBJECT_ID),),
    )
    gray = np.full((8, 8, 3), 0.5)
    assert check_view_quality(np.array([1.0, 1.0, 1.2]), gray, layout) == []
    assert any("collides with box 1" in r for r in check_view_quality(np.array([2.0, 2.0, 0.5]), gray, layout))
    assert any("over-exposed" in r for r in check_view_quality(np.array([1.0, 1.0, 1.2]), np.ones((8, 8, 3)), layout))
    assert any("under-lit" in r for r in check_view_quality(np.array([1.0, 1.0, 1.2]), np.zeros((8, 8, 3)), layout))
